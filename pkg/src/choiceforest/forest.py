"""Random-forest estimator: bootstrap, ensemble prediction, MDI importance.

The estimator treats choice estimation as classification of the chosen item
from the offer context.  Raw ensemble output is the fraction of trees voting
for each item; the normalized output conditions on votes that land inside the
offered assortment (plus the no-purchase option) so the result is always a
valid choice distribution.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from . import cart
from .core import (Assortment, ChoiceDistribution, Dataset,
                   DimensionMismatchError)


@dataclass(frozen=True)
class ForestParams:
    """Hyper-parameters; defaults B=1000, z=T, m=ceil(sqrt(d)), l=50 are
    robust across problem setups and need no tuning."""

    n_trees: int = 1000
    subsample: Optional[int] = None          # None -> z = T
    with_replacement: bool = True
    mtry: Optional[int] = None               # None -> ceil(sqrt(d))
    leaf_min: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.leaf_min < 1:
            raise ValueError("leaf_min must be >= 1")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def resolve(self, n_transactions: int, dimension: int) -> "ForestParams":
        z = self.subsample if self.subsample is not None else n_transactions
        m = self.mtry if self.mtry is not None else math.ceil(math.sqrt(dimension))
        return replace(self, subsample=z, mtry=min(m, dimension))


def _thread_count(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("CHOICEFOREST_THREADS", "")
    return max(1, int(env)) if env.strip() else 1


@dataclass
class Forest:
    trees: list[dict]                        # packed node arrays per tree
    params: ForestParams
    n_products: int
    n_features: int = 0
    _packed: dict | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def dimension(self) -> int:
        return self.n_products + self.n_features

    def _pack(self) -> dict:
        if self._packed is None:
            sizes = [t["feature"].shape[0] for t in self.trees]
            offsets = np.zeros(len(sizes) + 1, np.int64)
            np.cumsum(sizes, out=offsets[1:])
            self._packed = {
                "offsets": offsets,
                "feature": np.concatenate([t["feature"] for t in self.trees]),
                "threshold": np.concatenate([t["threshold"] for t in self.trees]),
                "left": np.concatenate([t["left"] for t in self.trees]),
                "right": np.concatenate([t["right"] for t in self.trees]),
                "label": np.concatenate([t["label"] for t in self.trees]),
            }
        return self._packed

    def nodes(self, b: int) -> cart.TreeNode:
        return cart.arrays_to_node(self.trees[b])

    # -- ChoiceModel interface -------------------------------------------
    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        return predict_normalized(self, s)

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        return self.choice_probabilities(s).sample(rng)


def fit(data: Dataset, params: ForestParams,
        threads: Optional[int] = None) -> Forest:
    """Train a forest: per tree, draw the in-bag multiset from a stream keyed
    by (seed, tree index), then grow by recursive Gini splitting.

    Tree training is embarrassingly parallel; results are identical for any
    thread count because every random decision carries its own keyed stream.
    """
    T = data.n_transactions
    if T == 0:
        raise ValueError("dataset is empty")
    p = params.resolve(T, data.dimension)
    if not p.with_replacement and p.subsample > T:
        raise ValueError(f"subsample {p.subsample} > T={T} without replacement")

    Xu, yu, base_counts, pair_of_row = cart.compress_rows(data.x, data.chosen)
    n_classes = data.n_products + 1
    n_pairs = Xu.shape[0]

    def build(b: int) -> dict:
        rows = K.bootstrap_indices(p.seed, b, T, p.subsample, p.with_replacement)
        w = np.bincount(pair_of_row[rows], minlength=n_pairs).astype(np.int64)
        keep = np.flatnonzero(w)
        return K.grow_tree_arrays(np.ascontiguousarray(Xu[keep]), yu[keep],
                                  w[keep], n_classes, p.mtry, p.leaf_min,
                                  p.seed, b)

    n_threads = _thread_count(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(build, range(p.n_trees)))
    else:
        trees = [build(b) for b in range(p.n_trees)]
    return Forest(trees, p, data.n_products, data.n_features)


def _check_dim(f: Forest, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != f.dimension:
        raise DimensionMismatchError(
            f"x has {x.shape[-1]} entries, forest expects {f.dimension}")
    return x


def vote_matrix(f: Forest, X: np.ndarray) -> np.ndarray:
    """(n_rows, N+1) matrix of per-item tree vote counts."""
    X = _check_dim(f, np.atleast_2d(X))
    return K.forest_vote_matrix(f._pack(), X, f.n_products + 1)


def predict_raw(f: Forest, x: np.ndarray) -> ChoiceDistribution:
    """Fraction of trees voting for each item; may put mass on unoffered
    products (support-unconstrained)."""
    votes = vote_matrix(f, x)[0]
    return ChoiceDistribution(votes / f.n_trees)


def predict_normalized(f: Forest, s: Assortment,
                       features: Optional[np.ndarray] = None,
                       include_outside: bool = True) -> ChoiceDistribution:
    """Votes restricted to the offered items then renormalized.

    ``include_outside`` keeps item 0 in the kept set and the denominator
    (the default; dropping it reproduces the literal offered-products-only
    normalization, which annihilates no-purchase mass).  With zero valid
    votes the output falls back to uniform over the kept set.
    """
    if s.n_products != f.n_products:
        raise DimensionMismatchError(
            f"assortment over {s.n_products} products, forest over {f.n_products}")
    x = s.to_x()
    if features is not None:
        features = np.asarray(features, dtype=float)
        if len(features) != f.n_features:
            raise DimensionMismatchError(
                f"{len(features)} customer features, forest expects {f.n_features}")
        x = np.concatenate([x, features])
    elif f.n_features:
        raise DimensionMismatchError("forest was trained with customer features")
    votes = vote_matrix(f, x)[0].astype(float)
    return _normalize_votes(votes, s, include_outside)


def _normalize_votes(votes: np.ndarray, s: Assortment,
                     include_outside: bool) -> ChoiceDistribution:
    keep = np.zeros(s.n_products + 1, dtype=bool)
    if include_outside:
        keep[0] = True
    for j in s.products():
        keep[j] = True
    kept = np.where(keep, votes, 0.0)
    total = kept.sum()
    if total <= 0:
        kept = keep.astype(float)
        total = kept.sum()
    return ChoiceDistribution(kept / total)


def predict_normalized_matrix(f: Forest, X: np.ndarray,
                              masks: list[Assortment],
                              include_outside: bool = True) -> np.ndarray:
    """Batch variant of predict_normalized; row i is normalized on masks[i]."""
    votes = vote_matrix(f, X).astype(float)
    out = np.empty_like(votes)
    for i, s in enumerate(masks):
        out[i] = _normalize_votes(votes[i], s, include_outside).probs
    return out


def mdi(f: Forest, data: Dataset) -> np.ndarray:
    """Mean decrease impurity per dimension (index j-1 = product/feature j).

    Per tree and split: (fraction of in-bag data in the parent node) times the
    Gini reduction of the split, attributed to the split dimension, averaged
    over trees.  In-bag multisets are regenerated from the forest seed, so the
    dataset must be the training data.
    """
    if data.dimension != f.dimension:
        raise DimensionMismatchError(
            f"data dimension {data.dimension} != forest dimension {f.dimension}")
    p = f.params
    T = data.n_transactions
    Xu, yu, _, pair_of_row = cart.compress_rows(data.x, data.chosen)
    n_classes = f.n_products + 1
    out = np.zeros(f.dimension)
    for b, tree in enumerate(f.trees):
        rows = K.bootstrap_indices(p.seed, b, T, p.subsample, p.with_replacement)
        w = np.bincount(pair_of_row[rows], minlength=Xu.shape[0]).astype(np.int64)
        counts = K.tree_node_class_counts(tree, Xu, yu, w, n_classes)
        totals = counts.sum(axis=1).astype(float)
        z = totals[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = (counts / totals[:, None]) ** 2
            gini = 1.0 - np.nan_to_num(frac).sum(axis=1)
        internal = np.flatnonzero(tree["feature"] >= 0)
        for node in internal:
            l, r = tree["left"][node], tree["right"][node]
            n, nl, nr = totals[node], totals[l], totals[r]
            drop = gini[node] - (nl * gini[l] + nr * gini[r]) / n
            out[tree["feature"][node]] += (n / z) * drop
    return out / f.n_trees


def to_json(f: Forest) -> str:
    doc = {
        "params": {
            "n_trees": f.params.n_trees,
            "subsample": f.params.subsample,
            "with_replacement": f.params.with_replacement,
            "mtry": f.params.mtry,
            "leaf_min": f.params.leaf_min,
            "seed": f.params.seed,
        },
        "n_products": f.n_products,
        "n_features": f.n_features,
        "trees": [cart.node_to_json_obj(cart.arrays_to_node(t)) for t in f.trees],
    }
    return json.dumps(doc)


def from_json(text: str) -> Forest:
    doc = json.loads(text)
    trees = [cart.node_to_arrays(cart.node_from_json_obj(t)) for t in doc["trees"]]
    params = ForestParams(**doc["params"])
    return Forest(trees, params, doc["n_products"], doc["n_features"])


def save(f: Forest, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(f))


def load(path: str) -> Forest:
    with open(path) as fh:
        return from_json(fh.read())
