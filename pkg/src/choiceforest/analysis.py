"""Theory-facing instruments: potential nearest neighbors, distance Monte
Carlo, the theoretical Gini oracle, and the ranking-recovery experiment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import forest as forest_mod
from . import _kernels as K
from .core import Assortment, Dataset, symmetric_distance
from .forest import Forest, ForestParams


# ---------------------------------------------------------------------------
# potential nearest neighbors
# ---------------------------------------------------------------------------

def is_pnn(s: Assortment, candidate: Assortment,
           family: Sequence[Assortment]) -> bool:
    """True iff no family member's symmetric difference with ``s`` is a strict
    subset of the candidate's."""
    masks = [f.mask for f in family]
    if candidate.mask not in masks:
        raise ValueError("candidate must belong to the training family")
    diff_c = s.mask ^ candidate.mask
    for m in masks:
        diff_o = s.mask ^ m
        if diff_o != diff_c and (diff_o & ~diff_c) == 0:
            return False
    return True


def pnn_set(s: Assortment, family: Sequence[Assortment]) -> list[Assortment]:
    return [c for c in family if is_pnn(s, c, family)]


@dataclass(frozen=True)
class PnnReport:
    target: Assortment
    family: tuple
    pnn_flags: tuple                      # aligned with family
    distances: tuple                      # symmetric distance to target
    frequencies: tuple                    # co-leaf share across the forest

    def as_dict(self) -> dict:
        return {
            "target": self.target.products(),
            "members": [
                {"assortment": f.products(), "pnn": bool(p),
                 "distance": int(d), "frequency": float(fr)}
                for f, p, d, fr in zip(self.family, self.pnn_flags,
                                       self.distances, self.frequencies)
            ],
        }


def pnn_coleaf_frequency(f: Forest, s: Assortment,
                         family: Sequence[Assortment],
                         check_pnn: bool = False) -> PnnReport:
    """How often each training assortment shares the target's terminal leaf.

    Requires leaf_min = 1 (the leaf/PNN correspondence needs fully grown
    trees).  ``check_pnn`` raises when any co-leaf occupant is not a PNN.
    """
    if f.params.leaf_min != 1:
        raise ValueError("co-leaf analysis requires a forest grown with leaf_min=1")
    xs = np.stack([m.to_x() for m in family])
    xt = s.to_x()
    freq = np.zeros(len(family))
    for tree in f.trees:
        target_leaf = K.tree_leaf_index(tree, xt)
        occupants = [i for i, row in enumerate(xs)
                     if K.tree_leaf_index(tree, row) == target_leaf]
        for i in occupants:
            freq[i] += 1.0 / len(occupants)
    freq /= f.n_trees
    flags = tuple(is_pnn(s, m, family) if m.mask != s.mask else True
                  for m in family)
    if check_pnn:
        for i, (fl, fr) in enumerate(zip(flags, freq)):
            if fr > 0 and not fl:
                raise AssertionError(
                    f"non-PNN assortment {family[i].products()} co-leafed with target")
    dists = tuple(symmetric_distance(s, m) for m in family)
    return PnnReport(s, tuple(family), flags, dists, tuple(freq))


def random_split_coleaf(s_mask: int, family_masks: Sequence[int],
                        n_products: int, rng: np.random.Generator) -> int:
    """Co-leaf occupant of the target under one random-split tree.

    The tree follows a uniformly random attempt order over the products; a
    split whose two sides would not both contain training data is skipped
    (the draw moves on), so with leaf size one every pair of distinct training
    assortments ends up separated and exactly one occupant remains.
    """
    members = list(family_masks)
    for d in rng.permutation(n_products):
        bit = (s_mask >> int(d)) & 1
        side = [m for m in members if ((m >> int(d)) & 1) == bit]
        if 0 < len(side) < len(members):
            members = side
    return members[0]


# ---------------------------------------------------------------------------
# distance Monte Carlo
# ---------------------------------------------------------------------------

def mean_largest_binary_zeros(n: int, m: int, reps: int,
                              rng: np.random.Generator) -> dict:
    """Average number of zero bits in the maximum of m uniform n-bit numbers.

    This equals the expected distance from an unseen assortment to the
    training assortment sharing its leaf under random splitting with m
    uniformly drawn training assortments.
    """
    if not 1 <= n <= 63:
        raise ValueError("n must be in 1..63")
    if reps < 1 or m < 1:
        raise ValueError("reps and m must be >= 1")
    zero_counts = np.empty(reps)
    chunk = max(1, min(reps, 10_000_000 // max(m, 1)))
    done = 0
    while done < reps:
        take = min(chunk, reps - done)
        draws = rng.integers(0, 1 << n, size=(take, m), dtype=np.uint64)
        mx = draws.max(axis=1)
        zero_counts[done:done + take] = n - np.bitwise_count(mx)
        done += take
    return {"mean": float(zero_counts.mean()), "std": float(zero_counts.std()),
            "reps": reps, "n": n, "m": m}


def exact_largest_binary_zeros(n: int, m: int) -> float:
    """Closed-form E[zeros of max of m uniform n-bit numbers]; enumeration
    over the max value, independent of any sampler."""
    total = 1 << n
    vals = np.arange(total, dtype=np.uint64)
    p_max = ((vals + 1) / total) ** m - (vals / total) ** m
    zeros = n - np.bitwise_count(vals)
    return float((zeros * p_max).sum())


def pnn_distance_mc(n: int, m: int, reps: int, seed: int,
                    mode: str = "mean-largest-binary") -> dict:
    rng = np.random.default_rng(seed)
    if mode == "mean-largest-binary":
        return mean_largest_binary_zeros(n, m, reps, rng)
    if mode == "all-pnn-max":
        maxima = np.empty(reps)
        for r in range(reps):
            fam_masks = rng.integers(0, 1 << n, size=m, dtype=np.int64)
            target = int(rng.integers(0, 1 << n))
            family = [Assortment(n, int(v)) for v in set(int(v) for v in fam_masks)]
            s = Assortment(n, target)
            pnns = [c for c in family
                    if c.mask == target or is_pnn(s, c, family)]
            maxima[r] = max(symmetric_distance(s, c) for c in pnns)
        return {"mean": float(maxima.mean()), "std": float(maxima.std()),
                "reps": reps, "n": n, "m": m}
    raise ValueError(f"unknown mode {mode!r}")


def prop3_bound(n: int, slack: float = 0.455) -> float:
    """Upper bound ceil(log2(n)/2) + slack on the expected PNN distance at
    m = ceil(2^n / n) training assortments."""
    return float(np.ceil(np.log2(n) / 2.0) + slack)


# ---------------------------------------------------------------------------
# theoretical Gini oracle and ranking recovery
# ---------------------------------------------------------------------------

def theoretical_gini(j: int, n: int) -> float:
    """Limit of the post-split Gini index for a first split on product j under
    the single ranking 1 > 2 > ... > n > 0 with uniform random assortments."""
    if not 1 <= j <= n:
        raise ValueError(f"product {j} outside 1..{n}")
    return 2.0 / 3.0 - 1.0 / (3.0 * 2 ** (2 * j - 2)) - 1.0 / (3.0 * 2 ** (2 * n - 2))


def first_split_gini(masks: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Empirical post-split Gini of a root split on each product."""
    masks = np.asarray(masks, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    T = len(masks)
    out = np.empty(n)
    for j in range(n):
        side = (masks >> j) & 1
        counts = np.bincount(labels + side * (n + 1),
                             minlength=2 * (n + 1)).astype(float)
        g = 0.0
        for half in (counts[:n + 1], counts[n + 1:]):
            t = half.sum()
            if t > 0:
                p = half / t
                g += (t / T) * float((p * (1 - p)).sum())
        out[j] = g
    return out


def ranking_labels(masks: np.ndarray, n: int) -> np.ndarray:
    """Choices of the single ranking 1 > ... > n > 0: the lowest offered
    product, or 0 for the empty assortment."""
    masks = np.asarray(masks, dtype=np.int64)
    low = masks & -masks
    labels = np.zeros(len(masks), dtype=np.int64)
    nz = low > 0
    labels[nz] = np.log2(low[nz]).astype(np.int64) + 1
    return labels


def sample_ranking_masks(n: int, t: int, scheme: str,
                         rng: np.random.Generator) -> np.ndarray:
    """Assortment masks for the ranking-recovery protocols.

    ``uniform``: all 2^n subsets equally likely.  ``dirichlet``: subset
    probabilities drawn once from a flat Dirichlet over all 2^n subsets.
    ``per-product``: per-product inclusion probabilities drawn from a clipped
    normal(0.5, 0.15), then independent inclusion.
    """
    if scheme == "uniform":
        return rng.integers(0, 1 << n, size=t, dtype=np.int64)
    if scheme == "dirichlet":
        probs = rng.dirichlet(np.ones(1 << n))
        return rng.choice(1 << n, size=t, p=probs).astype(np.int64)
    if scheme == "per-product":
        p = np.clip(rng.normal(0.5, 0.15, size=n), 0.0, 1.0)
        bits = rng.random((t, n)) < p[None, :]
        return (bits.astype(np.int64) @ (1 << np.arange(n, dtype=np.int64)))
    raise ValueError(f"unknown sampling scheme {scheme!r}")


def correct_split_count(tree: dict, n: int,
                        column_of_product: Optional[np.ndarray] = None) -> int:
    """Consecutive splits matching products 1, 2, 3, ... along the branch
    where each split product is absent (the subtree of assortments the
    ranking has not yet resolved); counting stops at the first mismatch.

    ``column_of_product[i]`` gives the feature column holding product i+1
    when the training columns were relabeled.
    """
    node = 0
    expected = 0
    feat = tree["feature"]
    while feat[node] >= 0 and expected < n:
        col = expected if column_of_product is None else int(column_of_product[expected])
        if int(feat[node]) != col:
            break
        expected += 1
        node = int(tree["left"][node])
    return expected


def ranking_recovery(n: int, t: int, scheme: str, reps: int, seed: int,
                     n_trees: int = 10, mtry: Optional[int] = None,
                     leaf_min: int = 1, decorrelate: bool = True) -> dict:
    """Mean/std of the correct-split count over ``reps`` datasets times
    ``n_trees`` inspected trees (subsampling z = T without replacement).

    ``decorrelate`` relabels the product columns with a random permutation
    per dataset (the walk follows the permuted columns).  Equal-Gini splits
    break deterministically to the lowest column index here, which would
    otherwise leak the ranking into tie resolution on small noisy nodes and
    inflate the count; relabeling makes tie resolution uniform over the tied
    products without touching the estimator.
    """
    counts = []
    mtry = n if mtry is None else mtry
    for r in range(reps):
        rng = np.random.default_rng((seed, r))
        masks = sample_ranking_masks(n, t, scheme, rng)
        labels = ranking_labels(masks, n)
        x = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
        if decorrelate:
            column_of_product = rng.permutation(n)
            xp = np.empty_like(x)
            xp[:, column_of_product] = x
            x = xp
        else:
            column_of_product = None
        data = Dataset(x, labels, n)
        params = ForestParams(n_trees=n_trees, with_replacement=False,
                              mtry=mtry, leaf_min=leaf_min, seed=int(seed) + r)
        f = forest_mod.fit(data, params)
        counts.extend(correct_split_count(tree, n, column_of_product)
                      for tree in f.trees)
    arr = np.array(counts, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)),
            "n": n, "t": t, "scheme": scheme, "reps": reps,
            "trees_per_dataset": n_trees, "samples": len(arr)}
