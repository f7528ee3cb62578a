"""Single decision trees: Gini-driven recursive binary splitting.

Trees are grown over the conventions of the assortment problem: on purely
binary data every threshold is 0.5 and a dimension can split at most once
along any root-to-leaf path (a structural consequence of midpoint thresholds
between distinct observed values).  Leaf labels are the chosen item of one
weight-proportional random in-leaf observation, not a majority vote.

Public nodes use 1-based dimension indices (dim j tests feature column j-1,
i.e. product j for j <= N); labels are items in {0..N}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .core import Transaction


@dataclass(frozen=True)
class TreeParams:
    mtry: int
    leaf_min: int = 1

    def __post_init__(self):
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.leaf_min < 1:
            raise ValueError("leaf_min must be >= 1")


@dataclass(frozen=True)
class TreeNode:
    """Internal node (dim, threshold, children) or leaf (label)."""

    dim: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    label: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    @classmethod
    def leaf(cls, label: int) -> "TreeNode":
        return cls(label=int(label))

    @classmethod
    def internal(cls, dim: int, threshold: float,
                 left: "TreeNode", right: "TreeNode") -> "TreeNode":
        return cls(dim=int(dim), threshold=float(threshold), left=left, right=right)


def gini_index(partition: Sequence, total: int) -> float:
    """Weighted Gini impurity of a partition given per-region class counts.

    Each region is a mapping class -> count or an array of counts; empty
    regions contribute nothing.
    """
    if total <= 0:
        raise ValueError("total count must be positive")
    g = 0.0
    for region in partition:
        counts = np.asarray(list(region.values()) if isinstance(region, dict)
                            else region, dtype=float)
        if np.any(counts < 0):
            raise ValueError("class counts must be non-negative")
        t = counts.sum()
        if t == 0:
            continue
        p = counts / t
        g += (t / total) * float((p * (1.0 - p)).sum())
    return g


def _pack_samples(samples: Sequence[Transaction], n_classes: int | None = None):
    """Compress transactions to unique (x, label) pairs with multiplicities.

    Pairs are ordered by first occurrence, which keeps growth independent of
    any value-based sort order (needed for link-function invariance).
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    X = np.stack([np.asarray(t.x, dtype=np.float64) for t in samples])
    y = np.array([t.chosen for t in samples], dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return compress_rows(X, y) + (n_classes,)


def compress_rows(X: np.ndarray, y: np.ndarray):
    """Unique (row, label) pairs in first-occurrence order plus row -> pair map."""
    T = X.shape[0]
    key = np.column_stack([X, y.astype(np.float64)])
    _, first_idx, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    pair_of_row = rank[inv.ravel()]
    rows = first_idx[order]
    Xu = np.ascontiguousarray(X[rows])
    yu = y[rows].astype(np.int64)
    counts = np.bincount(pair_of_row, minlength=len(rows)).astype(np.int64)
    return Xu, yu, counts, pair_of_row


def grow_tree(samples: Sequence[Transaction], params: TreeParams,
              seed: int, n_classes: int | None = None,
              tree_index: int = 0) -> TreeNode:
    """Grow a tree on the given samples; deterministic in (samples, params, seed)."""
    Xu, yu, w, _, nc = _pack_samples(samples, n_classes)
    arrays = K.grow_tree_arrays(Xu, yu, w, nc, min(params.mtry, Xu.shape[1]),
                                params.leaf_min, seed, tree_index)
    return arrays_to_node(arrays)


def best_split(samples: Sequence[Transaction], candidate_dims: Sequence[int],
               params: TreeParams) -> Optional[tuple[int, float]]:
    """Gini-minimizing (dim, threshold) among the given 1-based candidate
    dims, or None when every candidate split leaves one side empty.

    Ties break to the lowest dimension index, then the lowest threshold.
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    Xu, yu, w, _, nc = _pack_samples(samples)
    total = int(w.sum())
    counts = np.bincount(yu, weights=w, minlength=nc)
    sq_node = float((counts.astype(float) ** 2).sum())

    best: tuple[float, int, float] | None = None
    for dim in sorted(candidate_dims):
        col = Xu[:, dim - 1]
        values = np.unique(col)
        if len(values) < 2:
            continue
        for k in range(len(values) - 1):
            thr = 0.5 * (values[k] + values[k + 1])
            mask = col <= thr
            wl = w[mask]
            cl = np.bincount(yu[mask], weights=wl, minlength=nc).astype(float)
            nl = float(wl.sum())
            cr = counts - cl
            h = float((cl ** 2).sum()) / nl + float((cr ** 2).sum()) / (total - nl)
            cand = (-h, dim, thr)
            if best is None or cand < best:
                best = cand
    if best is None:
        return None
    return best[1], best[2]


def split_gini(samples: Sequence[Transaction], dim: int, threshold: float) -> float:
    """Post-split weighted Gini index of splitting on 1-based ``dim``."""
    Xu, yu, w, _, nc = _pack_samples(samples)
    mask = Xu[:, dim - 1] <= threshold
    left = np.bincount(yu[mask], weights=w[mask], minlength=nc)
    right = np.bincount(yu[~mask], weights=w[~mask], minlength=nc)
    return gini_index([left, right], int(w.sum()))


def tree_max_dim(tree: TreeNode) -> int:
    if tree.is_leaf:
        return 0
    return max(tree.dim, tree_max_dim(tree.left), tree_max_dim(tree.right))


def tree_predict(tree: TreeNode, x: np.ndarray) -> int:
    """Route a feature vector to its leaf and return the leaf label."""
    x = np.asarray(x, dtype=float)
    need = tree_max_dim(tree)
    if need > len(x):
        raise ValueError(f"tree splits on dim {need}, x has {len(x)} entries")
    node = tree
    while not node.is_leaf:
        node = node.left if x[node.dim - 1] <= node.threshold else node.right
    return node.label


def tree_depth(tree: TreeNode) -> int:
    if tree.is_leaf:
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))


def iter_paths(tree: TreeNode, path: tuple[int, ...] = ()):
    """Yield (path of dims, leaf) for every root-to-leaf path."""
    if tree.is_leaf:
        yield path, tree
    else:
        yield from iter_paths(tree.left, path + (tree.dim,))
        yield from iter_paths(tree.right, path + (tree.dim,))


def arrays_to_node(arrays: dict, index: int = 0) -> TreeNode:
    feat = arrays["feature"]
    if feat[index] < 0:
        return TreeNode.leaf(int(arrays["label"][index]))
    return TreeNode.internal(
        int(feat[index]) + 1,
        float(arrays["threshold"][index]),
        arrays_to_node(arrays, int(arrays["left"][index])),
        arrays_to_node(arrays, int(arrays["right"][index])),
    )


def node_to_arrays(tree: TreeNode) -> dict:
    feat: list[int] = []
    thr: list[float] = []
    left: list[int] = []
    right: list[int] = []
    label: list[int] = []

    def visit(node: TreeNode) -> int:
        slot = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(-1)
        if node.is_leaf:
            label[slot] = node.label
        else:
            feat[slot] = node.dim - 1
            thr[slot] = node.threshold
            left[slot] = visit(node.left)
            right[slot] = visit(node.right)
        return slot

    visit(tree)
    return {
        "feature": np.array(feat, dtype=np.int64),
        "threshold": np.array(thr, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "label": np.array(label, dtype=np.int64),
    }


def node_to_json_obj(tree: TreeNode) -> dict:
    if tree.is_leaf:
        return {"label": tree.label}
    return {
        "dim": tree.dim,
        "threshold": tree.threshold,
        "left": node_to_json_obj(tree.left),
        "right": node_to_json_obj(tree.right),
    }


def node_from_json_obj(obj: dict) -> TreeNode:
    if "label" in obj:
        return TreeNode.leaf(obj["label"])
    return TreeNode.internal(obj["dim"], obj["threshold"],
                             node_from_json_obj(obj["left"]),
                             node_from_json_obj(obj["right"]))


def tree_to_json(tree: TreeNode) -> str:
    return json.dumps(node_to_json_obj(tree))


def tree_from_json(text: str) -> TreeNode:
    return node_from_json_obj(json.loads(text))
