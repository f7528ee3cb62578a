"""Hot numeric kernels shared by the numba and numpy backends.

Every function below is written in the numba-compatible subset of
numpy/python.  At import time the active backend decorates them either with
``numba.njit(cache=True, nogil=True)`` or leaves them as plain functions, so
both backends execute byte-for-byte identical logic.  Select the backend with
the ``CHOICEFOREST_BACKEND`` environment variable (``numba`` when importable,
else ``numpy``).

Randomness is a counter-free SplitMix64 stream.  All stream state is 64-bit
unsigned arithmetic (wrapping), carried as ``np.uint64`` scalars; entry points
run under ``np.errstate(over="ignore")`` so the uninjitted path wraps silently
exactly like the compiled one.  Every random decision is keyed by
(seed, tree index, node path, purpose tag), which makes tree growth
order-independent, thread-safe, and reproducible.
"""

from __future__ import annotations

import os

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S1 = np.uint64(1)

# purpose tags for per-node streams
_TAG_BOOT = np.uint64(0xB007B007B007B007)
_TAG_DIMS = np.uint64(0xD1D1D1D1D1D1D1D1)
_TAG_LABEL = np.uint64(0x1AB31AB31AB31AB3)


def _select_backend() -> str:
    choice = os.environ.get("CHOICEFOREST_BACKEND", "").strip().lower()
    if choice == "numba":
        return "numba"
    if choice == "numpy":
        return "numpy"
    if choice:
        raise ValueError(f"unknown CHOICEFOREST_BACKEND {choice!r}; use 'numba' or 'numpy'")
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _select_backend()

if BACKEND == "numba":
    from numba import njit

    def _kernel(fn):
        return njit(cache=True, nogil=True)(fn)
else:
    def _kernel(fn):
        return fn


@_kernel
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@_kernel
def _next(s):
    """Advance a SplitMix64 stream; returns (new_state, draw)."""
    s = s + _GOLDEN
    return s, _mix64(s)


@_kernel
def _derive(key, tag, path):
    """Key for a (tree, purpose, node-path) stream."""
    return _mix64(_mix64(key ^ tag) ^ path)


@_kernel
def _tree_key(seed, b):
    return _mix64(_mix64(seed + _GOLDEN) ^ (np.uint64(b) * _GOLDEN + _S1))


@_kernel
def _fill_bootstrap(key, n_rows, out):
    """With-replacement draw of len(out) row indices from range(n_rows)."""
    s = key
    nn = np.uint64(n_rows)
    for i in range(out.shape[0]):
        s, r = _next(s)
        out[i] = np.int64(r % nn)


@_kernel
def _fill_subsample(key, n_rows, out):
    """Without-replacement draw via partial Fisher-Yates over range(n_rows)."""
    z = out.shape[0]
    pool = np.arange(n_rows)
    s = key
    for i in range(z):
        s, r = _next(s)
        j = i + np.int64(r % np.uint64(n_rows - i))
        pool[i], pool[j] = pool[j], pool[i]
        out[i] = pool[i]


@_kernel
def _leaf_label(key, path, idx, start, end, y, w, total_w):
    """Class label of one weight-proportional random in-node observation."""
    s = _derive(key, _TAG_LABEL, path)
    s, r = _next(s)
    target = np.int64(r % np.uint64(total_w))
    acc = np.int64(0)
    lab = y[idx[start]]
    for i in range(start, end):
        acc += w[idx[i]]
        if acc > target:
            lab = y[idx[i]]
            break
    return lab


@_kernel
def _node_best_split(X, y, w, idx, start, end, counts, total_w, mtry,
                     dims_key, perm, vbuf, cl):
    """Best (dim, threshold) for a node, or dim = -1 when no valid split.

    Candidate dimensions are visited in a keyed random order; dimensions that
    are constant within the node do not consume one of the ``mtry`` candidate
    slots (the draw moves on), so the node turns into a leaf only when no
    dimension at all admits a split.  Ties in the post-split Gini index break
    to the lowest dimension index, then the lowest threshold.
    """
    d = X.shape[1]
    n = end - start
    K = counts.shape[0]

    s = dims_key
    for j in range(d):
        perm[j] = j
    for j in range(d - 1):
        s, r = _next(s)
        k = j + np.int64(r % np.uint64(d - j))
        t = perm[j]
        perm[j] = perm[k]
        perm[k] = t

    best_h = -1.0
    best_dim = np.int64(-1)
    best_thr = 0.0
    evaluated = 0
    tw = float(total_w)

    for t in range(d):
        dim = perm[t]
        v0 = X[idx[start], dim]
        allsame = True
        for i in range(start, end):
            v = X[idx[i], dim]
            vbuf[i - start] = v
            if v != v0:
                allsame = False
        if allsame:
            continue
        evaluated += 1

        # class-count sum of squares on the right starts as the full node
        for c in range(K):
            cl[c] = 0
        sq_l = 0.0
        sq_r = 0.0
        for c in range(K):
            sq_r += float(counts[c]) * float(counts[c])

        order = np.argsort(vbuf[:n])
        nl = np.int64(0)
        dim_h = -1.0
        dim_thr = 0.0
        for k in range(n - 1):
            o = order[k]
            row = idx[start + o]
            c = y[row]
            wt = w[row]
            fr = float(counts[c] - cl[c])
            fw = float(wt)
            sq_l += fw * (2.0 * float(cl[c]) + fw)
            sq_r += fw * fw - 2.0 * fw * fr
            cl[c] += wt
            nl += wt
            hi = vbuf[order[k + 1]]
            if hi != vbuf[o]:
                h = sq_l / float(nl) + sq_r / (tw - float(nl))
                if h > dim_h:
                    dim_h = h
                    dim_thr = 0.5 * (vbuf[o] + hi)
        if dim_h > best_h or (dim_h == best_h and dim < best_dim):
            best_h = dim_h
            best_dim = dim
            best_thr = dim_thr
        if evaluated >= mtry:
            break

    return best_dim, best_thr


@_kernel
def _grow_tree(X, y, w, n_classes, mtry, leaf_min, key,
               feat, thr, left, right, label):
    """Grow one tree over unique (x, label) pairs with integer weights.

    Returns the number of nodes written into the output arrays.  Recursion is
    an explicit stack; all random draws are keyed by the node path so the
    visit order is irrelevant.
    """
    n_pairs, d = X.shape
    idx = np.arange(n_pairs)
    tmp = np.empty(n_pairs, np.int64)
    counts = np.zeros(n_classes, np.int64)
    cl = np.zeros(n_classes, np.int64)
    perm = np.empty(d, np.int64)
    vbuf = np.empty(n_pairs, np.float64)

    cap = 2 * n_pairs + 1
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    st_path = np.empty(cap, np.uint64)

    top = 0
    st_start[top] = 0
    st_end[top] = n_pairs
    st_node[top] = 0
    st_path[top] = _S1
    top += 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        node = st_node[top]
        path = st_path[top]

        total_w = np.int64(0)
        for c in range(n_classes):
            counts[c] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += w[idx[i]]
            total_w += w[idx[i]]

        bdim = np.int64(-1)
        bthr = 0.0
        if total_w >= leaf_min:
            bdim, bthr = _node_best_split(
                X, y, w, idx, start, end, counts, total_w, mtry,
                _derive(key, _TAG_DIMS, path), perm, vbuf, cl)

        if bdim < 0:
            feat[node] = -1
            thr[node] = 0.0
            left[node] = -1
            right[node] = -1
            label[node] = _leaf_label(key, path, idx, start, end, y, w, total_w)
            continue

        # stable partition: left keeps slice order, right keeps slice order
        nl = 0
        nr = 0
        for i in range(start, end):
            v = idx[i]
            if X[v, bdim] <= bthr:
                idx[start + nl] = v
                nl += 1
            else:
                tmp[nr] = v
                nr += 1
        for j in range(nr):
            idx[start + nl + j] = tmp[j]

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feat[node] = bdim
        thr[node] = bthr
        left[node] = lnode
        right[node] = rnode
        label[node] = -1

        st_start[top] = start
        st_end[top] = start + nl
        st_node[top] = lnode
        st_path[top] = path + path
        top += 1
        st_start[top] = start + nl
        st_end[top] = end
        st_node[top] = rnode
        st_path[top] = path + path + _S1
        top += 1

    return n_nodes


@_kernel
def _forest_votes(feat, thr, left, right, label, offsets, X, votes):
    """Per-row class vote counts across all trees of a packed forest."""
    n_trees = offsets.shape[0] - 1
    for r in range(X.shape[0]):
        for b in range(n_trees):
            base = offsets[b]
            node = np.int64(0)
            while feat[base + node] >= 0:
                if X[r, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            votes[r, label[base + node]] += 1


@_kernel
def _tree_route(feat, thr, left, right, x):
    """Leaf node index reached by a single feature vector in one tree."""
    node = np.int64(0)
    while feat[node] >= 0:
        if x[feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@_kernel
def _node_class_counts(feat, thr, left, right, n_nodes, X, y, w, out):
    """Weighted class counts at every node visited by the in-bag pairs."""
    for p in range(X.shape[0]):
        if w[p] == 0:
            continue
        node = np.int64(0)
        while True:
            out[node, y[p]] += w[p]
            if feat[node] < 0:
                break
            if X[p, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]


def seed_key(seed: int) -> int:
    """Python-int mix of a user seed into the master stream key."""
    z = (int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        return int(_mix64(np.uint64(z)))


def tree_stream_key(seed: int, b: int) -> int:
    with np.errstate(over="ignore"):
        return int(_tree_key(np.uint64(seed_key(seed)), np.uint64(b)))


def bootstrap_indices(seed: int, b: int, n_rows: int, z: int,
                      with_replacement: bool) -> np.ndarray:
    """In-bag row indices for tree ``b``; a pure function of its arguments."""
    out = np.empty(z, np.int64)
    key = np.uint64(tree_stream_key(seed, b)) ^ _TAG_BOOT
    with np.errstate(over="ignore"):
        if with_replacement:
            _fill_bootstrap(np.uint64(key), n_rows, out)
        elif z == n_rows:
            out[:] = np.arange(n_rows)
        else:
            _fill_subsample(np.uint64(key), n_rows, out)
    return out


def grow_tree_arrays(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                     n_classes: int, mtry: int, leaf_min: int,
                     seed: int, b: int) -> dict:
    """Grow one tree; returns packed node arrays trimmed to size."""
    n_pairs = X.shape[0]
    cap = 2 * n_pairs + 1
    feat = np.empty(cap, np.int64)
    thr = np.empty(cap, np.float64)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    label = np.empty(cap, np.int64)
    key = np.uint64(tree_stream_key(seed, b))
    with np.errstate(over="ignore"):
        n_nodes = _grow_tree(X, y, w, n_classes, mtry, np.int64(leaf_min),
                             key, feat, thr, left, right, label)
    return {
        "feature": feat[:n_nodes].copy(),
        "threshold": thr[:n_nodes].copy(),
        "left": left[:n_nodes].copy(),
        "right": right[:n_nodes].copy(),
        "label": label[:n_nodes].copy(),
    }


def forest_vote_matrix(packed: dict, X: np.ndarray, n_classes: int) -> np.ndarray:
    votes = np.zeros((X.shape[0], n_classes), np.int64)
    with np.errstate(over="ignore"):
        _forest_votes(packed["feature"], packed["threshold"], packed["left"],
                      packed["right"], packed["label"], packed["offsets"],
                      np.ascontiguousarray(X, dtype=np.float64), votes)
    return votes


def tree_leaf_index(tree: dict, x: np.ndarray) -> int:
    with np.errstate(over="ignore"):
        return int(_tree_route(tree["feature"], tree["threshold"], tree["left"],
                               tree["right"], np.asarray(x, dtype=np.float64)))


def tree_node_class_counts(tree: dict, X: np.ndarray, y: np.ndarray,
                           w: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((tree["feature"].shape[0], n_classes), np.int64)
    with np.errstate(over="ignore"):
        _node_class_counts(tree["feature"], tree["threshold"], tree["left"],
                           tree["right"], tree["feature"].shape[0],
                           X, y, w, out)
    return out
