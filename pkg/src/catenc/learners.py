"""Desk-scale regression learners used to score encodings.

The tree grower is a single numba kernel (greedy variance-reduction CART with
midpoint thresholds and a fixed minimum leaf size); ridge, bagging and
gradient boosting are thin layers on top. Everything is deterministic given
the LearnerSpec seed: forests derive per-tree seeds as seed + tree index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .numerics import ridge_solve

LEARNER_KINDS = ("ridge", "tree", "forest", "boost")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    lambda2: float = 1e-6
    max_depth: int | None = None        # defaults: 6 for tree/forest, 3 for boost
    n_trees: int | None = None          # defaults: 100 for forest, 200 for boost
    learning_rate: float = 0.1
    feature_subsample: float | None = None  # default: 1/3 for forest, 1.0 otherwise
    bootstrap: bool = True
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; valid: {', '.join(LEARNER_KINDS)}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.feature_subsample is not None and not 0.0 < self.feature_subsample <= 1.0:
            raise ValueError("feature_subsample must be in (0, 1]")
        for name in ("max_depth", "n_trees", "min_leaf"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be >= 1")

    def resolved_depth(self) -> int:
        if self.max_depth is not None:
            return self.max_depth
        return 3 if self.kind == "boost" else 6

    def resolved_trees(self) -> int:
        if self.n_trees is not None:
            return self.n_trees
        return 200 if self.kind == "boost" else 100

    def resolved_subsample(self) -> float:
        if self.feature_subsample is not None:
            return self.feature_subsample
        return 1.0 / 3.0 if self.kind == "forest" else 1.0


@dataclass(frozen=True)
class TreeModel:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray       # intercept last
    n_features: int


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    n_features: int


@dataclass(frozen=True)
class BoostModel:
    base: float
    learning_rate: float
    trees: tuple
    n_features: int


@njit(cache=True)
def _sort_pairs(v, w, n, stack):
    """In-place ascending quicksort of v[:n], permuting w alongside.

    Median-of-three pivots with an insertion-sort cutoff; the explicit stack
    always pushes the larger side so its depth stays logarithmic.
    """
    top = 0
    stack[0] = 0
    stack[1] = n - 1
    top = 2
    while top > 0:
        hi = stack[top - 1]
        lo = stack[top - 2]
        top -= 2
        while hi - lo > 16:
            mid = (lo + hi) // 2
            if v[mid] < v[lo]:
                v[lo], v[mid] = v[mid], v[lo]
                w[lo], w[mid] = w[mid], w[lo]
            if v[hi] < v[lo]:
                v[lo], v[hi] = v[hi], v[lo]
                w[lo], w[hi] = w[hi], w[lo]
            if v[hi] < v[mid]:
                v[mid], v[hi] = v[hi], v[mid]
                w[mid], w[hi] = w[hi], w[mid]
            pivot = v[mid]
            i = lo
            j = hi
            while i <= j:
                while v[i] < pivot:
                    i += 1
                while v[j] > pivot:
                    j -= 1
                if i <= j:
                    v[i], v[j] = v[j], v[i]
                    w[i], w[j] = w[j], w[i]
                    i += 1
                    j -= 1
            if j - lo > hi - i:
                stack[top] = lo
                stack[top + 1] = j
                top += 2
                lo = i
            else:
                stack[top] = i
                stack[top + 1] = hi
                top += 2
                hi = j
        for i in range(lo + 1, hi + 1):
            vi = v[i]
            wi = w[i]
            j = i - 1
            while j >= lo and v[j] > vi:
                v[j + 1] = v[j]
                w[j + 1] = w[j]
                j -= 1
            v[j + 1] = vi
            w[j + 1] = wi


@njit(cache=True)
def _grow_tree(xt, y, rows, max_depth, min_leaf, m_try, seed,
               feature, threshold, left, right, value):
    """Grow one CART regression tree over rows (indices into xt/y, repeats allowed).

    `xt` is the transposed feature matrix (q, n) so per-feature gathers walk a
    contiguous row. Splits maximize the variance reduction, thresholds sit at
    midpoints of consecutive distinct values, and both children must keep
    min_leaf rows. Ties keep the first candidate in (feature, threshold) scan
    order.
    """
    np.random.seed(seed)
    p = xt.shape[0]
    max_nodes = feature.shape[0]
    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = rows.shape[0]
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    feat_pool = np.empty(p, np.int64)
    n_total = rows.shape[0]
    vsort = np.empty(n_total, np.float64)
    ysort = np.empty(n_total, np.float64)
    buf = np.empty(n_total, np.int64)
    sort_stack = np.empty(128, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        cnt = hi - lo
        total = 0.0
        for i in range(cnt):
            total += y[rows[lo + i]]
        feature[node] = -1
        threshold[node] = 0.0
        left[node] = -1
        right[node] = -1
        value[node] = total / cnt
        if depth >= max_depth or cnt < 2 * min_leaf:
            continue

        for j in range(p):
            feat_pool[j] = j
        f_count = m_try if m_try < p else p
        if f_count < p:
            for j in range(f_count):
                swap = j + np.random.randint(0, p - j)
                tmp = feat_pool[j]
                feat_pool[j] = feat_pool[swap]
                feat_pool[swap] = tmp
            chosen = np.sort(feat_pool[:f_count])
        else:
            chosen = feat_pool[:f_count]

        best_gain = 1e-12
        best_feat = -1
        best_thr = 0.0
        for fi in range(f_count):
            f = chosen[fi]
            col = xt[f]
            # cheap pre-scan: constant columns split nothing, two-valued columns
            # (one-hot indicators) have a single candidate and need no sort
            v_lo = col[rows[lo]]
            v_hi = v_lo
            binary = True
            for i in range(1, cnt):
                v = col[rows[lo + i]]
                if v < v_lo:
                    if binary and v_lo != v_hi:
                        binary = False
                    v_lo = v
                elif v > v_hi:
                    if binary and v_lo != v_hi:
                        binary = False
                    v_hi = v
                elif v != v_lo and v != v_hi:
                    binary = False
            if v_lo == v_hi:
                continue
            if binary:
                nl = 0
                left_sum = 0.0
                for i in range(cnt):
                    r = rows[lo + i]
                    if col[r] == v_lo:
                        nl += 1
                        left_sum += y[r]
                nr = cnt - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                right_sum = total - left_sum
                gain = (left_sum * left_sum / nl + right_sum * right_sum / nr
                        - total * total / cnt)
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_lo + v_hi)
                continue
            for i in range(cnt):
                r = rows[lo + i]
                vsort[i] = col[r]
                ysort[i] = y[r]
            _sort_pairs(vsort, ysort, cnt, sort_stack)
            left_sum = 0.0
            for i in range(cnt - 1):
                left_sum += ysort[i]
                nl = i + 1
                nr = cnt - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                v_here = vsort[i]
                v_next = vsort[i + 1]
                if v_next <= v_here:
                    continue
                right_sum = total - left_sum
                gain = (left_sum * left_sum / nl + right_sum * right_sum / nr
                        - total * total / cnt)
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_here + v_next)
        if best_feat < 0:
            continue

        # stable partition of the row segment around the split
        for i in range(cnt):
            buf[i] = rows[lo + i]
        col = xt[best_feat]
        pos = lo
        for i in range(cnt):
            if col[buf[i]] <= best_thr:
                rows[pos] = buf[i]
                pos += 1
        n_left = pos - lo
        for i in range(cnt):
            if col[buf[i]] > best_thr:
                rows[pos] = buf[i]
                pos += 1

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        stack_depth[top] = depth + 1
        stack_node[top + 1] = n_nodes + 1
        stack_lo[top + 1] = lo + n_left
        stack_hi[top + 1] = hi
        stack_depth[top + 1] = depth + 1
        top += 2
        n_nodes += 2
    return n_nodes


def _fit_tree(xt, y, rows, max_depth, min_leaf, m_try, seed) -> TreeModel:
    n = rows.shape[0]
    # densify the (possibly bootstrapped) sample so the kernel walks 0..n-1
    xb = np.ascontiguousarray(xt[:, rows])
    yb = np.ascontiguousarray(y[rows])
    cap = 2 * max(1, n // min_leaf) + 1
    if max_depth < 60:
        cap = min(cap, 2 ** (max_depth + 1))
    cap = max(cap, 1)
    feature = np.empty(cap, np.int64)
    threshold = np.empty(cap, np.float64)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.empty(cap, np.float64)
    n_nodes = _grow_tree(xb, yb, np.arange(n, dtype=np.int64), max_depth, min_leaf, m_try,
                         seed, feature, threshold, left, right, value)
    return TreeModel(feature=feature[:n_nodes], threshold=threshold[:n_nodes],
                     left=left[:n_nodes], right=right[:n_nodes], value=value[:n_nodes],
                     n_features=xt.shape[0])


def _predict_tree(tree: TreeModel, x: np.ndarray) -> np.ndarray:
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        feats = tree.feature[node]
        active = np.flatnonzero(feats >= 0)
        if active.size == 0:
            return tree.value[node]
        cur = node[active]
        go_left = x[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])


def _check_training_inputs(x, y):
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features must be n-by-q with one outcome per row")
    if x.shape[0] < 2:
        raise ValueError("need at least two training rows")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training values")


def fit(spec: LearnerSpec, features: np.ndarray, y: np.ndarray):
    """Train the learner named by the spec; returns a kind-specific model."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_training_inputs(x, y)
    n, q = x.shape
    if spec.kind == "ridge":
        aug = np.column_stack([x, np.ones(n)])
        return RidgeModel(coef=ridge_solve(aug, y, spec.lambda2), n_features=q)

    depth = spec.resolved_depth()
    m_try = max(1, math.ceil(spec.resolved_subsample() * q))
    xt = np.ascontiguousarray(x.T)
    if spec.kind == "tree":
        return _fit_tree(xt, y, np.arange(n, dtype=np.int64), depth, spec.min_leaf, m_try,
                         spec.seed)
    if spec.kind == "forest":
        trees = []
        for t in range(spec.resolved_trees()):
            rng = np.random.default_rng(spec.seed + t)
            rows = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n, dtype=np.int64)
            trees.append(_fit_tree(xt, y, rows.astype(np.int64), depth, spec.min_leaf, m_try,
                                   spec.seed + t))
        return ForestModel(trees=tuple(trees), n_features=q)

    base = float(y.mean())
    resid = y - base
    trees = []
    all_rows = np.arange(n, dtype=np.int64)
    for t in range(spec.resolved_trees()):
        tree = _fit_tree(xt, resid, all_rows, depth, spec.min_leaf, m_try, spec.seed + t)
        resid = resid - spec.learning_rate * _predict_tree(tree, x)
        trees.append(tree)
    return BoostModel(base=base, learning_rate=spec.learning_rate, trees=tuple(trees),
                      n_features=q)


def predict(model, features: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got "
                         f"{x.shape[1] if x.ndim == 2 else 'non-matrix input'}")
    if isinstance(model, RidgeModel):
        return np.column_stack([x, np.ones(x.shape[0])]) @ model.coef
    if isinstance(model, TreeModel):
        return _predict_tree(model, x)
    if isinstance(model, ForestModel):
        out = np.zeros(x.shape[0])
        for tree in model.trees:
            out += _predict_tree(tree, x)
        return out / len(model.trees)
    if isinstance(model, BoostModel):
        out = np.full(x.shape[0], model.base)
        for tree in model.trees:
            out += model.learning_rate * _predict_tree(tree, x)
        return out
    raise TypeError(f"not a fitted model: {type(model)!r}")
