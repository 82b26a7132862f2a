"""Moment features and the trainable shift regressor.

The shift model predicts a circuit's divergence score from the first and
second empirical moments of its noisy output, so that conformal
calibration can run on residuals instead of raw scores. The regressor
is a random forest of CART trees with variance-reduction splits and
deterministic tie-breaking (lowest feature index, then lowest
threshold).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .sampleset import ShotMatrix

# one regressor serves circuits of different widths; features are
# zero-padded to this project-wide flattened length (16 + 16**2)
DEFAULT_FEATURE_WIDTH = 16 + 16 * 16


@dataclass(frozen=True)
class MomentFeatures:
    """Per-bit means and raw second moments, flattened to fixed width."""

    mean: np.ndarray
    second: np.ndarray
    width: int
    flattened: np.ndarray

    def __post_init__(self):
        if np.any(self.mean < 0) or np.any(self.mean > 1):
            raise ValueError("mean entries must lie in [0, 1]")
        if not np.allclose(self.second, self.second.T):
            raise ValueError("second moment matrix must be symmetric")


def moment_features(noisy: ShotMatrix,
                    target_width: int = DEFAULT_FEATURE_WIDTH) -> MomentFeatures:
    """phi(noisy shots): per-bit means and raw second moments.

    Flattened row-major and zero-padded to target_width so circuits of
    different widths share one feature space.
    """
    bits = noisy.bits.astype(float)
    s = bits.shape[1]
    if s * s + s > target_width:
        raise ValueError(
            f"width {s} needs {s * s + s} feature slots, exceeds W={target_width}")
    mean = bits.mean(axis=0)
    second = (bits.T @ bits) / bits.shape[0]
    flattened = np.zeros(target_width)
    flattened[:s] = mean
    flattened[s:s + s * s] = second.ravel()
    return MomentFeatures(mean=mean, second=second, width=s, flattened=flattened)


# ---------------------------------------------------------------------------
# CART forest

_NO_FEATURE = -1


@njit(cache=True)
def _grow_tree(X, y, min_leaf, n_sub, seed, bootstrap,
               feature, threshold, left, right, value):
    np.random.seed(seed)
    n, d = X.shape
    samples = np.empty(n, dtype=np.int64)
    if bootstrap:
        for i in range(n):
            samples[i] = np.random.randint(0, n)
    else:
        for i in range(n):
            samples[i] = i
    pool = np.empty(d, dtype=np.int64)
    chosen = np.empty(n_sub, dtype=np.int64)

    # DFS over (node, start, end) ranges of the samples array
    stack_node = np.empty(2 * n + 1, dtype=np.int64)
    stack_lo = np.empty(2 * n + 1, dtype=np.int64)
    stack_hi = np.empty(2 * n + 1, dtype=np.int64)
    node_count = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n

    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1
        m = hi - lo

        total = 0.0
        total_sq = 0.0
        for i in range(lo, hi):
            yi = y[samples[i]]
            total += yi
            total_sq += yi * yi
        mean = total / m
        node_sse = total_sq - total * total / m

        feature[node] = _NO_FEATURE
        value[node] = mean
        if m < 2 * min_leaf or node_sse <= 1e-12:
            continue

        # draw the per-split feature subset (partial Fisher-Yates),
        # then visit features in ascending index for tie determinism
        for i in range(d):
            pool[i] = i
        for i in range(n_sub):
            j = i + np.random.randint(0, d - i)
            pool[i], pool[j] = pool[j], pool[i]
        for i in range(n_sub):
            chosen[i] = pool[i]
        chosen[:n_sub].sort()

        best_sse = np.inf
        best_f = _NO_FEATURE
        best_thr = 0.0
        for ci in range(n_sub):
            f = chosen[ci]
            vals = np.empty(m)
            ys = np.empty(m)
            for i in range(m):
                vals[i] = X[samples[lo + i], f]
            order = np.argsort(vals, kind="mergesort")
            for i in range(m):
                ys[i] = y[samples[lo + order[i]]]
            left_sum = 0.0
            left_sq = 0.0
            for i in range(m - 1):
                yi = ys[i]
                left_sum += yi
                left_sq += yi * yi
                nl = i + 1
                if nl < min_leaf or m - nl < min_leaf:
                    continue
                lo_val = vals[order[i]]
                hi_val = vals[order[i + 1]]
                if hi_val <= lo_val:
                    continue
                right_sum = total - left_sum
                right_sq = total_sq - left_sq
                sse = (left_sq - left_sum * left_sum / nl
                       + right_sq - right_sum * right_sum / (m - nl))
                if sse < best_sse:
                    best_sse = sse
                    best_f = f
                    best_thr = 0.5 * (lo_val + hi_val)
        if best_f == _NO_FEATURE:
            continue

        # stable in-place partition on the winning split
        buf = np.empty(m, dtype=np.int64)
        n_left = 0
        for i in range(lo, hi):
            if X[samples[i], best_f] <= best_thr:
                buf[n_left] = samples[i]
                n_left += 1
        k = n_left
        for i in range(lo, hi):
            if X[samples[i], best_f] > best_thr:
                buf[k] = samples[i]
                k += 1
        for i in range(m):
            samples[lo + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = node_count
        right[node] = node_count + 1
        lid = node_count
        rid = node_count + 1
        node_count += 2
        top += 1
        stack_node[top] = lid
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        top += 1
        stack_node[top] = rid
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
    return node_count


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != _NO_FEATURE:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@dataclass(frozen=True)
class ShiftRegressor:
    """Forest of CART regression trees; prediction = mean over trees."""

    trees: tuple
    n_trees: int
    min_leaf: int
    feature_frac: float
    seed: int
    n_features: int
    target_range: tuple = (0.0, 0.0)

    def to_json_dict(self) -> dict:
        dumps = []
        for t in self.trees:
            dumps.append({
                "feature": t[0].tolist(),
                "threshold": t[1].tolist(),
                "left": t[2].tolist(),
                "right": t[3].tolist(),
                "leaf_value": t[4].tolist(),
            })
        return {"n_trees": self.n_trees, "min_leaf": self.min_leaf,
                "feature_frac": self.feature_frac, "seed": self.seed,
                "n_features": self.n_features, "trees": dumps}


def _as_matrix(train) -> tuple:
    X = np.array([f.flattened for f, _ in train], dtype=float)
    y = np.array([float(a) for _, a in train])
    return X, y


def fit_shift(train, n_trees: int = 100, min_leaf: int = 2,
              feature_frac: float = 1.0 / 3.0, seed: int = 0,
              bootstrap: bool = True) -> ShiftRegressor:
    """Fit the forest on (features, score) records by greedy SSE splits."""
    if len(train) < 2:
        raise ValueError("need at least 2 training records")
    X, y = _as_matrix(train)
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    n, d = X.shape
    n_sub = max(1, int(d * feature_frac))
    tree_seeds = np.random.SeedSequence(seed).generate_state(n_trees)
    trees = []
    cap = 2 * n + 1
    for t in range(n_trees):
        feature = np.empty(cap, dtype=np.int64)
        threshold = np.zeros(cap)
        left = np.zeros(cap, dtype=np.int64)
        right = np.zeros(cap, dtype=np.int64)
        value = np.zeros(cap)
        count = _grow_tree(X, y, min_leaf, n_sub, int(tree_seeds[t]) & 0x7FFFFFFF,
                           bootstrap, feature, threshold, left, right, value)
        trees.append((feature[:count].copy(), threshold[:count].copy(),
                      left[:count].copy(), right[:count].copy(),
                      value[:count].copy()))
    return ShiftRegressor(trees=tuple(trees), n_trees=n_trees, min_leaf=min_leaf,
                          feature_frac=feature_frac, seed=seed, n_features=d,
                          target_range=(float(y.min()), float(y.max())))


def predict_shift_batch(g: ShiftRegressor, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != g.n_features:
        raise ValueError(
            f"feature width {X.shape[1]} != trained width {g.n_features}")
    acc = np.zeros(X.shape[0])
    out = np.empty(X.shape[0])
    for t in g.trees:
        _predict_tree(X, t[0], t[1], t[2], t[3], t[4], out)
        acc += out
    return acc / g.n_trees


def predict_shift(g: ShiftRegressor, f: MomentFeatures) -> float:
    """Ensemble-mean prediction for one circuit's moment features."""
    return float(predict_shift_batch(g, f.flattened[None, :])[0])
