"""Weighted random-forest regressor.

Trees are grown on a weighted bootstrap draw and split on weighted variance
reduction. The tree builder is compiled with numba; everything else is numpy.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = ["ForestConfig", "Tree", "ForestModel", "fit", "predict"]


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 300
    min_samples_leaf: int = 3
    max_features_fraction: float = 1.0
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.max_features_fraction <= 1.0:
            raise ValueError("max_features_fraction must be in (0, 1]")


@dataclass(frozen=True)
class Tree:
    """Flat binary tree. ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(self.feature, self.threshold, self.left, self.right,
                             self.value, np.ascontiguousarray(X, dtype=np.float64))

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)


@numba.njit(cache=True, nogil=True)
def _best_split(X, y, w, idx, features, min_leaf):
    """Return (feature, threshold, n_left) maximizing weighted SSE reduction.

    Candidates are scanned in feature order, then ascending threshold, and only
    a strict improvement replaces the incumbent.
    """
    best_feat = -1
    best_thr = 0.0
    best_gain = 0.0
    n = idx.shape[0]
    w_tot = 0.0
    s_tot = 0.0
    for k in range(n):
        w_tot += w[idx[k]]
        s_tot += w[idx[k]] * y[idx[k]]
    parent = s_tot * s_tot / w_tot
    for f in features:
        vals = np.empty(n)
        for k in range(n):
            vals[k] = X[idx[k], f]
        order = np.argsort(vals, kind="mergesort")
        wl = 0.0
        sl = 0.0
        for k in range(n - 1):
            i = idx[order[k]]
            wl += w[i]
            sl += w[i] * y[i]
            v0 = vals[order[k]]
            v1 = vals[order[k + 1]]
            if v1 <= v0:
                continue
            wr = w_tot - wl
            if wl < min_leaf or wr < min_leaf:
                continue
            sr = s_tot - sl
            gain = sl * sl / wl + sr * sr / wr - parent
            if gain > best_gain:
                best_gain = gain
                best_feat = f
                best_thr = 0.5 * (v0 + v1)
                if best_thr >= v1:
                    best_thr = v0
    return best_feat, best_thr


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, w, min_leaf, n_sub, feat_seed):
    n = X.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    np.random.seed(feat_seed)
    all_idx = np.arange(n)
    stack_nodes = [0]
    stack_idx = [all_idx]
    n_nodes = 1
    while len(stack_nodes) > 0:
        node = stack_nodes.pop()
        idx = stack_idx.pop()
        w_tot = 0.0
        s_tot = 0.0
        y_min = np.inf
        y_max = -np.inf
        for k in range(idx.shape[0]):
            i = idx[k]
            w_tot += w[i]
            s_tot += w[i] * y[i]
            if y[i] < y_min:
                y_min = y[i]
            if y[i] > y_max:
                y_max = y[i]
        value[node] = s_tot / w_tot
        weight[node] = w_tot
        if y_max <= y_min or w_tot < 2.0 * min_leaf:
            continue
        if n_sub < d:
            features = np.sort(np.random.permutation(d)[:n_sub])
        else:
            features = np.arange(d)
        f, thr = _best_split(X, y, w, idx, features, min_leaf)
        if f < 0:
            continue
        mask = np.empty(idx.shape[0], dtype=np.bool_)
        for k in range(idx.shape[0]):
            mask[k] = X[idx[k], f] <= thr
        li = idx[mask]
        ri = idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_nodes.append(n_nodes + 1)
        stack_idx.append(ri)
        stack_nodes.append(n_nodes)
        stack_idx.append(li)
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], weight[:n_nodes])


@numba.njit(cache=True, nogil=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


def _fit_one(X, y, w_unit, p, cfg: ForestConfig, tree_index: int) -> Tree:
    # per-tree stream so serial and threaded fits agree
    rng = np.random.default_rng([cfg.seed, tree_index])
    n = X.shape[0]
    if cfg.bootstrap:
        draws = rng.choice(n, size=n, replace=True, p=p)
        counts = np.bincount(draws, minlength=n).astype(np.float64)
        keep = counts > 0
        Xt, yt, wt = X[keep], y[keep], counts[keep]
    else:
        keep = w_unit > 0
        Xt, yt, wt = X[keep], y[keep], w_unit[keep]
    d = X.shape[1]
    n_sub = max(1, int(round(cfg.max_features_fraction * d)))
    feat_seed = int(rng.integers(0, 2**31 - 1))
    arrays = _build_tree(np.ascontiguousarray(Xt), np.ascontiguousarray(yt),
                         np.ascontiguousarray(wt), float(cfg.min_samples_leaf),
                         n_sub, feat_seed)
    return Tree(*arrays)


def fit(X, y, w=None, config: ForestConfig | None = None) -> ForestModel:
    """Fit a forest on ``(X, y)`` with non-negative sample weights ``w``.

    With bootstrap on, each tree sees ``n`` draws made with probability
    proportional to ``w`` and each draw counts as unit weight. With bootstrap
    off, splits use ``w`` rescaled to mean 1 over the positive entries, so
    ``min_samples_leaf`` stays a count of average-weight samples.
    """
    cfg = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 1 or y.shape != (n,):
        raise ValueError(f"need n >= 1 rows and matching y, got X {X.shape}, y {y.shape}")
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be a finite non-negative vector of length n")
    if not np.any(w > 0):
        raise ValueError("all sample weights are zero")
    w_unit = w / w[w > 0].mean()
    p = w / w.sum()

    def job(t):
        return _fit_one(X, y, w_unit, p, cfg, t)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            trees = list(pool.map(job, range(cfg.n_trees)))
    else:
        trees = [job(t) for t in range(cfg.n_trees)]
    return ForestModel(trees=trees, n_features=X.shape[1], config=cfg)


def predict(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        out += tree.predict(X)
    return out / len(model.trees)
