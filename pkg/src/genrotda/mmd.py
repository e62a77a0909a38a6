"""Gaussian-kernel MMD, its gradient, and kernel mean matching weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

__all__ = ["KernelSpec", "median_bandwidth", "gram", "mmd2", "mmd2_and_grad", "kmm_weights", "kmm_objective"]

BANDWIDTH_FLOOR = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth >= BANDWIDTH_FLOOR:
            raise ValueError(f"bandwidth must be >= {BANDWIDTH_FLOOR}")


def median_bandwidth(X, Y, max_points: int = 500, seed: int = 0) -> float:
    """Median pairwise Euclidean distance over the pooled sample."""
    Z = np.vstack([np.atleast_2d(X), np.atleast_2d(Y)]).astype(np.float64)
    if Z.shape[0] < 2:
        raise ValueError("need at least two points")
    if Z.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(Z.shape[0], max_points, replace=False)
        Z = Z[np.sort(idx)]
    return max(float(np.median(pdist(Z))), BANDWIDTH_FLOOR)


def gram(X, Y, kernel: KernelSpec) -> np.ndarray:
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * kernel.bandwidth**2))


def _check(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if len(X) < 1 or len(Y) < 1:
        raise ValueError("empty sample")
    return X, Y


def mmd2(X, Y, kernel: KernelSpec) -> float:
    """Biased (V-statistic) squared MMD, bitwise symmetric in ``X`` and ``Y``."""
    X, Y = _check(X, Y)
    # fsum is correctly rounded, so the cross term ignores summation order
    cross = math.fsum(gram(X, Y, kernel).ravel()) / (len(X) * len(Y))
    return float((gram(X, X, kernel).mean() + gram(Y, Y, kernel).mean()) - 2.0 * cross)


def mmd2_and_grad(X, Y, kernel: KernelSpec, kyy_mean: float | None = None):
    """Biased squared MMD and its gradient with respect to ``X``.

    ``kyy_mean`` lets callers reuse the constant target-target term.
    """
    X, Y = _check(X, Y)
    n, m = len(X), len(Y)
    h2 = kernel.bandwidth**2
    Kxx = gram(X, X, kernel)
    Kxy = gram(X, Y, kernel)
    if kyy_mean is None:
        kyy_mean = gram(Y, Y, kernel).mean()
    value = Kxx.mean() - 2.0 * Kxy.mean() + kyy_mean
    grad = (-2.0 / (n * n * h2)) * (Kxx.sum(1)[:, None] * X - Kxx @ X)
    grad += (2.0 / (n * m * h2)) * (Kxy.sum(1)[:, None] * X - Kxy @ Y)
    return float(value), grad


def _project_capped_mean(v, bound):
    """Euclidean projection onto {0 <= w <= bound, mean(w) = 1}."""
    n = len(v)
    lo, hi = v.min() - bound, v.max()
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        s = np.clip(v - tau, 0.0, bound).sum()
        if s > n:
            lo = tau
        else:
            hi = tau
        if hi - lo < 1e-15 * max(1.0, abs(tau)):
            break
    w = np.clip(v - 0.5 * (lo + hi), 0.0, bound)
    # absorb bisection residue on the free coordinates
    free = (w > 0) & (w < bound)
    if free.any():
        w[free] += (n - w.sum()) / free.sum()
        np.clip(w, 0.0, bound, out=w)
    return w


def kmm_objective(w, K, kappa):
    n = len(w)
    return float(w @ K @ w / n**2 - 2.0 * w @ kappa / n)


def kmm_weights(S, T, kernel: KernelSpec | None = None, bound: float = 10.0, iters: int = 500,
                return_trace: bool = False):
    """Kernel mean matching importance weights for ``S`` toward ``T``.

    Minimizes the squared distance between the weighted source kernel mean
    and the target kernel mean by projected gradient with step ``1/L``.
    """
    S, T = _check(S, T)
    if bound < 1.0:
        raise ValueError("bound must be >= 1 for mean(w) = 1 to be feasible")
    kernel = kernel or KernelSpec(median_bandwidth(S, T))
    n = len(S)
    K = gram(S, S, kernel)
    # kappa_i = mean_j k(S_i, T_j); objective drops the constant target term
    kappa = gram(S, T, kernel).mean(1)
    lipschitz = 2.0 * np.linalg.eigvalsh(K)[-1] / n**2
    step = 1.0 / max(lipschitz, 1e-300)
    w = np.ones(n)
    trace = [kmm_objective(w, K, kappa)]
    for _ in range(iters):
        grad = 2.0 * (K @ w) / n**2 - 2.0 * kappa / n
        w_new = _project_capped_mean(w - step * grad, bound)
        obj = kmm_objective(w_new, K, kappa)
        if obj > trace[-1]:
            # projection residue can nudge the objective up by rounding only
            break
        w = w_new
        trace.append(obj)
    return (w, np.array(trace)) if return_trace else w
