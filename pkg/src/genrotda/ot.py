"""Entropic transport, cost-sorted trimming and barycentric projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CostMatrix",
    "TransportPlan",
    "TrimmedPlan",
    "cost_matrix",
    "sinkhorn",
    "trim_plan",
    "barycentric_project",
    "transport_cost",
]

MASS_FLOOR = 1e-15


@dataclass(frozen=True)
class CostMatrix:
    C: np.ndarray
    median_cost: float


@dataclass(frozen=True)
class TransportPlan:
    pi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    epsilon: float
    iterations_used: int
    converged: bool

    def marginal_error(self) -> float:
        return max(np.abs(self.pi.sum(1) - self.a).max(), np.abs(self.pi.sum(0) - self.b).max())


@dataclass(frozen=True)
class TrimmedPlan:
    pi_trim: np.ndarray
    kept_mass: float
    fallback_rows: frozenset[int]
    zeroed: np.ndarray  # boolean mask of cells removed by trimming


def cost_matrix(S, T) -> CostMatrix:
    """Squared Euclidean cost between the rows of ``S`` and ``T``."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    if S.shape[1] != T.shape[1] or S.shape[1] < 1:
        raise ValueError(f"feature dimension mismatch: {S.shape[1]} vs {T.shape[1]}")
    C = np.empty((S.shape[0], T.shape[0]))
    # direct differences keep C_ij == 0 exactly for identical rows
    step = max(1, 2_000_000 // max(1, T.size))
    for lo in range(0, S.shape[0], step):
        diff = S[lo:lo + step, None, :] - T[None, :, :]
        C[lo:lo + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return CostMatrix(C=C, median_cost=float(np.median(C)))


def _lse(M, axis):
    mx = M.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return (mx + np.log(np.exp(M - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn(cost: CostMatrix, epsilon_scale: float = 0.1, max_iters: int = 1000,
             tol: float = 1e-9, a=None, b=None, check_every: int = 1,
             eps_scaling: bool = True, round_marginals: bool = True) -> TransportPlan:
    """Log-domain Sinkhorn with ``epsilon = epsilon_scale * median(C)``.

    With ``eps_scaling`` the potentials are warm-started on a geometric
    schedule from ``median(C)`` down to the target epsilon, halving every 20
    iterations; the convergence test only runs once the target is reached.
    ``round_marginals`` finishes with a rank-one correction that makes the
    returned coupling meet both marginals to rounding error.
    """
    if epsilon_scale <= 0:
        raise ValueError("epsilon_scale must be positive")
    C = cost.C
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    n, m = C.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    eps = max(epsilon_scale * cost.median_cost, 1e-9)
    cur = max(eps, cost.median_cost) if eps_scaling else eps
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(n)
    g = np.zeros(m)
    converged = False
    it = 0
    stage_it = 0
    while it < max_iters:
        it += 1
        stage_it += 1
        f = cur * (log_a - _lse((g[None, :] - C) / cur, axis=1))
        g = cur * (log_b - _lse((f[:, None] - C) / cur, axis=0))
        if cur > eps:
            if stage_it % 20 == 0:
                cur = max(eps, 0.5 * cur)
                stage_it = 0
            continue
        if stage_it % check_every == 0 or it == max_iters:
            # columns are exact after the g update; rows carry the error
            row = np.exp((f[:, None] + g[None, :] - C) / eps).sum(1)
            if np.abs(row - a).max() < tol:
                converged = True
                break
    pi = np.exp((f[:, None] + g[None, :] - C) / cur)
    if round_marginals:
        pi = _round_to_marginals(pi, a, b)
    return TransportPlan(pi=pi, a=a, b=b, epsilon=eps, iterations_used=it, converged=converged)


def _round_to_marginals(pi, a, b):
    """Scale rows and columns down to their marginals, then add the deficit back.

    The result is feasible and differs from ``pi`` by at most the marginal
    violation in L1.
    """
    pi = pi * np.minimum(a / pi.sum(1), 1.0)[:, None]
    pi = pi * np.minimum(b / pi.sum(0), 1.0)[None, :]
    # clipped so float noise cannot make the correction subtract mass
    err_r = np.maximum(a - pi.sum(1), 0.0)
    err_c = np.maximum(b - pi.sum(0), 0.0)
    deficit = err_r.sum()
    if deficit > 0:
        pi = pi + np.outer(err_r, err_c) / deficit
    return pi


def transport_cost(pi, C) -> float:
    return float(np.sum(pi * (C.C if isinstance(C, CostMatrix) else C)))


def trim_plan(plan: TransportPlan, cost: CostMatrix, keep_mass: float) -> TrimmedPlan:
    """Zero the most expensive cells while retained mass stays >= keep_mass.

    Cells are visited by descending cost, ties in ascending (i, j) order, and
    the sweep stops at the first cell whose removal would break the floor.
    Cells below ``MASS_FLOOR`` are left alone.
    """
    if not 0.0 < keep_mass <= 1.0:
        raise ValueError("keep_mass must lie in (0, 1]")
    pi = plan.pi
    C = cost.C
    pi_trim = pi.copy()
    zeroed = np.zeros(pi.shape, dtype=bool)
    total = float(pi.sum())
    if keep_mass < 1.0:
        floor = keep_mass * total
        flat = np.flatnonzero(pi.ravel() >= MASS_FLOOR)
        # lexsort: last key is primary
        order = flat[np.lexsort((flat, -C.ravel()[flat]))]
        masses = pi.ravel()[order]
        retained = total - np.cumsum(masses)
        n_cut = int(np.searchsorted(-retained, -floor, side="right"))
        cut = order[:n_cut]
        pi_trim.ravel()[cut] = 0.0
        zeroed.ravel()[cut] = True
    row_mass = pi_trim.sum(1)
    fallback = frozenset(int(i) for i in np.flatnonzero(row_mass < MASS_FLOOR))
    return TrimmedPlan(pi_trim=pi_trim, kept_mass=float(pi_trim.sum()),
                       fallback_rows=fallback, zeroed=zeroed)


def barycentric_project(trimmed: TrimmedPlan | np.ndarray, T_target, S_fallback) -> np.ndarray:
    """Map each source row to the coupling-weighted mean of target rows.

    Rows without retained mass copy ``S_fallback`` unchanged.
    """
    if isinstance(trimmed, TrimmedPlan):
        pi, fallback = trimmed.pi_trim, trimmed.fallback_rows
    else:
        pi = np.asarray(trimmed, dtype=np.float64)
        fallback = frozenset(int(i) for i in np.flatnonzero(pi.sum(1) < MASS_FLOOR))
    T_target = np.asarray(T_target, dtype=np.float64)
    S_fallback = np.asarray(S_fallback, dtype=np.float64)
    if pi.shape != (S_fallback.shape[0], T_target.shape[0]) or S_fallback.shape[1] != T_target.shape[1]:
        raise ValueError("inconsistent plan / feature shapes")
    row_mass = pi.sum(1)
    out = np.empty_like(S_fallback)
    ok = np.ones(pi.shape[0], dtype=bool)
    ok[list(fallback)] = False
    out[ok] = (pi[ok] @ T_target) / row_mass[ok, None]
    out[~ok] = S_fallback[~ok]
    return out
