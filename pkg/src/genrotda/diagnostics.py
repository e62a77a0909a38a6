"""Alignment diagnostics: PCA projections, centroid distances, displacements,
and the station-hour demand shift table."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .panel import FeaturePanel

log = logging.getLogger(__name__)

__all__ = ["jacobi_eigh", "PCA2", "fit_pca2", "AlignmentDiag", "alignment_diagnostics", "shift_summary"]


def jacobi_eigh(S, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by descending eigenvalue,
    eigenvectors in columns. Sweeps stop once the off-diagonal Frobenius norm
    drops below ``tol``.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vecs = V[:, order]
    # deterministic sign: largest-magnitude entry of each vector is positive
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(n)])
    flip[flip == 0] = 1.0
    return vals[order], vecs * flip


@dataclass(frozen=True)
class PCA2:
    mean: np.ndarray
    components: np.ndarray  # d x 2
    eigenvalues: np.ndarray
    degenerate: bool = False

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components

    def inverse(self, P) -> np.ndarray:
        return np.asarray(P) @ self.components.T + self.mean


def fit_pca2(X, tol: float = 1e-10) -> PCA2:
    """Top-two principal axes of ``X``; falls back to the first two feature
    axes when the covariance is degenerate."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(0)
    cov = np.cov(X - mean, rowvar=False, bias=True) if len(X) > 1 else np.zeros((X.shape[1],) * 2)
    cov = np.atleast_2d(cov)
    vals, vecs = jacobi_eigh(cov, tol)
    if X.shape[1] < 2 or not np.all(np.isfinite(vals)) or vals[0] <= 0:
        log.warning("degenerate covariance; PCA falls back to the first two feature axes")
        comps = np.eye(X.shape[1])[:, :2]
        return PCA2(mean, comps, vals, degenerate=True)
    return PCA2(mean, vecs[:, :2], vals)


@dataclass(frozen=True)
class AlignmentDiag:
    centroid_distance_before: float
    centroid_distance_after: float
    mean_displacement: float
    median_displacement: float
    pca_coords: dict[str, np.ndarray]
    pca_degenerate: bool = False

    @property
    def centroid_reduction(self) -> float:
        if self.centroid_distance_before == 0:
            return 0.0
        return 1.0 - self.centroid_distance_after / self.centroid_distance_before

    def summary_rows(self) -> list[tuple[str, float]]:
        return [
            ("centroid_distance_before", self.centroid_distance_before),
            ("centroid_distance_after", self.centroid_distance_after),
            ("centroid_reduction", self.centroid_reduction),
            ("mean_displacement", self.mean_displacement),
            ("median_displacement", self.median_displacement),
        ]

    def points_frame(self) -> pd.DataFrame:
        parts = [pd.DataFrame({"group": name, "pc1": P[:, 0], "pc2": P[:, 1]})
                 for name, P in self.pca_coords.items()]
        return pd.concat(parts, ignore_index=True)


def alignment_diagnostics(T_s, G_s, T_t) -> AlignmentDiag:
    """Compare source, generated source and target transfer features."""
    T_s, G_s, T_t = (np.asarray(x, dtype=np.float64) for x in (T_s, G_s, T_t))
    disp = np.linalg.norm(G_s - T_s, axis=1)
    pca = fit_pca2(np.vstack([T_s, T_t]))
    return AlignmentDiag(
        centroid_distance_before=float(np.linalg.norm(T_s.mean(0) - T_t.mean(0))),
        centroid_distance_after=float(np.linalg.norm(G_s.mean(0) - T_t.mean(0))),
        mean_displacement=float(disp.mean()),
        median_displacement=float(np.median(disp)),
        pca_coords={"source": pca.transform(T_s), "generated": pca.transform(G_s),
                    "target": pca.transform(T_t)},
        pca_degenerate=pca.degenerate,
    )


def shift_summary(source: FeaturePanel, target: FeaturePanel, top_k: int = 30) -> pd.DataFrame:
    """Mean demand per (station, hour of day) in each year for the busiest
    common stations, with the target-minus-source difference."""
    src = source.frame.assign(hour=source.frame["t"].dt.hour)
    tgt = target.frame.assign(hour=target.frame["t"].dt.hour)
    common = sorted(set(src["station_id"]) & set(tgt["station_id"]))
    if len(common) < top_k:
        log.warning("only %d common stations (< top_k = %d); using all", len(common), top_k)
    volume = (src.groupby("station_id")["demand"].sum().reindex(common).fillna(0)
              + tgt.groupby("station_id")["demand"].sum().reindex(common).fillna(0))
    # busiest first, ties by id
    ranked = sorted(common, key=lambda s: (-volume[s], s))[:top_k]
    hours = pd.MultiIndex.from_product([ranked, range(24)], names=["station_id", "hour"])
    s_mean = src[src["station_id"].isin(ranked)].groupby(["station_id", "hour"])["demand"].mean()
    t_mean = tgt[tgt["station_id"].isin(ranked)].groupby(["station_id", "hour"])["demand"].mean()
    out = pd.DataFrame({
        "source_mean": s_mean.reindex(hours).fillna(0.0),
        "target_mean": t_mean.reindex(hours).fillna(0.0),
    })
    out["diff"] = out["target_mean"] - out["source_mean"]
    out = out.reset_index()
    order = {s: k for k, s in enumerate(ranked)}
    out = out.sort_values(["station_id", "hour"], key=lambda c: c.map(order) if c.name == "station_id" else c)
    return out.reset_index(drop=True)
