"""Synthetic cross-year station-hour data and a small exact OT oracle."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from fractions import Fraction

import numpy as np
import pandas as pd

from .panel import FeaturePanel, TripRecord, aggregate_station_hours, station_frame

__all__ = ["SynthScenario", "generate_trips", "generate_year", "brute_force_ot"]


@dataclass(frozen=True)
class SynthScenario:
    """Knobs for a two-year synthetic city.

    ``shift_strength`` scales how far the target year's station popularity and
    commute peak times drift from the source year; 0 means no drift.
    """

    n_stations: int = 60
    days: int = 31
    base_rate: float = 2.0
    shift_strength: float = 1.0
    noise: bool = True
    seed: int = 2026
    popularity_spread: float = 0.7
    source_year: int = 2025
    target_year: int = 2026
    month: int = 3

    def __post_init__(self):
        if self.days < 8:
            raise ValueError("days must be >= 8 so labeled and test days both exist")
        if self.shift_strength < 0 or self.base_rate < 0:
            raise ValueError("shift_strength and base_rate must be >= 0")


def _bump(hour, centre, width):
    d = (hour - centre + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (d / width) ** 2)


def _station_params(sc: SynthScenario, which: str) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([sc.seed, 1])
    n = sc.n_stations
    p = {
        "lat": 40.70 + rng.uniform(0, 0.10, n),
        "lng": -74.02 + rng.uniform(0, 0.08, n),
        "pop": rng.lognormal(0.0, sc.popularity_spread, n),
        "am_w": rng.uniform(0.2, 1.5, n),
        "pm_w": rng.uniform(0.2, 1.5, n),
        "am_h": np.full(n, 8.0),
        "pm_h": np.full(n, 17.5),
        "wkend": rng.uniform(0.4, 1.2, n),
    }
    # drift directions are shared by both years so only the target moves
    drift = np.random.default_rng([sc.seed, 2])
    # busy stations lose share, quiet ones gain, plus city-wide growth
    log_pop = np.log(p["pop"])
    d_pop = -0.5 - 0.6 * (log_pop - log_pop.mean()) + drift.normal(0.0, 0.3, n)
    d_am = drift.normal(0.0, 1.0, n)
    d_pm = drift.normal(0.0, 1.5, n)
    d_mix = drift.normal(0.0, 0.4, n)
    if which == "target":
        s = sc.shift_strength
        p["pop"] = p["pop"] * np.exp(s * d_pop)
        p["am_h"] = p["am_h"] + s * d_am
        p["pm_h"] = p["pm_h"] + s * d_pm
        p["pm_w"] = p["pm_w"] * np.exp(s * d_mix)
    return p


def _rates(sc: SynthScenario, p: dict[str, np.ndarray], grid: pd.DatetimeIndex,
           rng: np.random.Generator) -> np.ndarray:
    hour = grid.hour.to_numpy(dtype=np.float64)[None, :]
    weekend = (grid.dayofweek.to_numpy() >= 5)[None, :]
    weekday_curve = (0.15 + p["am_w"][:, None] * _bump(hour, p["am_h"][:, None], 1.5)
                     + p["pm_w"][:, None] * _bump(hour, p["pm_h"][:, None], 2.0))
    weekend_curve = p["wkend"][:, None] * (0.15 + 0.8 * _bump(hour, 14.0, 3.5))
    curve = np.where(weekend, weekend_curve, weekday_curve)
    # station-day level effects give the history features something to carry
    n_days = len(grid) // 24
    day_effect = np.exp(rng.normal(0.0, 0.35, (sc.n_stations, n_days)) if sc.noise
                        else np.zeros((sc.n_stations, n_days)))
    day_effect = np.repeat(day_effect, 24, axis=1)
    return sc.base_rate * p["pop"][:, None] * curve * day_effect


def _grid(sc: SynthScenario, year: int) -> pd.DatetimeIndex:
    return pd.date_range(datetime(year, sc.month, 1), periods=24 * sc.days, freq="h")


def _counts(sc: SynthScenario, which: str):
    if which not in ("source", "target"):
        raise ValueError("which must be 'source' or 'target'")
    year = sc.source_year if which == "source" else sc.target_year
    grid = _grid(sc, year)
    rng = np.random.default_rng([sc.seed, 3, 0 if which == "source" else 1])
    p = _station_params(sc, which)
    lam = _rates(sc, p, grid, rng)
    if sc.noise:
        # gamma-Poisson mixture: overdispersed counts
        lam = rng.gamma(shape=4.0, scale=lam / 4.0) if np.any(lam > 0) else lam
    counts = rng.poisson(lam)
    return grid, p, counts, rng


def generate_trips(sc: SynthScenario, which: str) -> list[TripRecord]:
    grid, p, counts, rng = _counts(sc, which)
    trips = []
    for s in range(sc.n_stations):
        sid = f"S{s:03d}"
        for k in np.flatnonzero(counts[s]):
            c = int(counts[s, k])
            start = grid[k].to_pydatetime()
            for minute in np.sort(rng.integers(0, 60, c)):
                trips.append(TripRecord(sid, float(p["lat"][s]), float(p["lng"][s]),
                                        start + timedelta(minutes=int(minute)),
                                        "member", "classic"))
    return trips


def generate_year(sc: SynthScenario, which: str) -> FeaturePanel:
    """Simulate one year's trips and aggregate them into a station-hour panel."""
    trips = generate_trips(sc, which)
    if trips:
        return aggregate_station_hours(trips)
    # nothing happened: every station sits at zero demand all month
    grid, p, counts, _ = _counts(sc, which)
    frames = [station_frame(f"S{s:03d}", p["lat"][s], p["lng"][s], grid, counts[s])
              for s in range(sc.n_stations)]
    return FeaturePanel(pd.concat(frames, ignore_index=True))


ORACLE_MAX_CELLS = 64


def brute_force_ot(cost, a=None, b=None) -> np.ndarray:
    """Exact minimum-cost coupling by successive shortest augmenting paths.

    Flows are kept as exact fractions so the returned coupling meets both
    marginals to rounding. Only for tiny problems (n * m <= 64).
    """
    C = np.asarray(cost, dtype=np.float64)
    n, m = C.shape
    if n * m > ORACLE_MAX_CELLS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_CELLS} cells, got {n}x{m}")
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    fa = [Fraction(x).limit_denominator(10**9) for x in a]
    fb = [Fraction(x).limit_denominator(10**9) for x in b]
    sa, sb = sum(fa), sum(fb)
    supply = [x / sa for x in fa]
    demand = [x / sb for x in fb]
    flow = [[Fraction(0)] * m for _ in range(n)]

    while any(s > 0 for s in supply):
        # Bellman-Ford from a virtual source over rows (0..n-1) and columns (n..n+m-1)
        dist = [np.inf] * (n + m)
        prev = [-1] * (n + m)
        for i in range(n):
            if supply[i] > 0:
                dist[i] = 0.0
        for _ in range(n + m):
            changed = False
            for i in range(n):
                if dist[i] == np.inf:
                    continue
                for j in range(m):
                    nd = dist[i] + C[i, j]
                    if nd < dist[n + j] - 1e-15:
                        dist[n + j], prev[n + j] = nd, i
                        changed = True
            for j in range(m):
                if dist[n + j] == np.inf:
                    continue
                for i in range(n):
                    if flow[i][j] > 0:
                        nd = dist[n + j] - C[i, j]
                        if nd < dist[i] - 1e-15:
                            dist[i], prev[i] = nd, n + j
                            changed = True
            if not changed:
                break
        open_cols = [j for j in range(m) if demand[j] > 0 and dist[n + j] < np.inf]
        j_end = min(open_cols, key=lambda j: (dist[n + j], j))
        # walk back to the starting row, collecting the bottleneck
        path = []
        node = n + j_end
        while True:
            p_ = prev[node]
            if node >= n:
                path.append((p_, node - n, +1))
            else:
                path.append((node, p_ - n, -1))
            node = p_
            if node < n and prev[node] == -1:
                break
        i_start = node
        delta = min(supply[i_start], demand[j_end])
        for i, j, sign in path:
            if sign < 0:
                delta = min(delta, flow[i][j])
        for i, j, sign in path:
            flow[i][j] += delta if sign > 0 else -delta
        supply[i_start] -= delta
        demand[j_end] -= delta
    return np.array([[float(x) for x in row] for row in flow])
