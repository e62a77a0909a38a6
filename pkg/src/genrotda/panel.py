"""Trip ingestion, station-hour panels, standardization and domain splits."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

__all__ = [
    "TRIP_COLUMNS",
    "PANEL_COLUMNS",
    "ANCHOR_COLUMNS",
    "TRANSFER_COLUMNS",
    "SchemaError",
    "EmptyPanelError",
    "TripRecord",
    "FeaturePanel",
    "Standardizer",
    "Pool",
    "SplitConfig",
    "DomainSplit",
    "ingest_trips",
    "aggregate_station_hours",
    "fit_standardizer",
    "make_split",
    "inject_contamination",
]

TRIP_COLUMNS = ("ride_id", "started_at", "start_station_id", "start_lat", "start_lng",
                "member_casual", "rideable_type")
ANCHOR_COLUMNS = ("lat", "lng", "hour_sin", "hour_cos", "dow_sin", "dow_cos", "is_weekend")
TRANSFER_COLUMNS = ("lag_1h", "lag_24h", "rolling_24h_mean", "rolling_168h_mean")
PANEL_COLUMNS = ("station_id", "lat", "lng", "t", "demand", "hour_sin", "hour_cos", "dow_sin",
                 "dow_cos", "is_weekend", *TRANSFER_COLUMNS)
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
SIGMA_FLOOR = 1e-8


class SchemaError(ValueError):
    pass


class EmptyPanelError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TripRecord:
    start_station_id: str
    start_lat: float
    start_lng: float
    start_time: datetime
    rider_type: str = "unknown"
    bike_type: str = "unknown"


def _parse_time(text: str) -> datetime:
    text = text.strip()
    try:
        return datetime.strptime(text, TIME_FORMAT)
    except ValueError:
        # exports sometimes carry fractional seconds
        return datetime.strptime(text, TIME_FORMAT + ".%f")


def _rider(text: str) -> str:
    text = text.strip().lower()
    return text if text in ("member", "casual") else "unknown"


def _bike(text: str) -> str:
    text = text.strip().lower()
    for kind in ("classic", "electric"):
        if text.startswith(kind):
            return kind
    return "unknown"


def ingest_trips(stream, year: int, month: int) -> tuple[list[TripRecord], int]:
    """Read a trip CSV and keep the rows that start in ``year``/``month``.

    Returns ``(records, n_malformed)``. Rows with a missing station, an
    unparseable timestamp or out-of-range coordinates count as malformed.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    for col in TRIP_COLUMNS:
        if col not in header:
            raise SchemaError(f"trip CSV is missing required column {col!r}")
    records = []
    malformed = 0
    for row in reader:
        try:
            station = (row["start_station_id"] or "").strip()
            lat = float(row["start_lat"])
            lng = float(row["start_lng"])
            ts = _parse_time(row["started_at"] or "")
            if not station or not (-90.0 <= lat <= 90.0) or not (-180.0 <= lng <= 180.0):
                raise ValueError
        except (ValueError, TypeError):
            malformed += 1
            continue
        if ts.year != year or ts.month != month:
            continue
        records.append(TripRecord(station, lat, lng, ts, _rider(row["member_casual"] or ""),
                                  _bike(row["rideable_type"] or "")))
    if not records:
        raise EmptyPanelError(f"no valid trips for {year}-{month:02d}")
    return records, malformed


@dataclass
class FeaturePanel:
    """Station-hour rows with columns in ``PANEL_COLUMNS`` order."""

    frame: pd.DataFrame

    def __len__(self):
        return len(self.frame)

    @property
    def A(self) -> np.ndarray:
        return self.frame.loc[:, list(ANCHOR_COLUMNS)].to_numpy(dtype=np.float64)

    @property
    def T_raw(self) -> np.ndarray:
        return self.frame.loc[:, list(TRANSFER_COLUMNS)].to_numpy(dtype=np.float64)

    @property
    def Y(self) -> np.ndarray:
        return self.frame["demand"].to_numpy(dtype=np.float64)

    @property
    def z(self) -> np.ndarray:
        return np.log1p(self.Y)

    @property
    def station_id(self) -> np.ndarray:
        return self.frame["station_id"].to_numpy()

    @property
    def t(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.frame["t"])

    def to_csv(self, path_or_buf=None):
        out = self.frame.copy()
        out["t"] = out["t"].dt.strftime(TIME_FORMAT)
        return out.to_csv(path_or_buf, index=False, float_format="%.17g", lineterminator="\n")

    @classmethod
    def from_csv(cls, path_or_buf) -> "FeaturePanel":
        df = pd.read_csv(path_or_buf, dtype={"station_id": str}, float_precision="round_trip")
        missing = [c for c in PANEL_COLUMNS if c not in df.columns]
        if missing:
            raise SchemaError(f"panel CSV is missing column {missing[0]!r}")
        df = df.loc[:, list(PANEL_COLUMNS)]
        df["t"] = pd.to_datetime(df["t"], format=TIME_FORMAT)
        df["demand"] = df["demand"].astype(np.int64)
        df["is_weekend"] = df["is_weekend"].astype(np.int64)
        for c in TRANSFER_COLUMNS:
            df[c] = df[c].astype(np.float64)
        return cls(df)


def _calendar(hours: pd.DatetimeIndex) -> dict[str, np.ndarray]:
    h = hours.hour.to_numpy()
    dow = hours.dayofweek.to_numpy()
    return {
        "hour_sin": np.sin(2 * np.pi * h / 24),
        "hour_cos": np.cos(2 * np.pi * h / 24),
        "dow_sin": np.sin(2 * np.pi * dow / 7),
        "dow_cos": np.cos(2 * np.pi * dow / 7),
        "is_weekend": (dow >= 5).astype(np.int64),
    }


def _trailing(demand: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Lag ``window`` hours back and the mean of the ``window`` hours before each row.

    Hours before the first row count as zero demand.
    """
    cs = np.concatenate([[0], np.cumsum(demand)])
    k = np.arange(len(demand))
    lo = np.maximum(k - window, 0)
    total = cs[k] - cs[lo]
    lag = np.where(k >= window, demand[np.maximum(k - window, 0)], 0)
    return lag, total / window


def station_frame(station: str, lat: float, lng: float, grid: pd.DatetimeIndex,
                  demand: np.ndarray) -> pd.DataFrame:
    """Feature rows for one station over a dense hourly ``grid``."""
    demand = np.asarray(demand, dtype=np.int64)
    lag1, _ = _trailing(demand, 1)
    lag24, roll24 = _trailing(demand, 24)
    _, roll168 = _trailing(demand, 168)
    part = {
        "station_id": np.full(len(grid), station, dtype=object),
        "lat": np.full(len(grid), float(lat)),
        "lng": np.full(len(grid), float(lng)),
        "t": grid,
        "demand": demand,
        **_calendar(grid),
        "lag_1h": lag1.astype(np.float64),
        "lag_24h": lag24.astype(np.float64),
        "rolling_24h_mean": roll24,
        "rolling_168h_mean": roll168,
    }
    return pd.DataFrame(part, columns=list(PANEL_COLUMNS))


def aggregate_station_hours(trips: Iterable[TripRecord]) -> FeaturePanel:
    """Count trips per (station, hour) and engineer the causal features.

    Each station gets a dense hourly grid from its first to its last trip hour;
    hours inside that window with no trips are zero-demand rows.
    """
    trips = list(trips)
    if not trips:
        raise EmptyPanelError("no trips to aggregate")
    df = pd.DataFrame({
        "station_id": [r.start_station_id for r in trips],
        "lat": [r.start_lat for r in trips],
        "lng": [r.start_lng for r in trips],
        "t": pd.to_datetime([r.start_time for r in trips]).floor("h"),
    })
    coords = df.groupby("station_id", sort=True)[["lat", "lng"]].median()
    counts = df.groupby(["station_id", "t"], sort=True).size()
    parts = []
    for station, series in counts.groupby(level=0, sort=True):
        series = series.droplevel(0)
        grid = pd.date_range(series.index.min(), series.index.max(), freq="h")
        demand = series.reindex(grid, fill_value=0).to_numpy(dtype=np.int64)
        parts.append(station_frame(station, coords.at[station, "lat"], coords.at[station, "lng"],
                                   grid, demand))
    frame = pd.concat(parts, ignore_index=True)
    return FeaturePanel(frame)


@dataclass(frozen=True)
class Standardizer:
    mu: np.ndarray
    sigma: np.ndarray
    clamped: tuple[bool, ...] = ()

    @property
    def warning(self) -> bool:
        return any(self.clamped)

    def transform(self, T_raw) -> np.ndarray:
        return (np.log1p(np.asarray(T_raw, dtype=np.float64)) - self.mu) / self.sigma

    def inverse(self, T) -> np.ndarray:
        return np.expm1(np.asarray(T, dtype=np.float64) * self.sigma + self.mu)


def fit_standardizer(T_source, T_target_unlabeled) -> Standardizer:
    """Fit log1p mean/std on the row-concatenation of both pools."""
    T_source = np.atleast_2d(np.asarray(T_source, dtype=np.float64))
    T_target_unlabeled = np.atleast_2d(np.asarray(T_target_unlabeled, dtype=np.float64))
    if T_source.shape[1] != len(TRANSFER_COLUMNS) or T_target_unlabeled.shape[1] != len(TRANSFER_COLUMNS):
        raise ValueError(f"transfer matrices need {len(TRANSFER_COLUMNS)} columns")
    L = np.log1p(np.vstack([T_source, T_target_unlabeled]))
    mu = L.mean(0)
    sd = L.std(0)
    clamped = tuple(bool(s < SIGMA_FLOOR) for s in sd)
    if any(clamped):
        log.warning("constant transfer column(s) %s; sigma clamped to %g",
                    [c for c, k in zip(TRANSFER_COLUMNS, clamped) if k], SIGMA_FLOOR)
    return Standardizer(mu=mu, sigma=np.maximum(sd, SIGMA_FLOOR), clamped=clamped)


@dataclass(frozen=True)
class Pool:
    T: np.ndarray
    A: np.ndarray
    Y: np.ndarray | None
    z: np.ndarray | None
    station_id: np.ndarray
    t: np.ndarray

    def __len__(self):
        return len(self.T)

    def keys(self) -> set[tuple[str, np.datetime64]]:
        return set(zip(self.station_id.tolist(), self.t.tolist()))


@dataclass(frozen=True)
class SplitConfig:
    n_source: int = 1000
    n_target_labeled: int = 500
    n_target_unlabeled: int = 1000
    n_test: int = 3000
    labeled_days: int = 7


@dataclass(frozen=True)
class DomainSplit:
    source_labeled: Pool
    target_labeled: Pool
    target_unlabeled: Pool
    target_test: Pool
    standardizer: Standardizer
    seed: int
    actual_sizes: dict[str, int] = field(default_factory=dict)
    short_labeled_days: bool = False
    contaminated_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _take(rng, n_avail: int, n_req: int) -> np.ndarray:
    if n_req >= n_avail:
        return np.arange(n_avail)
    return rng.choice(n_avail, size=n_req, replace=False)


def _pool(panel: FeaturePanel, idx: np.ndarray, std: Standardizer | None, labeled: bool) -> Pool:
    sub = panel.frame.iloc[idx]
    sp = FeaturePanel(sub)
    T = sp.T_raw if std is None else std.transform(sp.T_raw)
    return Pool(
        T=T, A=sp.A,
        Y=sp.Y if labeled else None,
        z=sp.z if labeled else None,
        station_id=sub["station_id"].to_numpy(),
        t=sub["t"].to_numpy(),
    )


def make_split(source_panel: FeaturePanel, target_panel: FeaturePanel,
               config: SplitConfig | None = None, seed: int = 2026) -> DomainSplit:
    """Draw the four sample pools and standardize them with one shared fit.

    Labeled target rows come from target days ``1..labeled_days``, test rows
    from later days, and the unlabeled feature pool from the whole target
    panel. Requests larger than a pool take the whole pool.
    """
    cfg = config or SplitConfig()
    rng = np.random.default_rng(seed)
    day = target_panel.t.day.to_numpy()
    early = np.flatnonzero(day <= cfg.labeled_days)
    late = np.flatnonzero(day > cfg.labeled_days)
    if len(early) == 0:
        raise EmptyPanelError("target panel has no rows in the labeled days")
    short = len(np.unique(day[early])) < cfg.labeled_days
    if short:
        log.warning("target panel covers only %d labeled day(s)", len(np.unique(day[early])))

    src_idx = _take(rng, len(source_panel), cfg.n_source)
    lab_idx = early[_take(rng, len(early), cfg.n_target_labeled)]
    unl_idx = _take(rng, len(target_panel), cfg.n_target_unlabeled)
    test_idx = late[_take(rng, len(late), cfg.n_test)]

    std = fit_standardizer(source_panel.T_raw[src_idx], target_panel.T_raw[unl_idx])
    sizes = {"source_labeled": len(src_idx), "target_labeled": len(lab_idx),
             "target_unlabeled": len(unl_idx), "target_test": len(test_idx)}
    return DomainSplit(
        source_labeled=_pool(source_panel, src_idx, std, True),
        target_labeled=_pool(target_panel, lab_idx, std, True),
        target_unlabeled=_pool(target_panel, unl_idx, std, False),
        target_test=_pool(target_panel, test_idx, std, True),
        standardizer=std,
        seed=seed,
        actual_sizes=sizes,
        short_labeled_days=short,
    )


def inject_contamination(split: DomainSplit, ratio: float, seed: int = 0,
                         low: float = -6.0, high: float = 6.0) -> DomainSplit:
    """Replace ``floor(ratio * n_t)`` unlabeled target rows with uniform noise.

    Noise is drawn in standardized space, independently per coordinate.
    """
    if not 0.0 <= ratio <= 0.5:
        raise ValueError("contamination ratio must lie in [0, 0.5]")
    n_t = len(split.target_unlabeled)
    k = math.floor(ratio * n_t + 1e-9)
    if k == 0:
        return split
    rng = np.random.default_rng([seed, 0xC0])
    rows = np.sort(rng.choice(n_t, size=k, replace=False))
    T = split.target_unlabeled.T.copy()
    T[rows] = rng.uniform(low, high, size=(k, T.shape[1]))
    return replace(split, target_unlabeled=replace(split.target_unlabeled, T=T), contaminated_rows=rows)
