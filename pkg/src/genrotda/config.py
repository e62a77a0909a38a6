"""Experiment configuration: a flat ``key = value`` text file with typed fields."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from . import forest, netgen
from .panel import SplitConfig
from .pipeline import MAIN_METHODS, MethodId, PipelineConfig
from .synth import SynthScenario

__all__ = ["ConfigError", "ExperimentConfig", "parse_tasks", "format_tasks"]


class ConfigError(ValueError):
    pass


def parse_tasks(text: str) -> tuple[tuple[int, int], ...]:
    tasks = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        try:
            src, tgt = (int(x) for x in item.split("-"))
        except ValueError as exc:
            raise ConfigError(f"bad task {item!r}; expected SRC-TGT such as 2025-2026") from exc
        tasks.append((src, tgt))
    return tuple(tasks)


def format_tasks(tasks) -> str:
    return ",".join(f"{s}-{t}" for s, t in tasks)


@dataclass(frozen=True)
class ExperimentConfig:
    data: str = "synthetic"  # "synthetic" or "panels"
    source_year: int = 2025
    target_year: int = 2026
    month: int = 3
    seed: int = 2026
    methods: tuple[str, ...] = tuple(m.value for m in MAIN_METHODS)

    n_source: int = 1000
    n_target_labeled: int = 500
    n_target_unlabeled: int = 1000
    n_test: int = 3000
    labeled_days: int = 7

    target_weight: float = 8.0
    eps_scale: float = 0.1
    otda_eps_scale: float = 0.01
    keep_mass: float = 0.8
    sinkhorn_max_iters: int = 1000
    sinkhorn_tol: float = 1e-9
    gen_epochs: int = 200
    gen_lr: float = 1e-3
    lambda_id: float = 0.1
    lambda_lp: float = 1.0
    lambda_sup: float = 1.0
    kmm_bound: float = 10.0
    kmm_iters: int = 500

    n_trees: int = 300
    min_samples_leaf: int = 3
    max_features_fraction: float = 1.0
    bootstrap: bool = True
    n_jobs: int = 1

    adjacent_tasks: tuple[tuple[int, int], ...] = ((2021, 2022), (2022, 2023), (2023, 2024), (2024, 2025))
    two_year_tasks: tuple[tuple[int, int], ...] = ((2021, 2023), (2022, 2024), (2023, 2025), (2024, 2026))
    contamination_ratios: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20)
    shift_top_k: int = 30
    record_runtime: bool = False  # blank runtime_s keeps CSVs byte-identical

    synth_n_stations: int = 60
    synth_days: int = 31
    synth_base_rate: float = 2.0
    synth_shift_strength: float = 1.0
    synth_noise: bool = True
    synth_popularity_spread: float = 0.7

    def __post_init__(self):
        if self.data not in ("synthetic", "panels"):
            raise ConfigError("data must be 'synthetic' or 'panels'")
        for m in self.methods:
            MethodId.parse(m)
        if not 0.0 < self.keep_mass <= 1.0:
            raise ConfigError("keep_mass must lie in (0, 1]")

    # -- derived configs -------------------------------------------------
    def split_config(self) -> SplitConfig:
        return SplitConfig(self.n_source, self.n_target_labeled, self.n_target_unlabeled,
                           self.n_test, self.labeled_days)

    def forest_config(self) -> forest.ForestConfig:
        return forest.ForestConfig(self.n_trees, self.min_samples_leaf, self.max_features_fraction,
                                   self.bootstrap, 0, self.n_jobs)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            target_weight=self.target_weight, eps_scale=self.eps_scale,
            otda_eps_scale=self.otda_eps_scale, keep_mass=self.keep_mass,
            sinkhorn_max_iters=self.sinkhorn_max_iters, sinkhorn_tol=self.sinkhorn_tol,
            gen_epochs=self.gen_epochs, gen_lr=self.gen_lr,
            gen_weights=netgen.GenLossWeights(self.lambda_id, self.lambda_lp, self.lambda_sup),
            kmm_bound=self.kmm_bound, kmm_iters=self.kmm_iters, forest=self.forest_config(),
        )

    def scenario(self, source_year: int | None = None, target_year: int | None = None) -> SynthScenario:
        src = self.source_year if source_year is None else source_year
        tgt = self.target_year if target_year is None else target_year
        # drift grows with the year gap
        return SynthScenario(
            n_stations=self.synth_n_stations, days=self.synth_days, base_rate=self.synth_base_rate,
            shift_strength=self.synth_shift_strength * max(tgt - src, 0), noise=self.synth_noise,
            seed=self.seed, popularity_spread=self.synth_popularity_spread,
            source_year=src, target_year=tgt, month=self.month,
        )

    def method_ids(self) -> list[MethodId]:
        return [MethodId.parse(m) for m in self.methods]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- text round trip -------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_tasks"):
                text = format_tasks(v)
            elif isinstance(v, tuple):
                text = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            changes[key] = _coerce(key, value, getattr(base, key))
        try:
            return dataclasses.replace(base, **changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _coerce(key, value: str, current):
    try:
        if key.endswith("_tasks"):
            return parse_tasks(value)
        if isinstance(current, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return low in ("true", "1", "yes")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            items = [s.strip() for s in value.split(",") if s.strip()]
            if key == "contamination_ratios":
                return tuple(float(x) for x in items)
            return tuple(items)
        return value
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
