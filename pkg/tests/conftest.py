"""Shared synthetic harness and the acceptance result recorder."""

from __future__ import annotations

import pytest

from genrotda.cli import diagnose, load_pair
from genrotda.config import ExperimentConfig
from genrotda.panel import inject_contamination, make_split
from genrotda.pipeline import MethodId, run_method

HARNESS_SEEDS = (2026, 2027, 2028)

_ACCEPTANCE: list[str] = []


class Harness:
    """Runs methods on the default synthetic main task, caching every result.

    Each seed drives the synthetic city, the split, the contamination draw
    and the method seeds, exactly as ``genrotda run --seed`` would.
    """

    def __init__(self, base: ExperimentConfig | None = None):
        self.base = base or ExperimentConfig()
        self._splits = {}
        self._mae = {}
        self._diag = {}

    def config(self, seed: int) -> ExperimentConfig:
        return self.base.replace(seed=seed)

    def split(self, seed: int):
        if seed not in self._splits:
            cfg = self.config(seed)
            source, target = load_pair(cfg, None, cfg.source_year, cfg.target_year)
            self._splits[seed] = make_split(source, target, cfg.split_config(), seed)
        return self._splits[seed]

    def mae(self, seed: int, method: MethodId, ratio: float = 0.0) -> float:
        key = (seed, method, ratio)
        if key not in self._mae:
            split = inject_contamination(self.split(seed), ratio, seed)
            cfg = self.config(seed)
            self._mae[key] = run_method(method, split, cfg.pipeline_config(), seed).report.mae
        return self._mae[key]

    def diagnose(self, seed: int):
        if seed not in self._diag:
            self._diag[seed] = diagnose(self.config(seed), None)
        return self._diag[seed]

    def mean_mae(self, method: MethodId, ratio: float = 0.0) -> float:
        return sum(self.mae(s, method, ratio) for s in HARNESS_SEEDS) / len(HARNESS_SEEDS)


@pytest.fixture(scope="session")
def harness() -> Harness:
    return Harness()


@pytest.fixture
def acceptance():
    """``check(n, ok, detail)`` records one line per criterion, then asserts."""

    def check(n, ok: bool, detail: str):
        _ACCEPTANCE.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        print(_ACCEPTANCE[-1])
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
