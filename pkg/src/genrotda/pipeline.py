"""Anchor-residual decomposition and the compared adaptation methods."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import forest, mmd, netgen, ot
from .panel import DomainSplit

__all__ = [
    "MethodId",
    "MAIN_METHODS",
    "ABLATION_METHODS",
    "ROBUSTNESS_METHODS",
    "PipelineConfig",
    "AnchorModel",
    "ResidualSet",
    "MethodReport",
    "MethodResult",
    "MethodError",
    "fit_anchor",
    "compute_residuals",
    "run_method",
    "metrics",
    "derive_seed",
]


class MethodId(str, enum.Enum):
    AnchorOnly = "AnchorOnly"
    SourceOnly = "SourceOnly"
    TargetOnly = "TargetOnly"
    FineTune = "FineTune"
    MMDAdapt = "MMDAdapt"
    OTDA = "OTDA"
    SinkhornOTDA = "SinkhornOTDA"
    ROTDA = "ROTDA"
    GenOTDA = "GenOTDA"
    GenROTDA = "GenROTDA"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, text: str) -> "MethodId":
        key = text.strip().replace("-", "").replace("_", "").lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        raise ValueError(f"unknown method {text!r}; choose from {[m.value for m in cls]}")


MAIN_METHODS = (MethodId.AnchorOnly, MethodId.SourceOnly, MethodId.TargetOnly, MethodId.FineTune,
                MethodId.MMDAdapt, MethodId.SinkhornOTDA, MethodId.ROTDA, MethodId.GenOTDA,
                MethodId.GenROTDA)
ABLATION_METHODS = (MethodId.OTDA, MethodId.ROTDA, MethodId.GenOTDA, MethodId.GenROTDA)
ROBUSTNESS_METHODS = (MethodId.SinkhornOTDA, MethodId.GenOTDA, MethodId.GenROTDA)

# (uses generator, uses trimming) per OT-family method
ABLATION_FLAGS = {
    MethodId.OTDA: (False, False),
    MethodId.ROTDA: (False, True),
    MethodId.GenOTDA: (True, False),
    MethodId.GenROTDA: (True, True),
}


@dataclass(frozen=True)
class PipelineConfig:
    target_weight: float = 8.0
    eps_scale: float = 0.1
    otda_eps_scale: float = 0.01
    keep_mass: float = 0.8
    sinkhorn_max_iters: int = 1000
    sinkhorn_tol: float = 1e-9
    gen_epochs: int = 200
    gen_lr: float = 1e-3
    gen_weights: netgen.GenLossWeights = field(default_factory=netgen.GenLossWeights)
    kmm_bound: float = 10.0
    kmm_iters: int = 500
    forest: forest.ForestConfig = field(default_factory=forest.ForestConfig)


def derive_seed(seed: int, role: str) -> int:
    """Stable per-role seed; every method shares the same stream per role."""
    tag = sum(ord(c) * 31**k for k, c in enumerate(role)) % (2**31)
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


class MethodError(RuntimeError):
    def __init__(self, method: MethodId, cause: BaseException):
        super().__init__(f"{method}: {cause}")
        self.method = method
        self.cause = cause


@dataclass
class AnchorModel:
    model: forest.ForestModel

    def predict(self, A) -> np.ndarray:
        return forest.predict(self.model, A)


@dataclass(frozen=True)
class ResidualSet:
    r_source: np.ndarray
    r_target_lab: np.ndarray


@dataclass(frozen=True)
class MethodReport:
    method: str
    mae: float
    rmse: float
    r2: float
    runtime_s: float
    seed: int
    task: str = ""

    FIELDS = ("method", "mae", "rmse", "r2", "runtime_s", "seed", "task")


@dataclass
class MethodResult:
    y_pred: np.ndarray
    z_hat: np.ndarray
    anchor_test: np.ndarray
    r_hat: np.ndarray
    report: MethodReport
    extras: dict = field(default_factory=dict)


def fit_anchor(split: DomainSplit, config: forest.ForestConfig | None = None, seed: int = 0) -> AnchorModel:
    """Forest on the labeled target anchor features and log-demand."""
    lab = split.target_labeled
    if len(lab) == 0:
        raise ValueError("anchor needs at least one labeled target row")
    cfg = replace(config or forest.ForestConfig(), seed=seed)
    return AnchorModel(forest.fit(lab.A, lab.z, None, cfg))


def compute_residuals(split: DomainSplit, anchor: AnchorModel) -> ResidualSet:
    # source rows are scored by the same target-fit anchor
    return ResidualSet(
        r_source=split.source_labeled.z - anchor.predict(split.source_labeled.A),
        r_target_lab=split.target_labeled.z - anchor.predict(split.target_labeled.A),
    )


def metrics(y_true, y_pred) -> dict[str, float]:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("y_true and y_pred must be non-empty and the same length")
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = float("nan") if y_true.size < 2 or ss_tot == 0.0 else 1.0 - float(np.sum(err**2)) / ss_tot
    return {"mae": mae, "rmse": rmse, "r2": r2}


def _residual_forest(X_src, r_src, split, residuals, cfg: PipelineConfig, seed: int,
                     src_weights=None) -> forest.ForestModel:
    """Pooled source + weighted labeled-target residual forest."""
    X_tl = split.target_labeled.T
    w_src = np.ones(len(X_src)) if src_weights is None else np.asarray(src_weights, dtype=np.float64)
    X = np.vstack([X_src, X_tl])
    y = np.concatenate([r_src, residuals.r_target_lab])
    w = np.concatenate([w_src, np.full(len(X_tl), cfg.target_weight)])
    return forest.fit(X, y, w, replace(cfg.forest, seed=seed))


def _transport_source(X_src, fallback, split, cfg: PipelineConfig, eps_scale: float, trim: bool):
    T_t = split.target_unlabeled.T
    cost = ot.cost_matrix(X_src, T_t)
    plan = ot.sinkhorn(cost, eps_scale, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol, check_every=10)
    trimmed = ot.trim_plan(plan, cost, cfg.keep_mass if trim else 1.0)
    projected = ot.barycentric_project(trimmed, T_t, fallback)
    info = {"epsilon": plan.epsilon, "sinkhorn_iters": plan.iterations_used,
            "sinkhorn_converged": plan.converged, "kept_mass": trimmed.kept_mass,
            "n_fallback": len(trimmed.fallback_rows)}
    return projected, info


def run_method(method: MethodId | str, split: DomainSplit, config: PipelineConfig | None = None,
               seed: int = 2026, task: str = "") -> MethodResult:
    """Fit one method on ``split`` and predict demand for ``split.target_test``.

    Predictions follow ``Y = exp(anchor(A) + r_hat) - 1`` clamped at zero.
    """
    method = MethodId.parse(method) if isinstance(method, str) else method
    cfg = config or PipelineConfig()
    try:
        return _run(method, split, cfg, seed, task)
    except MethodError:
        raise
    except Exception as exc:  # noqa: BLE001 - surfaced with the method attached
        raise MethodError(method, exc) from exc


def _run(method: MethodId, split: DomainSplit, cfg: PipelineConfig, seed: int, task: str) -> MethodResult:
    start = time.perf_counter()
    anchor = fit_anchor(split, cfg.forest, derive_seed(seed, "anchor"))
    residuals = compute_residuals(split, anchor)
    test = split.target_test
    T_s = split.source_labeled.T
    r_s = residuals.r_source
    rf_seed = derive_seed(seed, "residual")
    extras: dict = {}

    M = MethodId
    if method is M.AnchorOnly:
        r_hat = np.zeros(len(test))
    elif method is M.SourceOnly:
        model = forest.fit(T_s, r_s, None, replace(cfg.forest, seed=rf_seed))
        r_hat = forest.predict(model, test.T)
    elif method is M.TargetOnly:
        model = forest.fit(split.target_labeled.T, residuals.r_target_lab, None,
                           replace(cfg.forest, seed=rf_seed))
        r_hat = forest.predict(model, test.T)
    elif method is M.FineTune:
        model = _residual_forest(T_s, r_s, split, residuals, cfg, rf_seed)
        r_hat = forest.predict(model, test.T)
    elif method is M.MMDAdapt:
        w = mmd.kmm_weights(T_s, split.target_unlabeled.T, bound=cfg.kmm_bound, iters=cfg.kmm_iters)
        extras["kmm_weight_range"] = (float(w.min()), float(w.max()))
        model = _residual_forest(T_s, r_s, split, residuals, cfg, rf_seed, src_weights=w)
        r_hat = forest.predict(model, test.T)
    else:
        use_gen, trim = ABLATION_FLAGS.get(method, (False, False))
        eps_scale = cfg.otda_eps_scale if method is M.OTDA else cfg.eps_scale
        if use_gen:
            params, trace = netgen.train_generator(split, residuals, cfg.gen_weights, cfg.gen_epochs,
                                                   cfg.gen_lr, derive_seed(seed, "generator"))
            X_src = netgen.forward(params, T_s)
            extras["generator"] = params
            extras["trace"] = trace
        else:
            X_src = T_s
        projected, info = _transport_source(X_src, X_src, split, cfg, eps_scale, trim)
        extras.update(info)
        extras["projected_source"] = projected
        model = _residual_forest(projected, r_s, split, residuals, cfg, rf_seed)
        r_hat = forest.predict(model, test.T)

    anchor_test = anchor.predict(test.A)
    z_hat = anchor_test + r_hat
    y_pred = np.maximum(np.expm1(z_hat), 0.0)
    runtime = time.perf_counter() - start
    scores = metrics(test.Y, y_pred)
    report = MethodReport(method=method.value, runtime_s=runtime, seed=seed, task=task, **scores)
    return MethodResult(y_pred=y_pred, z_hat=z_hat, anchor_test=anchor_test, r_hat=r_hat,
                        report=report, extras=extras)
