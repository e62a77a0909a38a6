"""Residual feature generator ``G(T) = T + h(T)`` with hand-written backprop.

``h`` is a 4 -> 32 -> 32 -> 4 tanh network with an affine output layer. A
linear label head on the generated features regularizes training and is
discarded afterwards.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .mmd import KernelSpec, gram, median_bandwidth, mmd2_and_grad

__all__ = [
    "GeneratorParams",
    "GenLossWeights",
    "TrainTrace",
    "GeneratorTrainingError",
    "init_params",
    "zero_params",
    "forward",
    "gen_loss",
    "fit_generator",
    "train_generator",
]

BLOCKS = ("W1", "b1", "W2", "b2", "W3", "b3", "head_w", "head_b")


class GeneratorTrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str = "non-finite generator loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class GeneratorParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in BLOCKS}

    @classmethod
    def from_blocks(cls, blocks: dict[str, np.ndarray]) -> "GeneratorParams":
        return cls(**{k: np.asarray(blocks[k], dtype=np.float64) for k in BLOCKS})

    @property
    def dim(self) -> int:
        return self.W1.shape[0]


@dataclass(frozen=True)
class GenLossWeights:
    lambda_id: float = 0.1
    lambda_lp: float = 1.0
    lambda_sup: float = 1.0

    def __post_init__(self):
        for name in ("lambda_id", "lambda_lp", "lambda_sup"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class TrainTrace:
    epoch: list[int] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    align: list[float] = field(default_factory=list)
    id: list[float] = field(default_factory=list)
    label: list[float] = field(default_factory=list)
    target: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def append(self, epoch: int, parts: dict[str, float]):
        self.epoch.append(epoch)
        for k in ("total", "align", "id", "label", "target"):
            getattr(self, k).append(parts[k])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "total", "align", "id", "label", "target"])
            for row in zip(self.epoch, self.total, self.align, self.id, self.label, self.target):
                w.writerow([row[0], *(repr(float(x)) for x in row[1:])])


def init_params(dim: int = 4, hidden: int = 32, seed: int = 0) -> GeneratorParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return GeneratorParams(
        W1=glorot(dim, hidden), b1=np.zeros(hidden),
        W2=glorot(hidden, hidden), b2=np.zeros(hidden),
        W3=glorot(hidden, dim), b3=np.zeros(dim),
        head_w=glorot(dim, 1)[:, 0], head_b=np.zeros(()),
    )


def zero_params(dim: int = 4, hidden: int = 32) -> GeneratorParams:
    p = init_params(dim, hidden)
    return GeneratorParams.from_blocks({k: np.zeros_like(v) for k, v in p.blocks().items()})


def _hidden(params, T):
    H1 = np.tanh(T @ params.W1 + params.b1)
    H2 = np.tanh(H1 @ params.W2 + params.b2)
    return H1, H2


def forward(params: GeneratorParams, T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    _, H2 = _hidden(params, T)
    return T + H2 @ params.W3 + params.b3


def displacement_bound(params: GeneratorParams) -> float:
    """Upper bound on ``||G(T) - T||`` per row: tanh outputs lie in [-1, 1]."""
    return float(np.linalg.norm(np.abs(params.W3).sum(0) + np.abs(params.b3)))


def gen_loss(params: GeneratorParams, T_s, r_s, T_t, T_t_lab, r_t_lab,
             weights: GenLossWeights, kernel: KernelSpec, kyy_mean: float | None = None):
    """Generator objective and its gradient for every parameter block.

    Returns ``(total, parts, grads)`` where ``parts`` holds the four terms.
    The target term runs the labeled target features through ``G`` too.
    """
    T_s = np.asarray(T_s, dtype=np.float64)
    T_t_lab = np.asarray(T_t_lab, dtype=np.float64).reshape(-1, T_s.shape[1])
    r_s = np.asarray(r_s, dtype=np.float64)
    r_t_lab = np.asarray(r_t_lab, dtype=np.float64).reshape(-1)
    ns, nl = len(T_s), len(T_t_lab)

    X = np.vstack([T_s, T_t_lab])
    H1, H2 = _hidden(params, X)
    G = X + H2 @ params.W3 + params.b3
    Gs, Gl = G[:ns], G[ns:]

    align, dGs = mmd2_and_grad(Gs, T_t, kernel, kyy_mean)
    disp = Gs - T_s
    id_term = float((disp * disp).sum() / ns)
    dGs = dGs + weights.lambda_id * 2.0 * disp / ns

    pred_s = Gs @ params.head_w + params.head_b
    err_s = pred_s - r_s
    label = float(np.mean(err_s**2))
    dpred_s = weights.lambda_lp * 2.0 * err_s / ns

    if nl:
        pred_l = Gl @ params.head_w + params.head_b
        err_l = pred_l - r_t_lab
        target = float(np.mean(err_l**2))
        dpred_l = weights.lambda_sup * 2.0 * err_l / nl
    else:
        target = 0.0
        dpred_l = np.zeros(0)

    total = align + weights.lambda_id * id_term + weights.lambda_lp * label + weights.lambda_sup * target

    dpred = np.concatenate([dpred_s, dpred_l])
    dG = np.vstack([dGs, np.zeros((nl, X.shape[1]))]) + dpred[:, None] * params.head_w[None, :]
    grads = {
        "head_w": G.T @ dpred,
        "head_b": np.asarray(dpred.sum()),
        "W3": H2.T @ dG,
        "b3": dG.sum(0),
    }
    dA2 = (dG @ params.W3.T) * (1.0 - H2 * H2)
    grads["W2"] = H1.T @ dA2
    grads["b2"] = dA2.sum(0)
    dA1 = (dA2 @ params.W2.T) * (1.0 - H1 * H1)
    grads["W1"] = X.T @ dA1
    grads["b1"] = dA1.sum(0)
    parts = {"total": float(total), "align": align, "id": id_term, "label": label, "target": target}
    return float(total), parts, grads


def fit_generator(T_s, r_s, T_t, T_t_lab=None, r_t_lab=None, weights: GenLossWeights | None = None,
                  epochs: int = 200, lr: float = 1e-3, seed: int = 0, hidden: int = 32,
                  kernel: KernelSpec | None = None):
    """Full-batch Adam on the generator objective.

    The MMD bandwidth is fixed once from ``(T_s, T_t)`` before the first step.
    Returns ``(params, trace, kernel)``.
    """
    weights = weights or GenLossWeights()
    T_s = np.asarray(T_s, dtype=np.float64)
    T_t = np.asarray(T_t, dtype=np.float64)
    if T_t_lab is None:
        T_t_lab, r_t_lab = np.zeros((0, T_s.shape[1])), np.zeros(0)
    kernel = kernel or KernelSpec(median_bandwidth(T_s, T_t, seed=seed))
    kyy = float(gram(T_t, T_t, kernel).mean())
    params = init_params(T_s.shape[1], hidden, seed)
    trace = TrainTrace()
    blocks = {k: v.copy() for k, v in params.blocks().items()}
    m1 = {k: np.zeros_like(v) for k, v in blocks.items()}
    m2 = {k: np.zeros_like(v) for k, v in blocks.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for epoch in range(1, epochs + 1):
        current = GeneratorParams.from_blocks(blocks)
        total, parts, grads = gen_loss(current, T_s, r_s, T_t, T_t_lab, r_t_lab, weights, kernel, kyy)
        if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise GeneratorTrainingError(epoch)
        trace.append(epoch, parts)
        for k in BLOCKS:
            m1[k] = beta1 * m1[k] + (1 - beta1) * grads[k]
            m2[k] = beta2 * m2[k] + (1 - beta2) * grads[k] ** 2
            mhat = m1[k] / (1 - beta1**epoch)
            vhat = m2[k] / (1 - beta2**epoch)
            blocks[k] = blocks[k] - lr * mhat / (np.sqrt(vhat) + eps)
    return GeneratorParams.from_blocks(blocks), trace, kernel


def train_generator(split, residuals, weights: GenLossWeights | None = None, epochs: int = 200,
                    lr: float = 1e-3, seed: int = 0):
    """Train on a ``DomainSplit`` and its ``ResidualSet``."""
    return fit_generator(
        split.source_labeled.T, residuals.r_source, split.target_unlabeled.T,
        split.target_labeled.T, residuals.r_target_lab,
        weights=weights, epochs=epochs, lr=lr, seed=seed,
    )[:2]


def with_block(params: GeneratorParams, name: str, value) -> GeneratorParams:
    return replace(params, **{name: np.asarray(value, dtype=np.float64)})
