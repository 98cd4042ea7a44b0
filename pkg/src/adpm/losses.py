"""Training objective: per-branch MMD regularizers plus noise reconstruction.

The maximum mean discrepancy between a predicted-noise batch and the
true Gaussian draws is the biased V-statistic

    MMD(A, B) = K(A, A) - 2 K(A, B) + K(B, B),

with K(X, Y) the mean RBF kernel value over all row pairs. The total
objective is w * (L_g + L_l) + L_eps, where L_eps is the batch-mean
squared error of the fused branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var, scalar
from .errors import ConfigError, ShapeError, UsageError


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel with a fixed or median-heuristic bandwidth."""

    kind: str = "rbf"
    bandwidth: float = 1.0
    bandwidth_mode: str = "fixed"  # or "median-heuristic"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ConfigError(f"unsupported kernel {self.kind!r}")
        if self.bandwidth_mode not in ("fixed", "median-heuristic"):
            raise ConfigError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == "fixed" and not (np.isfinite(self.bandwidth)
                                                   and self.bandwidth > 0):
            raise ConfigError(f"bandwidth must be finite and positive, got {self.bandwidth}")


@dataclass(frozen=True)
class LossReport:
    """Scalars of one training step; total = w * (L_g + L_l) + L_eps."""

    L_g: float
    L_l: float
    L_eps: float
    L_total: float
    w: float


def resolve_bandwidth(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> float:
    """Bandwidth for one evaluation; the median heuristic uses the
    median pairwise Euclidean distance of the stacked rows (1.0 when the
    median is 0)."""
    if cfg.bandwidth_mode == "fixed":
        return cfg.bandwidth
    stacked = np.concatenate([a, b], axis=0)
    diff = stacked[:, None, :] - stacked[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    iu = np.triu_indices(stacked.shape[0], 1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(dist[iu]))
    return med if med > 0.0 else 1.0


def rbf_kernel_mean_graph(tape: Tape, a: Var, b: Var, sigma: float) -> Var:
    """Mean RBF kernel value over all row pairs, differentiable."""
    m, cols = a.shape
    p = b.shape[0]
    if b.shape[1] != cols:
        raise ShapeError(f"column counts differ: {a.shape} vs {b.shape}")
    ones_cols = tape.const(np.ones((cols, 1)))
    ra = tape.matmul(tape.mul(a, a), ones_cols)              # (m, 1)
    rb = tape.matmul(tape.mul(b, b), ones_cols)              # (p, 1)
    gram = tape.matmul(a, b, trans_b=True)                   # (m, p)
    sq = tape.sub(
        tape.add(tape.matmul(ra, tape.const(np.ones((1, p)))),
                 tape.matmul(tape.const(np.ones((m, 1))), rb, trans_b=True)),
        tape.scale(gram, 2.0))
    kernel = tape.exp(tape.scale(sq, -1.0 / (2.0 * sigma * sigma)))
    return tape.mean(kernel)


def mmd_loss_graph(tape: Tape, eps_true: Var, eps_pred: Var, cfg: KernelConfig) -> Var:
    """V-statistic MMD between true and predicted noise batches."""
    sigma = resolve_bandwidth(eps_true.value, eps_pred.value, cfg)
    k_tt = rbf_kernel_mean_graph(tape, eps_true, eps_true, sigma)
    k_tp = rbf_kernel_mean_graph(tape, eps_pred, eps_true, sigma)
    k_pp = rbf_kernel_mean_graph(tape, eps_pred, eps_pred, sigma)
    return tape.add(tape.sub(k_tt, tape.scale(k_tp, 2.0)), k_pp)


def eps_loss_graph(tape: Tape, eps_true: Var, eps_pred: Var) -> Var:
    """Batch mean of squared row differences."""
    if eps_true.shape != eps_pred.shape:
        raise ShapeError(f"shapes differ: {eps_true.shape} vs {eps_pred.shape}")
    n = eps_true.shape[0]
    return tape.scale(tape.sum_sq(tape.sub(eps_pred, eps_true)), 1.0 / n)


def total_loss_graph(tape: Tape, l_g: Var, l_l: Var, l_eps: Var, w: float) -> Var:
    if w <= 0:
        raise ConfigError(f"loss weight w must be positive, got {w}")
    return tape.add(tape.scale(tape.add(l_g, l_l), w), l_eps)


def _as_batch(x) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[0] < 1:
        raise UsageError("batch must contain at least one row")
    return arr


def rbf_kernel_mean(a, b, cfg: KernelConfig = KernelConfig()) -> float:
    a, b = _as_batch(a), _as_batch(b)
    tape = Tape()
    return scalar(rbf_kernel_mean_graph(tape, tape.const(a), tape.const(b),
                                        resolve_bandwidth(a, b, cfg)))


def mmd_loss(eps_true, eps_pred, cfg: KernelConfig = KernelConfig()) -> float:
    a, b = _as_batch(eps_true), _as_batch(eps_pred)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"column counts differ: {a.shape} vs {b.shape}")
    tape = Tape()
    return scalar(mmd_loss_graph(tape, tape.const(a), tape.const(b), cfg))


def eps_loss(eps_true, eps_pred) -> float:
    tape = Tape()
    return scalar(eps_loss_graph(tape, tape.const(_as_batch(eps_true)),
                                 tape.const(_as_batch(eps_pred))))


def total_loss(l_g: float, l_l: float, l_eps: float, w: float = 0.5) -> float:
    if w <= 0:
        raise ConfigError(f"loss weight w must be positive, got {w}")
    return w * (l_g + l_l) + l_eps
