"""Prior-shifted anisotropic forward corruption and the reverse sampler.

Forward draws follow

    y^t = sqrt(gamma_j^t) y0 + sqrt(1 - gamma_j^t) eps + (1 - sqrt(gamma_j^t)) prior,

so a zero prior recovers the plain corruption kernel. The reverse chain
starts at y^T ~ N(y_f, I) and iterates

    y^{t-1} = ( y^t - (xi - zeta)/xi * y_f - lam*beta^t/sqrt(xi) * eps_hat ) / zeta
              + sigma^t z,

with zeta = sqrt(1 - lam*beta^t), xi = 1 - gamma^t and
sigma^t = sqrt(lam*beta^t (1 - gamma^{t-1}) / (1 - gamma^t)); gamma^0 = 1
makes the final step deterministic. lam = 1 and y_f = 0 reduce the
update to the isotropic chain exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import DenoiserParams, predict_noise
from .errors import UsageError
from .priors import PriorBundle
from .schedule import ClassCensus, NoiseLevelConfig, NoiseSchedule, inference_lambda


@dataclass(frozen=True)
class ForwardDraw:
    """One corrupted label vector plus the Gaussian draw that made it."""

    t: int
    branch: str
    y_t: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True)
class SampleResult:
    """Output of one reverse chain."""

    y0: np.ndarray
    pred_class: int
    lam: float
    trace: list[tuple[int, np.ndarray]] | None = None


def forward_sample(schedule: NoiseSchedule, class_j: int, y0, prior, t: int,
                   rng, branch: str = "fused") -> ForwardDraw:
    """Corrupt y0 to step t with class_j's noise level.

    t = 0 is allowed and returns y0 exactly (gamma^0 = 1). The Gaussian
    draw is always consumed and recorded, keeping stream alignment fixed
    across t.
    """
    if not (0 <= t <= schedule.T):
        raise UsageError(f"t must lie in [0, {schedule.T}], got {t}")
    if not (0 <= class_j < schedule.k):
        raise UsageError(f"class {class_j} out of range for k={schedule.k}")
    y0 = np.asarray(y0, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    eps = rng.standard_normal(y0.shape)
    gamma = schedule.gamma[class_j, t]
    root = np.sqrt(gamma)
    y_t = root * y0 + np.sqrt(1.0 - gamma) * eps + (1.0 - root) * prior
    return ForwardDraw(t=t, branch=branch, y_t=y_t, eps=eps)


def reverse_step(schedule: NoiseSchedule, lam: float, t: int, y_t, y_f,
                 eps_hat, z, gamma_row: np.ndarray | None = None) -> np.ndarray:
    """One reverse update from step t to t-1 for a scalar noise level.

    gamma_row may carry the precomputed cumulative products for lam
    (as returned by schedule.gamma_for); it is recomputed otherwise.
    """
    if not (1 <= t <= schedule.T):
        raise UsageError(f"t must lie in [1, {schedule.T}], got {t}")
    if gamma_row is None:
        gamma_row = schedule.gamma_for(lam)
    y_t = np.asarray(y_t, dtype=np.float64)
    y_f = np.asarray(y_f, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    beta_t = schedule.beta[t - 1]
    xi = 1.0 - gamma_row[t]
    if xi == 0.0:
        raise UsageError(f"reverse step singular at t={t}: gamma^t = 1")
    zeta = np.sqrt(1.0 - lam * beta_t)
    sigma = np.sqrt(lam * beta_t * (1.0 - gamma_row[t - 1]) / xi)
    drift = y_t - ((xi - zeta) / xi) * y_f - (lam * beta_t / np.sqrt(xi)) * eps_hat
    return drift / zeta + sigma * z


def sample_timesteps(T: int, steps: int) -> np.ndarray:
    """Descending timestep subsequence, endpoints T and 1 included."""
    if not (1 <= steps <= T):
        raise UsageError(f"steps must lie in [1, {T}], got {steps}")
    if steps == 1:
        return np.array([T], dtype=np.int64)
    return np.round(np.linspace(T, 1, steps)).astype(np.int64)


def sample(schedule: NoiseSchedule, params: DenoiserParams, bundle: PriorBundle,
           cond, lam_logits, census: ClassCensus, cfg: NoiseLevelConfig, rng,
           steps: int, lam: float | None = None, trace: bool = False) -> SampleResult:
    """Run the reverse chain for one input and classify its endpoint.

    The noise level defaults to that of the class the prior model
    predicts (computed once, before the loop); pass lam explicitly to
    force a level, e.g. 1.0 for the isotropic baseline. With steps < T
    the chain visits an evenly strided timestep subsequence and uses the
    stored gamma values at those indices. One z vector is drawn per
    step even where sigma = 0, keeping the stream layout fixed.
    """
    if lam is None:
        lam = inference_lambda(lam_logits, census, cfg)
    gamma_row = schedule.gamma_for(lam)  # validates feasibility up front
    cond = np.asarray(cond, dtype=np.float64)
    y_f = bundle.y_f
    y = y_f + rng.standard_normal(y_f.shape)
    snapshots: list[tuple[int, np.ndarray]] = [(schedule.T, y.copy())]
    for t in sample_timesteps(schedule.T, steps):
        z = rng.standard_normal(y_f.shape)
        eps_hat = predict_noise(params, cond, y, y_f, int(t), schedule.T)
        y = reverse_step(schedule, lam, int(t), y, y_f, eps_hat, z, gamma_row=gamma_row)
        snapshots.append((int(t) - 1, y.copy()))
    return SampleResult(y0=y, pred_class=int(np.argmax(y)), lam=float(lam),
                        trace=snapshots if trace else None)
