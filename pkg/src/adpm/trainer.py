"""Joint training loop: prior warmup, anisotropic noising, three-branch loss.

Every batch draws one timestep per sample and, per branch (global,
local, fused), an independent Gaussian noise batch. Each branch's draw
is corrupted with the true class's noise level and the branch's own
prior, pushed through the shared denoiser, and scored: MMD against the
true noise for the global and local branches, mean squared error for
the fused branch. Gradients flow into the denoiser, the feature
encoder and the prior network.

Reproducibility contract: all stochasticity of epoch e comes from a
stream keyed by (seed, 2, e): first the shuffle permutation, then per
batch the timesteps and the three noise batches in branch order g, l,
f. Resuming from a checkpoint therefore reproduces an uninterrupted
run bitwise.
"""

from __future__ import annotations

import dataclasses
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import optim
from .autodiff import Tape, scalar
from .data import DatasetTable
from .denoiser import DenoiserGraph, DenoiserParams, blocks_from_jsonable, blocks_to_jsonable
from .errors import ConfigError
from .losses import (KernelConfig, LossReport, eps_loss_graph, mmd_loss_graph,
                     total_loss_graph)
from .priors import (EncoderGraph, EncoderParams, PriorGraph, PriorNetParams,
                     warmup_train)
from .schedule import (ClassCensus, NoiseLevelConfig, NoiseSchedule, build_schedule,
                       lambda_vector, linear_beta)

CHECKPOINT_VERSION = 1
BRANCHES = ("global", "local", "fused")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    T: int = 1000
    sample_steps: int = 250
    beta1: float = 1e-4
    betaT: float = 0.02
    alpha: float = 1.0 / 6.0
    c: float = 5.0
    w: float = 0.5
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    warmup_epochs: int = 15
    seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_warmup_frac: float = 0.1
    lambda_override: float | None = None
    hidden: int = 64
    attn_dim: int = 32
    time_dim: int = 32
    prior_hidden: int = 32
    prior_mask: int | None = None  # None: half the feature count
    kernel_bandwidth: float = 1.0
    kernel_bandwidth_mode: str = "fixed"
    checkpoint_every: int = 0  # epochs; 0 writes only at the end

    def __post_init__(self):
        if self.sample_steps > self.T:
            raise ConfigError(f"sample_steps {self.sample_steps} exceeds T {self.T}")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("learning_rate must be positive and batch_size >= 1")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def noise_cfg(self) -> NoiseLevelConfig:
        return NoiseLevelConfig(alpha=self.alpha, c=self.c)

    def kernel_cfg(self) -> KernelConfig:
        return KernelConfig(bandwidth=self.kernel_bandwidth,
                            bandwidth_mode=self.kernel_bandwidth_mode)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class ModelParams:
    """The three trainable parameter sets of the full model."""

    prior: PriorNetParams
    encoder: EncoderParams
    denoiser: DenoiserParams

    def blocks(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, params in (("prior", self.prior), ("encoder", self.encoder),
                               ("denoiser", self.denoiser)):
            for name, arr in params.blocks().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.prior.copy(), self.encoder.copy(), self.denoiser.copy())


@dataclass(frozen=True)
class BatchDraws:
    """Pre-drawn randomness for one batch: timesteps and per-branch noise."""

    t: np.ndarray                  # (nb,) ints in [1, T]
    eps: dict[str, np.ndarray]     # branch -> (nb, k)


@dataclass
class Checkpoint:
    model: ModelParams
    prior_frozen: PriorNetParams
    opt_state: dict
    config: TrainConfig
    epoch: int
    counts: tuple[int, ...]


def init_model(d: int, k: int, cfg: TrainConfig) -> ModelParams:
    """Seeded initialization; draw order is prior, encoder, denoiser."""
    rng = np.random.default_rng([cfg.seed, 0])
    mask = cfg.prior_mask if cfg.prior_mask is not None else max(1, d // 2)
    prior = PriorNetParams.init(d, cfg.prior_hidden, k, mask, rng)
    encoder = EncoderParams.init(d, cfg.hidden, rng)
    den = DenoiserParams.init(k, cfg.hidden, cfg.attn_dim, cfg.time_dim, rng)
    return ModelParams(prior, encoder, den)


def training_census(table: DatasetTable) -> ClassCensus:
    """Census of the training labels; empty classes count as one sample."""
    counts = table.class_counts()
    if (counts == 0).any():
        empty = np.nonzero(counts == 0)[0].tolist()
        warnings.warn(f"training split has no samples for classes {empty}; "
                      f"their noise level uses count 1")
        counts = np.maximum(counts, 1)
    return ClassCensus(tuple(int(c) for c in counts))


def build_train_schedule(table: DatasetTable, cfg: TrainConfig) -> NoiseSchedule:
    beta = linear_beta(cfg.T, cfg.beta1, cfg.betaT)
    if cfg.lambda_override is not None:
        lam = np.full(table.k, float(cfg.lambda_override))
    else:
        lam = lambda_vector(training_census(table), cfg.noise_cfg())
    return build_schedule(beta, lam)


def draw_batch_noise(rng, nb: int, k: int, T: int) -> BatchDraws:
    """Consume the epoch stream in the documented order."""
    t = rng.integers(1, T + 1, size=nb)
    eps = {branch: rng.standard_normal((nb, k)) for branch in BRANCHES}
    return BatchDraws(t=t, eps=eps)


def batch_loss(batch: DatasetTable, model: ModelParams, schedule: NoiseSchedule,
               cfg: TrainConfig, draws: BatchDraws,
               want_grads: bool = True) -> tuple[LossReport, dict | None]:
    """Evaluate the three-branch objective on one batch, optionally with
    gradients for every parameter block."""
    nb = batch.n
    tape = Tape()
    x = tape.const(batch.features)
    prior_graph = PriorGraph(tape, model.prior, x)
    encoder_graph = EncoderGraph(tape, model.encoder, x)
    den_graph = DenoiserGraph(tape, model.denoiser)

    gamma_t = schedule.gamma[batch.labels, draws.t]          # (nb,)
    root = np.sqrt(gamma_t)[:, None]
    noise_scale = np.sqrt(1.0 - gamma_t)[:, None]
    prior_coef = tape.const(np.broadcast_to(1.0 - root, (nb, batch.k)).copy())

    branch_priors = {"global": prior_graph.y_g, "local": prior_graph.y_l,
                     "fused": prior_graph.y_f}
    eps_hat: dict[str, object] = {}
    for branch in BRANCHES:
        signal = tape.const(root * batch.onehot + noise_scale * draws.eps[branch])
        y_t = tape.add(signal, tape.mul(prior_coef, branch_priors[branch]))
        eps_hat[branch] = den_graph.predict(encoder_graph.out, y_t,
                                            branch_priors[branch], draws.t, cfg.T)

    kernel = cfg.kernel_cfg()
    l_g = mmd_loss_graph(tape, tape.const(draws.eps["global"]), eps_hat["global"], kernel)
    l_l = mmd_loss_graph(tape, tape.const(draws.eps["local"]), eps_hat["local"], kernel)
    l_eps = eps_loss_graph(tape, tape.const(draws.eps["fused"]), eps_hat["fused"])
    l_total = total_loss_graph(tape, l_g, l_l, l_eps, cfg.w)

    report = LossReport(L_g=scalar(l_g), L_l=scalar(l_l), L_eps=scalar(l_eps),
                        L_total=scalar(l_total), w=cfg.w)
    if not want_grads:
        return report, None

    grads_by_var = tape.backward(l_total)
    grads: dict[str, np.ndarray] = {}
    for prefix, graph_vars in (("prior", prior_graph.vars),
                               ("encoder", encoder_graph.vars),
                               ("denoiser", den_graph.vars)):
        for name, var in graph_vars.items():
            grads[f"{prefix}.{name}"] = grads_by_var[var]
    return report, grads


def train_step(batch: DatasetTable, model: ModelParams, schedule: NoiseSchedule,
               cfg: TrainConfig, rng) -> tuple[dict, LossReport]:
    """Draw a batch's randomness, then evaluate loss and gradients."""
    draws = draw_batch_noise(rng, batch.n, batch.k, cfg.T)
    report, grads = batch_loss(batch, model, schedule, cfg, draws)
    return grads, report


def fit(table: DatasetTable, cfg: TrainConfig, *, log_path=None,
        checkpoint_path=None, resume: Checkpoint | None = None) -> Checkpoint:
    """Warmup the prior net, then train all parameter sets jointly.

    The schedule is built (and its feasibility checked) before any
    parameter is touched. A frozen copy of the post-warmup prior net is
    kept for inference-time noise-level estimation.
    """
    schedule = build_train_schedule(table, cfg)
    counts = tuple(int(c) for c in training_census(table).counts)

    if resume is not None:
        model = resume.model.copy()
        prior_frozen = resume.prior_frozen.copy()
        start_epoch = resume.epoch
        opt = _make_opt(cfg)
        opt.load_state_dict(resume.opt_state)
    else:
        model = init_model(table.d, table.k, cfg)
        model.prior = warmup_train(model.prior, table, cfg.warmup_epochs,
                                   lr=cfg.learning_rate, optimizer=cfg.optimizer,
                                   batch_size=cfg.batch_size, seed=cfg.seed)
        prior_frozen = model.prior.copy()
        start_epoch = 0
        opt = _make_opt(cfg)

    blocks = model.blocks()
    n_batches = max(1, -(-table.n // cfg.batch_size))
    total_steps = max(1, cfg.epochs * n_batches)

    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 2, epoch])
        order = rng.permutation(table.n)
        sums = np.zeros(4)
        batches = 0
        for start in range(0, table.n, cfg.batch_size):
            batch = table.take(order[start:start + cfg.batch_size])
            grads, report = train_step(batch, model, schedule, cfg, rng)
            lr = optim.lr_at(opt.step_count, total_steps, cfg.learning_rate,
                             cfg.lr_warmup_frac)
            opt.step(blocks, grads, lr=lr)
            sums += (report.L_g, report.L_l, report.L_eps, report.L_total)
            batches += 1
        if log_path is not None:
            record = {"epoch": epoch, "L_g": sums[0] / batches, "L_l": sums[1] / batches,
                      "L_eps": sums[2] / batches, "L_total": sums[3] / batches}
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        done = epoch + 1
        if checkpoint_path is not None and cfg.checkpoint_every > 0 \
                and done % cfg.checkpoint_every == 0 and done < cfg.epochs:
            stem, ext = os.path.splitext(os.fspath(checkpoint_path))
            save_checkpoint(Checkpoint(model, prior_frozen, opt.state_dict(),
                                       cfg, done, counts), f"{stem}.epoch{done}{ext}")

    ckpt = Checkpoint(model=model, prior_frozen=prior_frozen,
                      opt_state=opt.state_dict(), config=cfg,
                      epoch=cfg.epochs, counts=counts)
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return ckpt


def _make_opt(cfg: TrainConfig):
    return optim.make_optimizer(cfg.optimizer, cfg.learning_rate,
                                beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                                eps=cfg.adam_eps)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "epoch": ckpt.epoch,
        "counts": list(ckpt.counts),
        "config": ckpt.config.to_dict(),
        "prior_mask_size": ckpt.model.prior.mask_size,
        "blocks": blocks_to_jsonable(ckpt.model.blocks()),
        "prior_frozen": blocks_to_jsonable(ckpt.prior_frozen.blocks()),
        "optimizer": {
            "step_count": ckpt.opt_state["step_count"],
            "m": blocks_to_jsonable(ckpt.opt_state.get("m", {})),
            "v": blocks_to_jsonable(ckpt.opt_state.get("v", {})),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "version" not in payload:
        raise ConfigError(f"{path}: checkpoint missing version field")
    cfg = TrainConfig.from_dict(payload["config"])
    mask = int(payload["prior_mask_size"])
    blocks = blocks_from_jsonable(payload["blocks"])

    def group(prefix: str) -> dict[str, np.ndarray]:
        return {name[len(prefix) + 1:]: arr for name, arr in blocks.items()
                if name.startswith(prefix + ".")}

    model = ModelParams(
        prior=PriorNetParams(mask_size=mask, **group("prior")),
        encoder=EncoderParams(**group("encoder")),
        denoiser=DenoiserParams(**group("denoiser")),
    )
    frozen_blocks = blocks_from_jsonable(payload["prior_frozen"])
    prior_frozen = PriorNetParams(mask_size=mask, **frozen_blocks)
    opt_state = {
        "step_count": int(payload["optimizer"]["step_count"]),
        "m": blocks_from_jsonable(payload["optimizer"]["m"]),
        "v": blocks_from_jsonable(payload["optimizer"]["v"]),
    }
    if cfg.optimizer == "sgd":
        opt_state = {"step_count": opt_state["step_count"]}
    return Checkpoint(model=model, prior_frozen=prior_frozen, opt_state=opt_state,
                      config=cfg, epoch=int(payload["epoch"]),
                      counts=tuple(int(c) for c in payload["counts"]))
