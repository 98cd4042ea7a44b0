"""Global/local class priors and the conditioning feature encoder.

The prior network is a one-hidden-layer softmax classifier. Its global
branch scores the full feature vector; the local branch re-scores the
input masked to its most salient coordinates (salience of coordinate i
is |x_i| * sum_h |W1[i, h]|), a tabular stand-in for attention-cropped
regions. The fused prior is the componentwise mean of the two. A
separate single-layer tanh encoder produces the conditioning features
consumed by the denoiser.

Forward passes are built on an autodiff tape so the trainer can push
gradients into both networks; the plain-array entry points below just
run a throwaway tape.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import optim
from .autodiff import Tape, Var
from .data import DatasetTable
from .errors import ConfigError, ShapeError


@dataclass
class PriorNetParams:
    """Weights of the prior classifier plus the local-mask size."""

    w1: np.ndarray  # (d, hidden)
    b1: np.ndarray  # (1, hidden)
    w2: np.ndarray  # (hidden, k)
    b2: np.ndarray  # (1, k)
    mask_size: int

    def __post_init__(self):
        d = self.w1.shape[0]
        if not (1 <= self.mask_size <= d):
            raise ConfigError(f"mask_size must lie in [1, {d}], got {self.mask_size}")

    @classmethod
    def init(cls, d: int, hidden: int, k: int, mask_size: int, rng) -> "PriorNetParams":
        return cls(
            w1=rng.standard_normal((d, hidden)) / np.sqrt(d),
            b1=np.zeros((1, hidden)),
            w2=rng.standard_normal((hidden, k)) / np.sqrt(hidden),
            b2=np.zeros((1, k)),
            mask_size=mask_size,
        )

    def blocks(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "PriorNetParams":
        return replace(self, w1=self.w1.copy(), b1=self.b1.copy(),
                       w2=self.w2.copy(), b2=self.b2.copy())


@dataclass
class EncoderParams:
    """Single tanh layer mapping raw features to conditioning features."""

    w: np.ndarray  # (d, h)
    b: np.ndarray  # (1, h)

    @classmethod
    def init(cls, d: int, h: int, rng) -> "EncoderParams":
        return cls(w=rng.standard_normal((d, h)) / np.sqrt(d), b=np.zeros((1, h)))

    def blocks(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w.copy(), self.b.copy())


@dataclass(frozen=True)
class PriorBundle:
    """Global, local and fused prior probability vectors for one input."""

    y_g: np.ndarray
    y_l: np.ndarray
    y_f: np.ndarray


def _bias(tape: Tape, rows: int, b: Var) -> Var:
    ones = tape.const(np.ones((rows, 1)))
    return tape.matmul(ones, b)


def _mlp_logits(tape: Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Var:
    n = x.shape[0]
    hidden = tape.tanh(tape.add(tape.matmul(x, w1), _bias(tape, n, b1)))
    return tape.add(tape.matmul(hidden, w2), _bias(tape, n, b2))


def salience_mask(params: PriorNetParams, x: np.ndarray) -> np.ndarray:
    """0/1 mask keeping the mask_size most salient coordinates per row.

    Ties break toward the lower coordinate index. The mask is treated as
    a constant during differentiation (the selection is not smooth).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    col_weight = np.abs(params.w1).sum(axis=1)
    salience = np.abs(x) * col_weight
    mask = np.zeros_like(x)
    order = np.argsort(-salience, axis=1, kind="stable")
    rows = np.arange(x.shape[0])[:, None]
    mask[rows, order[:, : params.mask_size]] = 1.0
    return mask


class PriorGraph:
    """Tape subgraph producing prior vectors for a batch of inputs."""

    def __init__(self, tape: Tape, params: PriorNetParams, x: Var):
        self.vars = {name: tape.param(arr) for name, arr in params.blocks().items()}
        w1, b1, w2, b2 = (self.vars[n] for n in ("w1", "b1", "w2", "b2"))
        self.logits_g = _mlp_logits(tape, x, w1, b1, w2, b2)
        self.y_g = tape.softmax_rows(self.logits_g)
        mask = tape.const(salience_mask(params, x.value))
        self.logits_l = _mlp_logits(tape, tape.mul(x, mask), w1, b1, w2, b2)
        self.y_l = tape.softmax_rows(self.logits_l)
        self.y_f = tape.scale(tape.add(self.y_g, self.y_l), 0.5)


class EncoderGraph:
    """Tape subgraph producing conditioning features for a batch."""

    def __init__(self, tape: Tape, params: EncoderParams, x: Var):
        self.vars = {name: tape.param(arr) for name, arr in params.blocks().items()}
        pre = tape.add(tape.matmul(x, self.vars["w"]),
                       _bias(tape, x.shape[0], self.vars["b"]))
        self.out = tape.tanh(pre)


def global_prior(params: PriorNetParams, x) -> np.ndarray:
    tape = Tape()
    graph = PriorGraph(tape, params, tape.const(np.atleast_2d(x)))
    return graph.y_g.value[0]


def global_logits(params: PriorNetParams, x) -> np.ndarray:
    tape = Tape()
    graph = PriorGraph(tape, params, tape.const(np.atleast_2d(x)))
    return graph.logits_g.value[0]


def local_prior(params: PriorNetParams, x) -> np.ndarray:
    tape = Tape()
    graph = PriorGraph(tape, params, tape.const(np.atleast_2d(x)))
    return graph.y_l.value[0]


def fuse(y_g, y_l) -> PriorBundle:
    y_g = np.asarray(y_g, dtype=np.float64)
    y_l = np.asarray(y_l, dtype=np.float64)
    if y_g.shape != y_l.shape:
        raise ShapeError(f"prior shapes differ: {y_g.shape} vs {y_l.shape}")
    return PriorBundle(y_g=y_g, y_l=y_l, y_f=0.5 * (y_g + y_l))


def prior_bundle(params: PriorNetParams, x) -> PriorBundle:
    tape = Tape()
    graph = PriorGraph(tape, params, tape.const(np.atleast_2d(x)))
    return fuse(graph.y_g.value[0], graph.y_l.value[0])


def encode_features(params: EncoderParams, x) -> np.ndarray:
    tape = Tape()
    graph = EncoderGraph(tape, params, tape.const(np.atleast_2d(x)))
    return graph.out.value[0]


def _cross_entropy_grads(params: PriorNetParams, x: np.ndarray, onehot: np.ndarray):
    """Loss and analytic gradients of the softmax cross entropy."""
    n = x.shape[0]
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    loss = float(-(onehot * (shifted - np.log(e.sum(axis=1, keepdims=True)))).sum() / n)
    dlogits = (probs - onehot) / n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0, keepdims=True)
    dhidden = (dlogits @ params.w2.T) * (1.0 - hidden ** 2)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0, keepdims=True)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def warmup_train(params: PriorNetParams, table: DatasetTable, epochs: int, *,
                 lr: float = 1e-3, optimizer: str = "adam",
                 batch_size: int | None = None, seed: int = 0) -> PriorNetParams:
    """Cross-entropy pretraining of the prior classifier.

    Returns a new parameter set; epochs=0 returns a bitwise copy of the
    input. Each epoch draws its shuffle from a stream keyed by (seed, 1,
    epoch), so runs are reproducible independently of call history.
    """
    out = params.copy()
    if epochs == 0:
        return out
    opt = optim.make_optimizer(optimizer, lr)
    blocks = out.blocks()
    onehot = table.onehot
    for epoch in range(epochs):
        rng = np.random.default_rng([seed, 1, epoch])
        order = rng.permutation(table.n)
        step = table.n if batch_size is None else batch_size
        for start in range(0, table.n, step):
            idx = order[start:start + step]
            _, grads = _cross_entropy_grads(out, table.features[idx], onehot[idx])
            opt.step(blocks, grads)
    return out


def warmup_loss(params: PriorNetParams, table: DatasetTable) -> float:
    """Full-dataset cross entropy of the prior classifier."""
    loss, _ = _cross_entropy_grads(params, table.features, table.onehot)
    return loss
