"""Small fully-connected regression networks in plain numpy.

A model maps a batch ``X`` of shape (N, d) through ReLU hidden layers to one
output (the mean, for MSE training) or two outputs (mean and variance). The
gradient is hand-derived; :func:`backward` is checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .numerics import Rng

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MEAN_HEADS = ("sigmoid", "identity")
VARIANCE_HEADS = ("sigmoid", "softplus")


@dataclass(frozen=True)
class Architecture:
    """Layer sizes and output activations.

    ``mean_head`` squashes the first output, ``variance_head`` maps the second
    output to a positive variance which is then floored at ``variance_floor``.
    """

    input_dim: int
    hidden: tuple[int, ...] = (50,)
    output_dim: int = 2
    mean_head: str = "sigmoid"
    variance_head: str = "sigmoid"
    variance_floor: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        sizes = (self.input_dim, *self.hidden, self.output_dim)
        if any(int(s) < 1 for s in sizes):
            raise ValueError(f"invalid architecture: zero-size layer in {sizes}")
        if self.output_dim not in (1, 2):
            raise ValueError(f"invalid architecture: output_dim must be 1 or 2, got {self.output_dim}")
        if self.mean_head not in MEAN_HEADS:
            raise ValueError(f"unknown mean head {self.mean_head!r}")
        if self.variance_head not in VARIANCE_HEADS:
            raise ValueError(f"unknown variance head {self.variance_head!r}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "mean_head": self.mean_head,
            "variance_head": self.variance_head,
            "variance_floor": self.variance_floor,
        }


@dataclass
class MlpModel:
    arch: Architecture
    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]

    @property
    def params(self) -> list[np.ndarray]:
        """Weights and biases interleaved layer by layer (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpModel":
        return MlpModel(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vector) -> None:
        vector = np.asarray(vector, dtype=float)
        if vector.size != self.n_params():
            raise ValueError(f"expected {self.n_params()} values, got {vector.size}")
        offset = 0
        for p in self.params:
            p[...] = vector[offset:offset + p.size].reshape(p.shape)
            offset += p.size


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    outputs: np.ndarray


def init_model(arch: Architecture, rng: Rng) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    weights, biases = [], []
    sizes = arch.sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(arch, weights, biases)


def _softplus(x):
    return np.logaddexp(0.0, x)


def forward(model: MlpModel, x) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch through the network.

    Returns an (N, output_dim) array: column 0 is the mean, column 1 (when
    present) the floored variance.
    """
    h = np.asarray(x, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != model.arch.input_dim:
        raise ValueError(f"dimension mismatch: model expects {model.arch.input_dim} features, got {h.shape[1]}")

    inputs, pre = [], []
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z

    arch = model.arch
    out = np.empty_like(h)
    out[:, 0] = expit(h[:, 0]) if arch.mean_head == "sigmoid" else h[:, 0]
    if arch.output_dim == 2:
        raw = expit(h[:, 1]) if arch.variance_head == "sigmoid" else _softplus(h[:, 1])
        out[:, 1] = np.maximum(raw, arch.variance_floor)
    return out, ForwardCache(inputs, pre, out)


def predict(model: MlpModel, x) -> np.ndarray:
    return forward(model, x)[0]


def backward(model: MlpModel, cache: ForwardCache, d_outputs) -> list[np.ndarray]:
    """Gradients of a scalar loss given its gradient w.r.t. the outputs.

    ``d_outputs`` has the shape of the forward outputs (mean, variance). The
    result is ordered like :attr:`MlpModel.params`.
    """
    d_out = np.asarray(d_outputs, dtype=float)
    if d_out.ndim == 1:
        d_out = d_out[:, None] if model.arch.output_dim == 1 else d_out[None, :]
    if d_out.shape != cache.outputs.shape:
        raise ValueError(f"shape mismatch: outputs {cache.outputs.shape}, gradient {d_out.shape}")

    arch = model.arch
    last = cache.pre[-1]
    delta = np.empty_like(last)
    if arch.mean_head == "sigmoid":
        s = expit(last[:, 0])
        delta[:, 0] = d_out[:, 0] * s * (1.0 - s)
    else:
        delta[:, 0] = d_out[:, 0]
    if arch.output_dim == 2:
        if arch.variance_head == "sigmoid":
            s = expit(last[:, 1])
            raw, slope = s, s * (1.0 - s)
        else:
            raw, slope = _softplus(last[:, 1]), expit(last[:, 1])
        # the floor is flat
        delta[:, 1] = np.where(raw >= arch.variance_floor, d_out[:, 1] * slope, 0.0)

    grads: list[np.ndarray] = []
    for i in range(len(model.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ cache.inputs[i])
        if i > 0:
            delta = (delta @ model.weights[i]) * (cache.pre[i - 1] > 0)
    grads.reverse()  # -> w0, b0, w1, b1, ...
    return grads


@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters.

    ``decoupled=True`` gives AdamW (decay applied to the weights directly);
    ``decoupled=False`` folds ``weight_decay`` into the gradient as classic
    L2-regularised Adam.
    """

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    decoupled: bool = True
    skipped: int = field(default=0)


def init_optimizer(model: MlpModel, **hyper) -> OptimizerState:
    zeros = [np.zeros_like(p) for p in model.params]
    return OptimizerState(m=zeros, v=[z.copy() for z in zeros], **hyper)


def adamw_step(model: MlpModel, state: OptimizerState, grads: list[np.ndarray]) -> bool:
    """Apply one update in place. Returns False (and skips) on a non-finite gradient."""
    params = model.params
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("shape mismatch between gradients and parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        logger.warning("non-finite gradient at step %d; update skipped", state.step)
        return False

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            if state.decoupled:
                p *= 1.0 - state.lr * state.weight_decay
            else:
                g = g + state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return True


def save_checkpoint(model: MlpModel, path, loss_spec: dict | None = None) -> None:
    """Write a JSON checkpoint. Floats are stored with ``repr`` precision, so
    loading gives back bit-identical parameters."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "architecture": model.arch.to_dict(),
        "loss": loss_spec,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(payload))


def model_from_dict(payload: dict) -> MlpModel:
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    arch = Architecture(**payload["architecture"])
    model = MlpModel(
        arch,
        [np.asarray(w, dtype=float).reshape(o, i) for w, o, i in zip(payload["weights"], arch.sizes[1:], arch.sizes[:-1])],
        [np.asarray(b, dtype=float) for b in payload["biases"]],
    )
    return model


def load_checkpoint(path) -> tuple[MlpModel, dict | None]:
    payload = json.loads(Path(path).read_text())
    return model_from_dict(payload), payload.get("loss")
