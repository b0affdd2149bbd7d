"""Training of independent ensemble members and uniform-mixture aggregation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .losses import LossSpec, batch_loss
from .nn import Architecture, MlpModel, backward, forward, init_model, init_optimizer, adamw_step
from .numerics import Rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.01
    optimizer: str = "adamw"  # or "adam": no decoupled decay
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.optimizer not in ("adamw", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def optimizer_kwargs(self) -> dict:
        return dict(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            decoupled=self.optimizer == "adamw",
        )


@dataclass(frozen=True)
class GaussianPrediction:
    """Predictive mean and variance, one entry per input row."""

    mu: np.ndarray
    sigma2: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)

    def __len__(self) -> int:
        return np.size(self.mu)


@dataclass
class EnsembleModel:
    members: list[MlpModel]
    loss: LossSpec
    seeds: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def arch(self) -> Architecture:
        return self.members[0].arch


def loss_and_grads(model: MlpModel, spec: LossSpec, x, t):
    """Mean batch loss and its parameter gradients (None if the loss is not finite)."""
    out, cache = forward(model, x)
    mu = out[:, 0]
    if spec.two_headed:
        if model.arch.output_dim != 2:
            raise ValueError(f"{spec.kind.value} training needs a two-output network")
        sigma2 = out[:, 1]
        bl = batch_loss(spec, t, mu, sigma2)
        d_out = np.column_stack([bl.d_mu, bl.d_sigma / (2.0 * np.sqrt(sigma2))])
    else:
        bl = batch_loss(spec, t, mu)
        d_out = bl.d_mu[:, None]
        if model.arch.output_dim != 1:
            d_out = np.column_stack([d_out, np.zeros_like(d_out)])
    if not np.isfinite(bl.value):
        return bl.value, None
    return bl.value, backward(model, cache, d_out)


def train_member(
    model: MlpModel,
    x,
    t,
    spec: LossSpec,
    schedule: Schedule,
    rng: Rng,
    history: list | None = None,
) -> MlpModel:
    """Train ``model`` in place with per-epoch reshuffling; returns it.

    The final short batch of each epoch is kept. If ``history`` is given the
    mean training loss of every epoch is appended to it.

    Raises:
        NumericalError: when a batch loss is not finite.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) == 0:
        raise ValueError("empty training set")
    state = init_optimizer(model, **schedule.optimizer_kwargs())
    n = len(t)
    for epoch in range(schedule.epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch_index, start in enumerate(range(0, n, schedule.batch_size)):
            idx = order[start:start + schedule.batch_size]
            value, grads = loss_and_grads(model, spec, x[idx], t[idx])
            if not np.isfinite(value):
                norms = [float(np.linalg.norm(p)) for p in model.params]
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}; parameter norms {norms}"
                )
            adamw_step(model, state, grads)
            total += value * len(idx)
        if history is not None:
            history.append(total / n)
    return model


def train_ensemble(
    k: int,
    x,
    t,
    spec: LossSpec,
    schedule: Schedule,
    arch: Architecture,
    rng: Rng,
    n_jobs: int = 1,
) -> EnsembleModel:
    """Train ``k`` members, each with its own initialisation and shuffle stream.

    Member ``i`` draws its weights from ``rng.child(i).child(0)`` and its
    batch order from ``rng.child(i).child(1)``, so results do not depend on
    ``n_jobs``.
    """
    if k < 1:
        raise ValueError(f"ensemble size must be >= 1, got {k}")

    def run(i):
        stream = rng.child(i)
        model = init_model(arch, stream.child(0))
        try:
            return train_member(model, x, t, spec, schedule, stream.child(1))
        except NumericalError as exc:
            raise NumericalError(f"member {i}: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            members = list(pool.map(run, range(k)))
    else:
        members = [run(i) for i in range(k)]
    return EnsembleModel(members, spec, [rng.child(i).key for i in range(k)])


def aggregate(mus, sigma2s=None, variance_floor: float = 0.0) -> GaussianPrediction:
    """Moments of the uniform mixture of K Gaussians.

    ``mus`` and ``sigma2s`` have shape (K, ...) . Without ``sigma2s`` the
    members are treated as point predictions and the result is their
    empirical (population) variance, floored at ``variance_floor``.
    """
    mus = np.asarray(mus, dtype=float)
    if mus.ndim == 0 or mus.shape[0] == 0:
        raise ValueError("cannot aggregate an empty list of predictions")
    mu = mus.mean(axis=0)
    if sigma2s is None:
        var = np.maximum(np.mean((mus - mu) ** 2, axis=0), variance_floor)
        return GaussianPrediction(mu, var)
    sigma2s = np.asarray(sigma2s, dtype=float)
    if np.any(sigma2s <= 0):
        raise ValueError("member variances must be positive")
    # E[var] + Var[mean]; written as a centred sum so it never goes negative
    var = sigma2s.mean(axis=0) + np.mean((mus - mu) ** 2, axis=0)
    return GaussianPrediction(mu, var)


def predict_normalized(ensemble: EnsembleModel, x) -> GaussianPrediction:
    outs = [forward(m, x)[0] for m in ensemble.members]
    mus = np.stack([o[:, 0] for o in outs])
    if ensemble.loss.two_headed:
        return aggregate(mus, np.stack([o[:, 1] for o in outs]))
    return aggregate(mus, variance_floor=ensemble.arch.variance_floor)


def predict(ensemble: EnsembleModel, x, norm=None) -> GaussianPrediction:
    """Aggregate member outputs and map them back to original target units.

    ``x`` must already be standardised with the training statistics. With
    ``norm=None`` the training targets are assumed unnormalised.
    """
    pred = predict_normalized(ensemble, x)
    if norm is None:
        return pred
    return GaussianPrediction(norm.invert_targets(pred.mu), norm.invert_variance(pred.sigma2))
