"""Per-sample training criteria with exact gradients in (mu, sigma).

Three criteria are supported:

* ``MSE``  squared error on the mean only.
* ``NLL``  Gaussian negative log-likelihood.
* ``BVM``  negative log probability that a draw from N(mu, sigma^2) lands
  within ``epsilon`` of the target, i.e.
  ``-log[Phi((t + eps - mu) / sigma) - Phi((t - eps - mu) / sigma)]``.

As ``eps -> 0`` the BVM value behaves like ``NLL - log(2 eps)``. The
second-order expansion in ``eps`` is exposed as :func:`taylor_bvm_loss` for
testing.

All functions are vectorised: scalars or equally-shaped arrays in, the same
shape out.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .numerics import LOG_SQRT_2PI, _log_cdf_diff_parts

VARIANCE_FLOOR = 1e-6
PROBABILITY_FLOOR = 1e-300


class LossKind(str, Enum):
    MSE = "mse"
    NLL = "nll"
    BVM = "bvm"


@dataclass(frozen=True)
class LossSpec:
    """Which criterion to train with, plus its numerical floors.

    ``epsilon`` is the half-width of the agreement interval in the units the
    network is trained in (normalised targets for the UCI protocol).
    """

    kind: LossKind = LossKind.BVM
    epsilon: float = 0.01
    probability_floor: float = PROBABILITY_FLOOR
    variance_floor: float = VARIANCE_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.BVM and not self.epsilon > 0:
            raise ValueError(f"invalid epsilon {self.epsilon}: BVM needs epsilon > 0")
        if not 0 < self.probability_floor < 1:
            raise ValueError("probability floor must lie in (0, 1)")
        if not self.variance_floor > 0:
            raise ValueError("variance floor must be positive")

    @property
    def two_headed(self) -> bool:
        return self.kind is not LossKind.MSE

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LossSpec":
        return cls(**data)


@dataclass
class PerSampleEval:
    value: np.ndarray
    d_mu: np.ndarray
    d_sigma: np.ndarray


@dataclass
class BatchLoss:
    """Mean loss and the per-sample gradients already scaled by ``1/N``."""

    value: float
    d_mu: np.ndarray
    d_sigma: np.ndarray


def _sigma(sigma2, floor):
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < floor):
        raise ValueError(f"variance below floor {floor:g}")
    return np.sqrt(sigma2)


def _pack(value, d_mu, d_sigma):
    value, d_mu, d_sigma = np.broadcast_arrays(value, d_mu, d_sigma)
    if value.ndim == 0:
        return PerSampleEval(float(value), float(d_mu), float(d_sigma))
    return PerSampleEval(value.copy(), d_mu.copy(), d_sigma.copy())


def mse_loss(t, mu) -> PerSampleEval:
    resid = np.asarray(t, dtype=float) - np.asarray(mu, dtype=float)
    return _pack(resid * resid, -2.0 * resid, np.zeros_like(resid))


def nll_loss(t, mu, sigma2, variance_floor: float = VARIANCE_FLOOR) -> PerSampleEval:
    sigma = _sigma(sigma2, variance_floor)
    resid = np.asarray(t, dtype=float) - np.asarray(mu, dtype=float)
    var = sigma * sigma
    value = np.log(sigma) + LOG_SQRT_2PI + resid * resid / (2.0 * var)
    d_mu = -resid / var
    d_sigma = 1.0 / sigma - resid * resid / (var * sigma)
    return _pack(value, d_mu, d_sigma)


def bvm_loss(
    t,
    mu,
    sigma2,
    eps: float,
    probability_floor: float = PROBABILITY_FLOOR,
    variance_floor: float = VARIANCE_FLOOR,
) -> PerSampleEval:
    """Negative log probability of agreement within ``eps`` of the target.

    Where the probability falls under ``probability_floor`` the loss is held
    at ``-log(probability_floor)`` and its gradient is zero.
    """
    if not eps > 0:
        raise ValueError(f"invalid epsilon {eps}: must be > 0")
    sigma = _sigma(sigma2, variance_floor)
    t = np.asarray(t, dtype=float)
    mu = np.asarray(mu, dtype=float)
    upper = (t + eps - mu) / sigma
    lower = (t - eps - mu) / sigma
    logp, g_up, g_low = _log_cdf_diff_parts(upper, lower)

    value = -logp
    d_mu = (g_up + g_low) / sigma
    d_sigma = (upper * g_up + lower * g_low) / sigma

    clamped = logp < math.log(probability_floor)
    if np.any(clamped):
        value = np.where(clamped, -math.log(probability_floor), value)
        d_mu = np.where(clamped, 0.0, d_mu)
        d_sigma = np.where(clamped, 0.0, d_sigma)
    return _pack(value, d_mu, d_sigma)


def taylor_bvm_loss(t, mu, sigma2, eps: float, variance_floor: float = VARIANCE_FLOOR):
    """Second-order expansion in ``eps`` of ``bvm_loss + log(2 eps)``."""
    sigma = _sigma(sigma2, variance_floor)
    resid = np.asarray(t, dtype=float) - np.asarray(mu, dtype=float)
    var = sigma * sigma
    value = (
        np.log(sigma)
        + LOG_SQRT_2PI
        + resid * resid / (2.0 * var)
        - (eps * eps / 6.0) * (resid * resid / (var * var) - 1.0 / var)
    )
    return value if np.ndim(value) else float(value)


def per_sample(spec: LossSpec, t, mu, sigma2=None) -> PerSampleEval:
    if spec.kind is LossKind.MSE:
        return mse_loss(t, mu)
    if sigma2 is None:
        raise ValueError(f"{spec.kind.value} loss needs a variance prediction")
    if spec.kind is LossKind.NLL:
        return nll_loss(t, mu, sigma2, spec.variance_floor)
    return bvm_loss(t, mu, sigma2, spec.epsilon, spec.probability_floor, spec.variance_floor)


def batch_loss(spec: LossSpec, t, mu, sigma2=None) -> BatchLoss:
    """Mean of the per-sample criterion over a batch."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size == 0:
        raise ValueError("empty batch")
    ev = per_sample(spec, t, np.atleast_1d(mu), None if sigma2 is None else np.atleast_1d(sigma2))
    n = t.size
    return BatchLoss(float(np.mean(ev.value)), np.asarray(ev.d_mu) / n, np.asarray(ev.d_sigma) / n)
