"""Test-set metrics for Gaussian predictions, in original target units."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import GaussianPrediction
from .numerics import LOG_SQRT_2PI, std_normal_quantile

REPORT_SCHEMA_VERSION = 1
CALIBRATION_LEVELS = tuple(round(0.1 * i, 1) for i in range(1, 10))


def _pairs(pred: GaussianPrediction, targets):
    mu = np.atleast_1d(np.asarray(pred.mu, dtype=float))
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    if mu.shape != t.shape:
        raise ValueError(f"length mismatch: {mu.size} predictions, {t.size} targets")
    if t.size == 0:
        raise ValueError("no predictions to evaluate")
    return mu, t


def _variances(pred: GaussianPrediction, shape):
    var = np.broadcast_to(np.asarray(pred.sigma2, dtype=float), shape)
    if np.any(~(var > 0)):
        raise ValueError("predictive variance must be positive")
    return var


def rmse(pred: GaussianPrediction, targets) -> float:
    mu, t = _pairs(pred, targets)
    return float(np.sqrt(np.mean((t - mu) ** 2)))


def predictive_nll(pred: GaussianPrediction, targets) -> float:
    """Mean Gaussian negative log-likelihood of the targets."""
    mu, t = _pairs(pred, targets)
    var = _variances(pred, mu.shape)
    return float(np.mean(0.5 * np.log(var) + LOG_SQRT_2PI + (t - mu) ** 2 / (2.0 * var)))


@dataclass(frozen=True)
class CalibrationCurve:
    expected: tuple[float, ...]
    observed: tuple[float, ...]

    def max_abs_error(self) -> float:
        return float(np.max(np.abs(np.subtract(self.observed, self.expected))))

    def to_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.expected, self.observed))


def calibration_curve(pred: GaussianPrediction, targets, levels=CALIBRATION_LEVELS) -> CalibrationCurve:
    """Share of targets inside the central z-level Gaussian interval, per z."""
    mu, t = _pairs(pred, targets)
    sigma = np.sqrt(_variances(pred, mu.shape))
    half_widths = std_normal_quantile((1.0 + np.asarray(levels)) / 2.0)
    resid = np.abs(t - mu)
    observed = tuple(float(np.mean(resid <= q * sigma)) for q in half_widths)
    return CalibrationCurve(tuple(float(z) for z in levels), observed)


@dataclass
class EvalReport:
    rmse: float
    nll: float
    calibration: CalibrationCurve
    stat_diff: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rmse": self.rmse,
            "nll": self.nll,
            "calibration": {
                "expected": list(self.calibration.expected),
                "observed": list(self.calibration.observed),
            },
            "stat_diff": self.stat_diff,
            "metadata": self.metadata,
        }


def evaluate(pred: GaussianPrediction, targets, stat_diff=None, **metadata) -> EvalReport:
    return EvalReport(
        rmse(pred, targets),
        predictive_nll(pred, targets),
        calibration_curve(pred, targets),
        stat_diff,
        metadata,
    )


def mean_and_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
