import json
import math

import numpy as np
import pytest

from bvm_ensembles.ensemble import GaussianPrediction
from bvm_ensembles.evaluation import (
    CALIBRATION_LEVELS,
    calibration_curve,
    evaluate,
    mean_and_stderr,
    predictive_nll,
    rmse,
)
from bvm_ensembles.losses import LossSpec, batch_loss
from bvm_ensembles.numerics import Rng


def _pred(mu, s2):
    return GaussianPrediction(np.asarray(mu, dtype=float), np.asarray(s2, dtype=float))


def test_rmse_examples():
    assert rmse(_pred([1.0, 2.0], [1, 1]), [1.0, 2.0]) == 0.0
    assert rmse(_pred([0.0, 0.0], [1, 1]), [3.0, -4.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse(_pred([0.0, 0.0], [1, 1]), [3.0, -4.0]) == pytest.approx(3.5355, abs=1e-4)


def test_nll_examples():
    assert predictive_nll(_pred([1.0, 2.0], [1.0, 1.0]), [1.0, 2.0]) == pytest.approx(0.9189385332046727)
    tight = predictive_nll(_pred([0.0], [1.0]), [10.0])
    wide = predictive_nll(_pred([0.0], [100.0]), [10.0])
    assert tight == pytest.approx(50.92, abs=5e-3)
    assert wide == pytest.approx(3.72, abs=5e-3)


def test_nll_matches_training_loss():
    rng = Rng(1)
    t, mu = rng.normal(size=(2, 30))
    s2 = rng.uniform(0.1, 2.0, size=30)
    assert predictive_nll(_pred(mu, s2), t) == pytest.approx(batch_loss(LossSpec("nll"), t, mu, s2).value, rel=1e-13)


def test_metric_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        rmse(_pred([1.0], [1.0]), [1.0, 2.0])
    with pytest.raises(ValueError, match="no predictions"):
        rmse(_pred([], []), [])
    with pytest.raises(ValueError, match="positive"):
        predictive_nll(_pred([1.0], [0.0]), [1.0])


def test_calibration_grid():
    assert CALIBRATION_LEVELS == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    curve = calibration_curve(_pred([0.0], [1.0]), [0.0])
    assert len(curve.expected) == len(curve.observed) == 9


def test_calibration_exact_gaussian_monte_carlo():
    rng = Rng(2)
    n = 100_000
    mu = rng.normal(size=n)
    s2 = rng.uniform(0.1, 4.0, size=n)
    t = mu + np.sqrt(s2) * rng.normal(size=n)
    curve = calibration_curve(_pred(mu, s2), t)
    assert curve.max_abs_error() <= 0.01


def test_calibration_extremes():
    tiny = calibration_curve(_pred([0.0, 0.0], [1e-30, 1e-30]), [1.0, -1.0])
    assert all(o == 0.0 for o in tiny.observed)
    huge = calibration_curve(_pred([0.0, 0.0], [1e30, 1e30]), [1.0, -1.0])
    assert all(o == 1.0 for o in huge.observed)


def test_calibration_monotone():
    rng = Rng(3)
    mu = rng.normal(size=500)
    t = mu + 2 * rng.normal(size=500)
    observed = calibration_curve(_pred(mu, np.ones(500)), t).observed
    assert all(b >= a for a, b in zip(observed, observed[1:]))


def test_calibration_matches_direct_count():
    rng = Rng(4)
    mu, t = rng.normal(size=(2, 200))
    s2 = rng.uniform(0.2, 2, size=200)
    curve = calibration_curve(_pred(mu, s2), t)
    from scipy.stats import norm

    for z, obs in curve.to_rows():
        lo, hi = norm.interval(z, loc=mu, scale=np.sqrt(s2))
        assert obs == pytest.approx(np.mean((t >= lo) & (t <= hi)), abs=1 / 200)


def test_report_schema():
    report = evaluate(_pred([0.0, 1.0], [1.0, 1.0]), [0.5, 1.5], {"mean_diff": 0.1, "var_diff": 0.0}, seed=3)
    d = json.loads(json.dumps(report.to_dict()))
    assert d["schema_version"] == 1
    assert set(d) == {"schema_version", "rmse", "nll", "calibration", "stat_diff", "metadata"}
    assert len(d["calibration"]["observed"]) == 9
    assert d["metadata"] == {"seed": 3}


def test_mean_and_stderr():
    m, se = mean_and_stderr([1.0, 2.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1.0 / math.sqrt(3))
    assert math.isnan(mean_and_stderr([4.0])[1])
