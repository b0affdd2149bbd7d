"""Experiment protocols: repeated split -> normalise -> train -> evaluate.

Every random choice is drawn from ``Rng(config.seed)``: repetition ``r``
splits with ``child(r).child(0)`` and trains with ``child(r).child(1)``.
All losses compared within one repetition therefore see the same split
and the same member initialisations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import (
    GENERATORS,
    Dataset,
    NormalizationMeta,
    Split,
    StatDiff,
    fit_normalization,
    load_csv,
    outlier_split,
    random_split,
)
from .ensemble import EnsembleModel, GaussianPrediction, predict, train_ensemble
from .errors import BvmError, DataError, NumericalError
from .evaluation import CALIBRATION_LEVELS, EvalReport, evaluate, mean_and_stderr
from .numerics import Rng

logger = logging.getLogger(__name__)

#: A run fails when more than this share of repetitions abort.
MAX_ABORT_FRACTION = 0.1


def load_dataset(config: ExperimentConfig, rng: Rng | None = None) -> Dataset:
    name = config.dataset
    if name in GENERATORS:
        rng = rng or Rng(config.seed).child(10**6)
        if name == "toy-cubic":
            return GENERATORS[name](config.n_samples, noise_sd=config.noise_sd, rng=rng)
        return GENERATORS[name](config.n_samples, config.n_features, rng=rng)
    return load_csv(name, config.target or None)


def make_split(config: ExperimentConfig, data: Dataset, rng: Rng) -> tuple[Split, StatDiff | None]:
    if config.split == "outlier":
        return outlier_split(
            data, config.outlier_fraction, config.forest_trees, config.forest_psi or None, rng
        )
    return random_split(len(data), config.test_fraction, rng), None


def fit_normalizer(config: ExperimentConfig, train: Dataset) -> NormalizationMeta:
    norm = fit_normalization(train)
    if not config.normalize_targets:
        norm = NormalizationMeta(norm.feature_mean, norm.feature_std, 0.0, 1.0)
    return norm


def train_on(config: ExperimentConfig, train: Dataset, kind: str, rng: Rng) -> tuple[EnsembleModel, NormalizationMeta]:
    norm = fit_normalizer(config, train)
    ensemble = train_ensemble(
        config.members,
        norm.transform_features(train.x),
        norm.transform_targets(train.t),
        config.loss_spec(kind),
        config.schedule(),
        config.architecture(train.n_features, kind),
        rng,
        n_jobs=config.n_jobs,
    )
    return ensemble, norm


def predict_rows(ensemble: EnsembleModel, norm: NormalizationMeta, x) -> GaussianPrediction:
    pred = predict(ensemble, norm.transform_features(x), norm)
    if not (np.all(np.isfinite(pred.mu)) and np.all(np.isfinite(pred.sigma2))):
        raise NumericalError("non-finite prediction")
    return pred


@dataclass
class RepetitionResult:
    index: int
    split: Split
    stat_diff: StatDiff | None
    reports: dict[str, EvalReport]


def run_repetition(
    config: ExperimentConfig, data: Dataset, index: int, kinds: tuple[str, ...]
) -> RepetitionResult:
    rep_rng = Rng(config.seed).child(index)
    split, shift = make_split(config, data, rep_rng.child(0))
    split.check(len(data))
    train, test = data.subset(split.train), data.subset(split.test)
    reports = {}
    for kind in kinds:
        ensemble, norm = train_on(config, train, kind, rep_rng.child(1))
        pred = predict_rows(ensemble, norm, test.x)
        reports[kind] = evaluate(
            pred,
            test.t,
            shift.to_dict() if shift else None,
            repetition=index,
            loss=kind,
            epsilon=config.epsilon,
            members=config.members,
            seed=config.seed,
            epochs=config.epochs,
            batch_size=config.batch_size,
            lr=config.lr,
            optimizer=config.optimizer,
            n_train=len(train),
            n_test=len(test),
        )
    return RepetitionResult(index, split, shift, reports)


@dataclass
class BenchmarkResult:
    config: ExperimentConfig
    repetitions: list[RepetitionResult]
    aborted: list[tuple[int, str]] = field(default_factory=list)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(self.repetitions[0].reports) if self.repetitions else ()

    def values(self, kind: str, metric: str) -> np.ndarray:
        return np.array([getattr(r.reports[kind], metric) for r in self.repetitions])

    def mean_curve(self, kind: str) -> np.ndarray:
        return np.mean([r.reports[kind].calibration.observed for r in self.repetitions], axis=0)

    def summary(self) -> dict:
        out = {
            "dataset": self.config.dataset,
            "split": self.config.split,
            "repetitions": len(self.repetitions),
            "aborted": [{"repetition": i, "error": msg} for i, msg in self.aborted],
            "losses": {},
        }
        for kind in self.kinds:
            rmse_mean, rmse_se = mean_and_stderr(self.values(kind, "rmse"))
            nll_mean, nll_se = mean_and_stderr(self.values(kind, "nll"))
            out["losses"][kind] = {
                "rmse_mean": rmse_mean,
                "rmse_stderr": rmse_se,
                "nll_mean": nll_mean,
                "nll_stderr": nll_se,
                "calibration_expected": list(CALIBRATION_LEVELS),
                "calibration_observed": self.mean_curve(kind).tolist(),
            }
        shifts = [r.stat_diff for r in self.repetitions if r.stat_diff is not None]
        if shifts:
            out["stat_diff"] = {
                "mean_diff": float(np.mean([s.mean_diff for s in shifts])),
                "var_diff": float(np.mean([s.var_diff for s in shifts])),
            }
        return out

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        (out / "splits").mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(self.config.to_text())
        with open(out / "reports.jsonl", "w") as fh:
            for rep in self.repetitions:
                for report in rep.reports.values():
                    fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
        for rep in self.repetitions:
            (out / "splits" / f"rep_{rep.index:03d}.txt").write_text(rep.split.manifest())
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return out


def run_benchmark(config: ExperimentConfig, kinds: tuple[str, ...] | None = None, data: Dataset | None = None) -> BenchmarkResult:
    """Run ``config.repetitions`` repetitions for each loss in ``kinds``.

    A repetition that fails numerically is logged and skipped; more than
    ``MAX_ABORT_FRACTION`` skipped repetitions fails the run. Data errors
    abort immediately.
    """
    kinds = kinds or (config.loss,)
    data = data if data is not None else load_dataset(config)
    result = BenchmarkResult(config, [])
    for index in range(config.repetitions):
        try:
            result.repetitions.append(run_repetition(config, data, index, kinds))
        except DataError:
            raise
        except (BvmError, ValueError, FloatingPointError) as exc:
            logger.error("repetition %d aborted: %s", index, exc)
            result.aborted.append((index, str(exc)))
    if len(result.aborted) > MAX_ABORT_FRACTION * config.repetitions or not result.repetitions:
        raise NumericalError(f"{len(result.aborted)} of {config.repetitions} repetitions aborted")
    return result


def run_ood_benchmark(config: ExperimentConfig, data: Dataset | None = None) -> BenchmarkResult:
    """NLL- and BVM-trained ensembles on identical outlier splits."""
    return run_benchmark(config.replace(split="outlier"), ("nll", "bvm"), data)


def run_calibration(config: ExperimentConfig, data: Dataset | None = None) -> BenchmarkResult:
    return run_benchmark(config, ("mse", "nll", "bvm"), data)


def write_calibration_csv(result: BenchmarkResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in result.kinds:
        path = out / f"calibration_{kind}.csv"
        rows = ["expected,observed"] + [
            f"{z!r},{float(o)!r}" for z, o in zip(CALIBRATION_LEVELS, result.mean_curve(kind))
        ]
        path.write_text("\n".join(rows) + "\n")
        paths.append(path)
    return paths


def replay_split(config: ExperimentConfig, data: Dataset, index: int) -> Split:
    """Recreate the split of repetition ``index`` from the config alone."""
    return make_split(config, data, Rng(config.seed).child(index).child(0))[0]


@dataclass
class ToyResult:
    data: Dataset
    grid: np.ndarray
    prediction: GaussianPrediction


def run_toy(config: ExperimentConfig, grid=None) -> ToyResult:
    """Train one ensemble on the whole generated dataset and predict on a grid."""
    master = Rng(config.seed)
    data = load_dataset(config, master.child(0))
    ensemble, norm = train_on(config, data, config.loss, master.child(1))
    grid = np.linspace(-6.0, 8.0, 141) if grid is None else np.asarray(grid, dtype=float)
    return ToyResult(data, grid, predict_rows(ensemble, norm, grid[:, None]))
