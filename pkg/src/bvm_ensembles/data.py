"""Datasets: CSV ingestion, normalisation, train/test splits and synthetic
generators."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .iforest import fit_isolation_forest
from .numerics import Rng

logger = logging.getLogger(__name__)

#: Share of non-numeric rows tolerated before a file is refused.
MAX_UNPARSABLE_FRACTION = 0.1


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray  # (N, d)
    t: np.ndarray  # (N,)
    columns: tuple[str, ...] = ()
    target_name: str = "target"
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.asarray(self.t, dtype=float).ravel()
        if len(x) != len(t):
            raise DataError(f"feature rows ({len(x)}) and targets ({len(t)}) differ")
        if len(t) < 1:
            raise DataError("dataset is empty")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{i}" for i in range(x.shape[1])))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.x[rows], self.t[rows], self.columns, self.target_name, self.provenance)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.columns, self.target_name])
            for row, target in zip(self.x, self.t):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])


def load_csv(path, target: str | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    ``target`` names the target column; by default it is the last one. Rows
    containing NaN or infinity are dropped with a warning. Rows that do not
    parse as numbers are dropped too, but more than
    ``MAX_UNPARSABLE_FRACTION`` of them is an error.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    if target is None:
        target_index = len(header) - 1
    elif target in header:
        target_index = header.index(target)
    else:
        raise DataError(f"unknown target column {target!r}; columns are {header}")

    values, unparsable, nonfinite = [], 0, 0
    for row in rows:
        try:
            if len(row) != len(header):
                raise ValueError
            parsed = [float(cell) for cell in row]
        except ValueError:
            unparsable += 1
            continue
        if not all(math.isfinite(v) for v in parsed):
            nonfinite += 1
            continue
        values.append(parsed)

    if rows and unparsable / len(rows) > MAX_UNPARSABLE_FRACTION:
        raise DataError(f"{unparsable} of {len(rows)} rows in {path} are not numeric")
    if unparsable or nonfinite:
        logger.warning("%s: rejected %d non-finite and %d unparsable rows", path, nonfinite, unparsable)
    if not values:
        raise DataError(f"{path} has no usable rows")

    table = np.asarray(values, dtype=float)
    features = [i for i in range(len(header)) if i != target_index]
    return Dataset(
        table[:, features],
        table[:, target_index],
        tuple(header[i] for i in features),
        header[target_index],
        provenance=str(path),
    )


@dataclass(frozen=True)
class NormalizationMeta:
    """Training-set statistics: feature mean/std and target min/max."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_min: float
    target_max: float

    @property
    def target_range(self) -> float:
        return self.target_max - self.target_min

    def transform_features(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_mean) / self.feature_std

    def invert_features(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.feature_std + self.feature_mean

    def transform_targets(self, t) -> np.ndarray:
        return (np.asarray(t, dtype=float) - self.target_min) / self.target_range

    def invert_targets(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) * self.target_range + self.target_min

    def invert_variance(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.target_range**2

    def transform_variance(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) / self.target_range**2

    def to_dict(self) -> dict:
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "target_min": self.target_min,
            "target_max": self.target_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationMeta":
        return cls(
            np.asarray(data["feature_mean"], dtype=float),
            np.asarray(data["feature_std"], dtype=float),
            float(data["target_min"]),
            float(data["target_max"]),
        )

    @classmethod
    def identity(cls, n_features: int) -> "NormalizationMeta":
        return cls(np.zeros(n_features), np.ones(n_features), 0.0, 1.0)


def fit_normalization(train: Dataset) -> NormalizationMeta:
    """Standardise features (population std) and map targets onto [0, 1]."""
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    constant = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    if np.any(constant):
        names = [train.columns[i] for i in np.flatnonzero(constant)]
        logger.warning("constant feature column(s) %s: std set to 1", names)
        std = np.where(constant, 1.0, std)
    t_min, t_max = float(train.t.min()), float(train.t.max())
    if not t_max > t_min:
        raise DataError("degenerate target: all training targets are equal")
    return NormalizationMeta(mean, std, t_min, t_max)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    mode: str = "random"
    scores: np.ndarray | None = field(default=None, repr=False)

    def check(self, n: int) -> None:
        """Assert the two sides form a disjoint, exhaustive partition of range(n)."""
        if np.intersect1d(self.train, self.test).size:
            raise AssertionError("train and test rows overlap")
        if not np.array_equal(np.union1d(self.train, self.test), np.arange(n)):
            raise AssertionError("split does not cover every row exactly once")

    def manifest(self) -> str:
        """Line-oriented text: ``train <i> <j> ...`` then ``test <k> ...``."""
        return (
            f"# split mode={self.mode}\n"
            + "train " + " ".join(map(str, self.train)) + "\n"
            + "test " + " ".join(map(str, self.test)) + "\n"
        )

    @classmethod
    def from_manifest(cls, text: str) -> "Split":
        parts, mode = {}, "random"
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("#"):
                if "mode=" in line:
                    mode = line.split("mode=", 1)[1].strip()
                continue
            if line:
                name, *idx = line.split()
                parts[name] = np.asarray([int(i) for i in idx], dtype=np.intp)
        if set(parts) != {"train", "test"}:
            raise DataError("manifest needs exactly one train and one test line")
        return cls(parts["train"], parts["test"], mode)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5 + 1e-9)


def random_split(n: int, test_fraction: float, rng: Rng) -> Split:
    """Shuffle and cut; the test side gets round-half-up(n * fraction) rows."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    n_test = _round_half_up(n * test_fraction)
    if n_test < 1 or n_test >= n:
        raise ValueError(f"test fraction {test_fraction} gives {n_test} of {n} rows")
    order = rng.permutation(n)
    return Split(np.sort(order[n_test:]), np.sort(order[:n_test]), "random")


@dataclass(frozen=True)
class StatDiff:
    """Shift of the normalised targets from train to test."""

    mean_diff: float
    var_diff: float

    def to_dict(self) -> dict:
        return {"mean_diff": self.mean_diff, "var_diff": self.var_diff}


def stat_diff(data: Dataset, split: Split) -> StatDiff:
    norm = fit_normalization(data.subset(split.train))
    train_t = norm.transform_targets(data.t[split.train])
    test_t = norm.transform_targets(data.t[split.test])
    return StatDiff(float(test_t.mean() - train_t.mean()), float(test_t.var() - train_t.var()))


def outlier_split(
    data: Dataset,
    outlier_fraction: float = 0.1,
    n_trees: int = 100,
    psi: int | None = None,
    rng: Rng | None = None,
) -> tuple[Split, StatDiff]:
    """Send the ``ceil(fraction * N)`` most anomalous rows to the test side.

    Anomaly scores come from an Isolation Forest over the features only.
    Ties are broken by lower row index.
    """
    if not 0 < outlier_fraction < 0.5:
        raise ValueError(f"outlier fraction must be in (0, 0.5), got {outlier_fraction}")
    n = len(data)
    n_test = math.ceil(outlier_fraction * n - 1e-9)
    forest = fit_isolation_forest(data.x, n_trees, psi, rng)
    scores = forest.score(data.x)
    order = np.lexsort((np.arange(n), -scores))
    split = Split(np.sort(order[n_test:]), np.sort(order[:n_test]), "outlier", scores)
    return split, stat_diff(data, split)


# -- generators ---------------------------------------------------------------

def toy_cubic(n: int = 20, x_range=(-4.0, 4.0), noise_sd: float = 3.0, rng: Rng | None = None) -> Dataset:
    """x uniform on ``x_range``, t = x**3 + N(0, noise_sd**2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng or Rng(0)
    x = rng.uniform(x_range[0], x_range[1], size=n)
    t = x**3 + (rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else 0.0)
    return Dataset(x[:, None], t, ("x",), "t", provenance=f"toy_cubic(n={n}, range={tuple(x_range)}, noise_sd={noise_sd})")


def heteroscedastic(n: int = 768, d: int = 8, rng: Rng | None = None) -> Dataset:
    """Smooth nonlinear signal with input-dependent Gaussian noise.

    Features are N(0, 1). The target is
    ``sin(x0) + 0.5 x1^2 + 0.3 x2 x3 + 0.2 sum(x[4:])`` plus noise whose
    standard deviation is ``0.2 + 0.3 |x0|``. The Energy-sized default makes
    it a stand-in for calibration runs when no UCI file is available.
    """
    if d < 4:
        raise ValueError("heteroscedastic generator needs d >= 4")
    rng = rng or Rng(0)
    x = rng.normal(size=(n, d))
    signal = np.sin(x[:, 0]) + 0.5 * x[:, 1] ** 2 + 0.3 * x[:, 2] * x[:, 3] + 0.2 * x[:, 4:].sum(axis=1)
    noise_sd = 0.2 + 0.3 * np.abs(x[:, 0])
    t = signal + noise_sd * rng.normal(size=n)
    return Dataset(x, t, tuple(f"x{i}" for i in range(d)), "t", provenance=f"heteroscedastic(n={n}, d={d})")


def gaussian_blob(n: int = 500, d: int = 2, planted_sigma: float | None = None, rng: Rng | None = None) -> Dataset:
    """Isotropic N(0, I) features with an independent N(0, 1) target.

    The target ignores the features, so an outlier split of a blob has no
    target shift. With ``planted_sigma`` the last row is replaced by a point
    at that many standard deviations along the first axis.
    """
    rng = rng or Rng(0)
    x = rng.normal(size=(n, d))
    if planted_sigma is not None:
        x[-1] = 0.0
        x[-1, 0] = planted_sigma
    t = rng.normal(size=n)
    return Dataset(x, t, tuple(f"x{i}" for i in range(d)), "t", provenance=f"gaussian_blob(n={n}, d={d})")


GENERATORS = {
    "toy-cubic": toy_cubic,
    "heteroscedastic": heteroscedastic,
    "blob": gaussian_blob,
}
