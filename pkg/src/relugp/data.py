"""Synthetic datasets, standardization and far-away outlier construction."""

import csv
from dataclasses import dataclass, field

import numpy as np

TOY_INTERVAL = (-4.0, 4.0)


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine map ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # constant columns are only centred
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    @classmethod
    def identity(cls, n_dims: int):
        return cls(np.zeros(n_dims), np.ones(n_dims))

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def invert(self, Z):
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass
class LabeledDataset:
    """Inputs (M, N) with integer labels or real targets.

    ``inputs`` are stored in the standardized space; ``standardizer`` maps raw
    inputs into it.
    """

    inputs: np.ndarray
    targets: np.ndarray
    task: str = "classification"
    standardizer: Standardizer = field(default=None)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        if self.task == "classification":
            self.targets = np.asarray(self.targets, dtype=np.int64)
        elif self.task == "regression":
            self.targets = np.asarray(self.targets, dtype=np.float64)
        else:
            raise ValueError(f"unknown task {self.task!r}")
        if len(self.targets) != len(self.inputs):
            raise ValueError("inputs and targets differ in length")
        if self.standardizer is None:
            self.standardizer = Standardizer.identity(self.inputs.shape[1])

    def __len__(self):
        return len(self.inputs)

    @property
    def n_dims(self):
        return self.inputs.shape[1]

    @property
    def n_classes(self):
        return int(self.targets.max()) + 1 if self.task == "classification" else 1

    def raw_inputs(self):
        return self.standardizer.invert(self.inputs)


def standardize(raw: LabeledDataset, standardizer: Standardizer | None = None) -> LabeledDataset:
    """Map a dataset holding raw inputs into standardized space.

    Without a ``standardizer`` one is fitted on ``raw`` (use this for training
    sets, and pass the fitted one on for validation, test and outlier sets).
    """
    if standardizer is None:
        standardizer = Standardizer.fit(raw.inputs)
    return LabeledDataset(standardizer.apply(raw.inputs), raw.targets, raw.task, standardizer)


def two_moons(m: int, noise_std: float, rng: np.random.Generator) -> LabeledDataset:
    """Two interleaved unit half-circles, ``m/2`` points each, raw coordinates.

    Angles are evenly spaced on ``[0, pi]``; row order is shuffled.
    """
    if m < 2 or m % 2:
        raise ValueError("two_moons needs an even m >= 2")
    half = m // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    X = np.vstack([upper, lower])
    y = np.repeat([0, 1], half)
    if noise_std > 0:
        X = X + noise_std * rng.standard_normal(X.shape)
    perm = rng.permutation(m)
    return LabeledDataset(X[perm], y[perm], "classification")


def random_centers(n_classes: int, n_dims: int, rng: np.random.Generator, spread: float = 4.0):
    return spread * rng.standard_normal((n_classes, n_dims))


def gaussian_blobs(m: int, centers, rng: np.random.Generator) -> LabeledDataset:
    """Unit-variance Gaussian clusters around ``centers`` (one row per class), raw coordinates."""
    centers = np.asarray(centers, dtype=np.float64)
    y = np.arange(m) % len(centers)
    X = centers[y] + rng.standard_normal((m, centers.shape[1]))
    perm = rng.permutation(m)
    return LabeledDataset(X[perm], y[perm], "classification")


def toy_curve(x):
    """Smooth target for the 1-D regression toy: ``sin(x) + 0.5 sin(2x)``."""
    x = np.asarray(x, dtype=np.float64)
    return np.sin(x) + 0.5 * np.sin(2.0 * x)


def toy_regression_1d(m: int, noise_std: float, rng: np.random.Generator,
                      interval=TOY_INTERVAL) -> LabeledDataset:
    """Uniform inputs on ``interval`` with noisy :func:`toy_curve` targets."""
    if m < 2:
        raise ValueError("need at least two points")
    lo, hi = interval
    x = rng.uniform(lo, hi, size=m)
    y = toy_curve(x)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(m)
    return LabeledDataset(x[:, None], y, "regression")


def uniform_outliers(count: int, n_dims: int, alpha: float, rng: np.random.Generator,
                     standardizer: Standardizer | None = None) -> np.ndarray:
    """``alpha``-scaled uniform noise on ``[0, 1]^n``, mapped by the training standardizer."""
    U = alpha * rng.uniform(0.0, 1.0, size=(count, n_dims))
    return U if standardizer is None else standardizer.apply(U)


def gaussian_outliers(count: int, n_dims: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """``alpha``-scaled standard Gaussian points, drawn directly in standardized space."""
    return alpha * rng.standard_normal((count, n_dims))


def noise_outliers(count: int, box_lo, box_hi, rng: np.random.Generator,
                   factors=(1.0, 10.0, 100.0)) -> np.ndarray:
    """Uniform points in the box ``[box_lo, box_hi]`` times a randomly chosen factor."""
    box_lo = np.asarray(box_lo, dtype=np.float64)
    box_hi = np.asarray(box_hi, dtype=np.float64)
    U = rng.uniform(box_lo, box_hi, size=(count, box_lo.size))
    scale = rng.choice(np.asarray(factors, dtype=np.float64), size=count)
    return U * scale[:, None]


def scale_point(x, alpha: float):
    return alpha * np.asarray(x, dtype=np.float64)


def write_csv(path, data: LabeledDataset, raw: bool = True):
    """Write ``x0..x{N-1},target`` rows; raw (unstandardized) inputs by default."""
    X = data.raw_inputs() if raw else data.inputs
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(X.shape[1])] + ["target"])
        for row, t in zip(X, data.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(t.item())])


def read_csv(path, task: str = "classification") -> LabeledDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "target":
        raise ValueError(f"{path}: last column must be 'target'")
    arr = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    X = arr[:, :-1].reshape(len(arr), len(header) - 1)
    return LabeledDataset(X, arr[:, -1], task)


def read_inputs_csv(path) -> np.ndarray:
    """Input matrix from a CSV with a header row; a trailing ``target`` column is ignored."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - (1 if header[-1] == "target" else 0)
    return np.array([[float(v) for v in r[:n]] for r in body], dtype=np.float64).reshape(len(body), n)
