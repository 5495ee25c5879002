"""Tabular ingestion, standardization, splitting and toy generators.

CSV layout: comma separated, one header row, inputs first and the declared
number of output columns last.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import EmptyDataset, InvalidLabel, ParseError, SchemaMismatch

CLASSIFICATION_TASKS = ("binary", "multiclass")


@dataclass
class Stats:
    """Per-column means and standard deviations (``None`` when not applied)."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray = None
    y_std: np.ndarray = None
    warnings: list = field(default_factory=list)


@dataclass
class Dataset:
    """Inputs ``X`` (``n x d_x``), outputs ``Y`` (``n x d_y``) and a task tag.

    For classification ``Y`` holds integer class codes stored as floats.
    ``stats`` is set once the data have been standardized; ``n_rejected``
    counts rows dropped at load time for non-finite values.
    """

    X: np.ndarray
    Y: np.ndarray
    task: str = "regression"
    stats: Stats = None
    n_rejected: int = 0
    header: list = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        self.Y = Y[:, None] if Y.ndim == 1 else Y
        if self.X.shape[0] != self.Y.shape[0]:
            raise SchemaMismatch(f"X has {self.X.shape[0]} rows but Y has {self.Y.shape[0]}")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d_x(self):
        return self.X.shape[1]

    @property
    def d_y(self):
        return self.Y.shape[1]

    @property
    def num_classes(self):
        if self.task not in CLASSIFICATION_TASKS:
            return None
        return int(self.Y.max()) + 1 if self.n else 0

    def subset(self, idx):
        return replace(self, X=self.X[idx], Y=self.Y[idx])


def _check_labels(Y, task):
    if task not in CLASSIFICATION_TASKS:
        return
    if Y.shape[1] != 1:
        raise SchemaMismatch("classification expects exactly one output column")
    if np.any(Y < 0) or np.any(Y != np.round(Y)):
        raise InvalidLabel("class labels must be non-negative integers")
    if task == "binary" and np.any(Y > 1):
        raise InvalidLabel("binary labels must be 0 or 1")


def load_table(path, n_outputs=1, task="regression"):
    """Read a CSV file with a header row; the last ``n_outputs`` columns are outputs.

    Rows containing NaN or infinite values are dropped and counted in
    ``Dataset.n_rejected``.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ParseError
        On a non-numeric cell or a row with the wrong number of columns.
    SchemaMismatch
        If the header cannot accommodate ``n_outputs`` output columns.
    """
    path = Path(path)
    rows, rejected = [], 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty; a header row is required", 1) from None
        width = len(header)
        if n_outputs < 1 or width <= n_outputs:
            raise SchemaMismatch(f"{width} columns cannot hold {n_outputs} outputs plus at least one input")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} columns, found {len(row)}", lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ParseError(f"non-numeric value {bad!r}", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                rejected += 1
                continue
            rows.append(vals)
    if not rows:
        raise EmptyDataset(f"{path} contains no usable rows")
    arr = np.asarray(rows)
    X, Y = arr[:, :-n_outputs], arr[:, -n_outputs:]
    _check_labels(Y, task)
    if rejected:
        warnings.warn(f"{path}: rejected {rejected} rows with non-finite values", stacklevel=2)
    return Dataset(X, Y, task, n_rejected=rejected, header=header)


def _is_float(c):
    try:
        float(c)
        return True
    except ValueError:
        return False


def write_table(ds, path, header=None):
    """Write ``ds`` in the layout :func:`load_table` reads. Floats use ``repr``."""
    if header is None:
        header = ds.header or [f"x{i}" for i in range(ds.d_x)] + [f"y{i}" for i in range(ds.d_y)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(ds.X, ds.Y):
            w.writerow([repr(float(v)) for v in np.concatenate([x, y])])


def _column_stats(A, name, notes):
    mean = A.mean(axis=0)
    std = A.std(axis=0)
    const = std == 0
    for j in np.flatnonzero(const):
        notes.append(f"{name} column {j} is constant; its scale is left at 1")
    std = np.where(const, 1.0, std)
    return mean, std


def standardize(ds):
    """Zero-mean, unit-variance columns (population std).

    Outputs are rescaled only for regression and unsupervised data. Returns
    ``(standardized, stats)``.
    """
    if ds.n < 2:
        raise EmptyDataset("standardization needs at least two rows")
    notes = []
    xm, xs = _column_stats(ds.X, "input", notes)
    ym = ys = None
    Y = ds.Y
    if ds.task not in CLASSIFICATION_TASKS:
        ym, ys = _column_stats(ds.Y, "output", notes)
        Y = (ds.Y - ym) / ys
    for note in notes:
        warnings.warn(note, stacklevel=2)
    stats = Stats(xm, xs, ym, ys, notes)
    return replace(ds, X=(ds.X - xm) / xs, Y=Y, stats=stats), stats


def apply_stats(ds, stats):
    """Standardize ``ds`` with statistics computed elsewhere (e.g. a training set)."""
    Y = ds.Y
    if stats.y_mean is not None:
        Y = (ds.Y - stats.y_mean) / stats.y_std
    return replace(ds, X=(ds.X - stats.x_mean) / stats.x_std, Y=Y, stats=stats)


def split(ds, test_frac=0.1, seed=0):
    """Random disjoint train/test split with ``ceil(n * test_frac)`` test rows."""
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie strictly between 0 and 1")
    n = ds.n
    n_test = math.ceil(n * test_frac)
    if n_test >= n:
        raise EmptyDataset(f"{n} rows leave no training data at test_frac={test_frac}")
    perm = rngmod.stream(seed, "split").permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def step_function(x):
    """``cos(5x) exp(-x/2)`` shifted by ``+1`` for ``x < 0`` and ``-1`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    return np.cos(5 * x) * np.exp(-0.5 * x) + np.where(x < 0, 1.0, -1.0)


def toy_step(n=50, seed=0, noise_std=0.0, low=-1.5, high=1.5):
    """Discontinuous 1-D regression toy with uniformly drawn inputs."""
    if n < 2:
        raise ValueError("toy_step needs n >= 2")
    r = rngmod.stream(seed, "toy-step")
    x = r.uniform(low, high, size=n)
    y = step_function(x)
    if noise_std > 0:
        y = y + noise_std * r.standard_normal(n)
    return Dataset(x[:, None], y[:, None], "regression")


def toy_classify2d(n=200, seed=0, noise=0.1):
    """Two interleaved crescents ("moons") with balanced labels.

    Class 0 points lie on ``(cos t, sin t)`` and class 1 points on
    ``(1 - cos t, 0.5 - sin t)`` for ``t`` uniform on ``[0, pi]``, plus
    isotropic Gaussian jitter of scale ``noise``.
    """
    if n < 4:
        raise ValueError("toy_classify2d needs n >= 4")
    r = rngmod.stream(seed, "toy-classify")
    n0 = (n + 1) // 2
    labels = np.r_[np.zeros(n0), np.ones(n - n0)]
    t = r.uniform(0.0, np.pi, size=n)
    x0 = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    x1 = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    X = np.column_stack([x0, x1]) + noise * r.standard_normal((n, 2))
    perm = r.permutation(n)
    return Dataset(X[perm], labels[perm][:, None], "binary")
