"""Data ingestion, response slicing and the sliced sufficient statistics.

Everything downstream (criteria, ALS, estimators) consumes a
:class:`SlicedMoments`; nothing else touches the raw observations.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InputError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix ``X`` (n x p) and real response ``Y`` (length n)."""

    X: np.ndarray
    Y: np.ndarray
    columns: tuple = field(default=(), compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or Y.ndim != 1:
            raise InputError("X must be 2-D and Y 1-D")
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but Y has length {Y.shape[0]}")
        if X.shape[0] < 2:
            raise InputError("need at least 2 observations")
        if X.shape[1] < 1:
            raise InputError("need at least one predictor column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("non-finite entries in X or Y")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j + 1}" for j in range(X.shape[1])))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.X[rows], self.Y[rows], self.columns)


class SliceScheme(enum.Enum):
    EQUAL_FREQUENCY = "equal-frequency"
    EQUAL_WIDTH = "equal-width"


@dataclass(frozen=True)
class SliceAssignment:
    """Slice label (0-based) of every observation."""

    labels: np.ndarray
    h: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise InputError("slice labels must be a 1-D integer array")
        if self.h < 1:
            raise InputError("h must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.h):
            raise InputError(f"slice labels must lie in 0..{self.h - 1}")
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.intp))

    @property
    def counts(self):
        return np.bincount(self.labels, minlength=self.h)

    def subset(self, rows):
        return SliceAssignment(self.labels[rows], self.h)


def slice_by_response(dataset, h, scheme=SliceScheme.EQUAL_FREQUENCY):
    """Partition observations into ``h`` slices of (nearly) equal size by sorted ``Y``.

    Ties in ``Y`` are ordered by original row index, so the result is
    deterministic. Slice sizes differ by at most one, larger slices first.
    """
    if scheme is not SliceScheme.EQUAL_FREQUENCY:
        raise NotImplementedError(f"slicing scheme {scheme.value!r} is not implemented")
    if not isinstance(h, (int, np.integer)) or h < 1:
        raise InputError(f"number of slices must be a positive integer, got {h!r}")
    if h > dataset.n:
        raise InputError(f"too many slices: h={h} > n={dataset.n}")
    order = np.argsort(dataset.Y, kind="stable")
    labels = np.empty(dataset.n, dtype=np.intp)
    for y, rows in enumerate(np.array_split(order, h)):
        labels[rows] = y
    return SliceAssignment(labels, int(h))


@dataclass(frozen=True)
class SlicedMoments:
    """Sufficient statistics of a sliced sample.

    Attributes
    ----------
    f : (h,) slice frequencies ``n_y / n``.
    xbar : (p,) overall mean.
    slice_means : (h, p) per-slice means.
    deltas : (p, h) centered slice means, column ``y`` is ``slice_means[y] - xbar``.
    sigma : (p, p) sample covariance with divisor ``n``.
    gamma : (p, p) ``sum_y f_y deltas[:, y] deltas[:, y]^T``.
    """

    f: np.ndarray
    xbar: np.ndarray
    slice_means: np.ndarray
    deltas: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    n: int

    @property
    def p(self):
        return self.sigma.shape[0]

    @property
    def h(self):
        return self.f.shape[0]

    def summary(self, n_eig=5):
        """Diagnostics dict: frequencies, slice-mean norms, rank/condition of sigma, top eigenvalues of gamma."""
        s_eig = np.linalg.eigvalsh(self.sigma)[::-1]
        tol = max(self.p, 1) * np.finfo(float).eps * max(abs(s_eig[0]), 0.0)
        rank = int(np.sum(s_eig > tol)) if s_eig[0] > 0 else 0
        cond = float(s_eig[0] / s_eig[-1]) if s_eig[-1] > 0 else float("inf")
        g_eig = np.linalg.eigvalsh(self.gamma)[::-1][:n_eig]
        return {
            "n": self.n,
            "p": self.p,
            "h": self.h,
            "f": self.f.tolist(),
            "slice_mean_norms": np.linalg.norm(self.deltas, axis=0).tolist(),
            "sigma_rank": rank,
            "sigma_condition": cond,
            "gamma_top_eigenvalues": g_eig.tolist(),
        }


def compute_sliced_moments(dataset, assignment):
    if assignment.labels.shape[0] != dataset.n:
        raise InputError("slice assignment does not match the dataset size")
    counts = assignment.counts
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise InputError(f"invalid assignment: empty slice(s) {empty}")
    n, h = dataset.n, assignment.h
    # Shift by the first row: constant columns then give exactly zero
    # deviations, covariance and Gamma instead of rounding residue.
    ref = dataset.X[0]
    X0 = dataset.X - ref
    onehot = np.zeros((n, h))
    onehot[np.arange(n), assignment.labels] = 1.0
    means0 = (onehot.T @ X0) / counts[:, None]
    f = counts / n
    mean0 = f @ means0
    deltas = (means0 - mean0).T
    Xc = X0 - mean0
    sigma = Xc.T @ Xc / n
    sigma = 0.5 * (sigma + sigma.T)
    gamma = (deltas * f) @ deltas.T
    gamma = 0.5 * (gamma + gamma.T)
    return SlicedMoments(
        f=_frozen(f),
        xbar=_frozen(mean0 + ref),
        slice_means=_frozen(means0 + ref),
        deltas=_frozen(deltas),
        sigma=_frozen(sigma),
        gamma=_frozen(gamma),
        n=n,
    )


def sliced_moments(dataset, h):
    """Slice ``dataset`` into ``h`` equal-frequency slices and compute its moments."""
    return compute_sliced_moments(dataset, slice_by_response(dataset, h))


def toy_dataset():
    """Four points in the plane whose two slices give identity covariance and Gamma = diag(0, 1)."""
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    return Dataset(X, np.array([1.0, 2.0, 3.0, 4.0]))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _resolve_response(header, response):
    if response in header:
        return header.index(response)
    try:
        idx = int(response)
    except (TypeError, ValueError):
        raise InputError(f"response column {response!r} not found in header {header}") from None
    if not -len(header) <= idx < len(header):
        raise InputError(f"response column index {idx} out of range for {len(header)} columns")
    return idx % len(header)


def read_csv(path, response):
    """Read a comma-separated file with a header row.

    ``response`` is a column name, or an integer index when no column has
    that name. All remaining columns form ``X``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file (header row required)") from None
        ycol = _resolve_response(header, str(response))
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric or missing value") from None
            if not all(np.isfinite(values)):
                raise InputError(f"{path}:{line}: non-finite value")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows)
    xcols = [j for j in range(len(header)) if j != ycol]
    return Dataset(data[:, xcols], data[:, ycol], tuple(header[j] for j in xcols))


def write_csv(dataset, dest, response_name="y"):
    """Write ``dataset`` as CSV (predictors then response) to a path or open text handle."""
    if not hasattr(dest, "write"):
        with Path(dest).open("w", newline="") as fh:
            return write_csv(dataset, fh, response_name)
    writer = csv.writer(dest)
    writer.writerow([*dataset.columns, response_name])
    for x, y in zip(dataset.X, dataset.Y):
        writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])
