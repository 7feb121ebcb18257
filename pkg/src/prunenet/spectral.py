"""Spectra of weight matrices and distances between their empirical distributions."""
import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError

CLAMP_REL_TOL = 1e-9
RANGE_REL_TOL = 1e-8


class GramMode(str, enum.Enum):
    ROW = "row"  # W W^T, one eigenvalue per row
    COL = "col"  # W^T W, one eigenvalue per column


class SpectrumKind(str, enum.Enum):
    SINGULAR_VALUES = "singular_values"
    GRAM_EIGENVALUES = "gram_eigenvalues"


@dataclass(frozen=True)
class SpectrumSummary:
    values: np.ndarray  # descending, non-negative
    source_shape: tuple
    kind: SpectrumKind

    def ecdf(self):
        return Ecdf(self.values)

    @property
    def min(self):
        return float(self.values[-1])

    @property
    def max(self):
        return float(self.values[0])


class Ecdf:
    """Right-continuous empirical CDF of a finite sample."""

    def __init__(self, sample):
        sample = np.asarray(sample, dtype=np.float64).ravel()
        if sample.size == 0:
            raise ValueError("empirical CDF of an empty sample")
        self.sorted_support = np.sort(sample)
        self.n = sample.size

    def __call__(self, x):
        return np.searchsorted(self.sorted_support, x, side="right") / self.n

    evaluate = __call__


def _as_matrix(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ShapeError(f"expected a non-empty matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("matrix has non-finite entries")
    return w


def _clamp_descending(values):
    values = np.sort(values)[::-1].copy()
    top = values[0] if values.size else 0.0
    values[values < CLAMP_REL_TOL * max(top, 0.0)] = 0.0
    return values


def gram_eigenvalues(w, mode=GramMode.ROW):
    """Eigenvalues of ``W W^T`` (row mode) or ``W^T W`` (column mode), descending."""
    w = _as_matrix(w)
    gram = w @ w.T if GramMode(mode) is GramMode.ROW else w.T @ w
    gram = 0.5 * (gram + gram.T)
    return SpectrumSummary(_clamp_descending(kernels.sym_eigvals(gram)), w.shape, SpectrumKind.GRAM_EIGENVALUES)


def singular_values(w):
    """The min(rows, cols) singular values, via the smaller Gram matrix."""
    w = _as_matrix(w)
    mode = GramMode.COL if w.shape[1] <= w.shape[0] else GramMode.ROW
    eig = gram_eigenvalues(w, mode).values
    return SpectrumSummary(np.sqrt(eig), w.shape, SpectrumKind.SINGULAR_VALUES)


def _sample(x, name):
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError(f"{name} is an empty sample")
    return x


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|."""
    return kernels.ks_statistic(_sample(a, "a"), _sample(b, "b"))


def ad_distance(a, b):
    """Two-sample Anderson-Darling statistic (Scholz-Stephens, midrank version for ties)."""
    return kernels.ad_statistic(_sample(a, "a"), _sample(b, "b"))


DISTANCES = {"ks": ks_distance, "ad": ad_distance}


@dataclass(frozen=True)
class RangeCheck:
    min_ok: bool
    max_ok: bool
    margins: tuple  # (min(sliced) - min(full), max(full) - max(sliced))

    @property
    def ok(self):
        return self.min_ok and self.max_ok


def spectrum_range_check(w, kept_rows):
    """Check that slicing rows keeps the row-Gram spectrum inside the original range."""
    w = _as_matrix(w)
    kept = np.asarray(kept_rows, dtype=np.int64).ravel()
    if kept.size == 0:
        raise ValueError("kept row set is empty")
    if kept.min() < 0 or kept.max() >= w.shape[0]:
        raise IndexError("kept row index out of range")
    full = gram_eigenvalues(w, GramMode.ROW)
    sliced = gram_eigenvalues(w[kept], GramMode.ROW)
    tol = RANGE_REL_TOL * full.max
    lower = sliced.min - full.min
    upper = full.max - sliced.max
    return RangeCheck(bool(lower >= -tol), bool(upper >= -tol), (float(lower), float(upper)))
