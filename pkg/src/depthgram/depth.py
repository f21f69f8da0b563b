"""Modified band depth (MBD) and modified epigraph index (MEI).

Both depths are computed from per-column ranks only.  For every evaluation
point the ``n`` sample values are sorted once and scanned for tie groups,
which gives, for each element, the number of values below-or-equal
(``n_le``) and above-or-equal (``n_ge``) it.  Everything else follows from
integer arithmetic on those two counts, so all results are exact quotients
of integer accumulators.

The literal O(n^2 m) definitions are kept alongside as ``mbd_brute`` and
``mei_brute`` to serve as test oracles.
"""

from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from .errors import DataError

__all__ = [
    "DepthVector",
    "PointCounts",
    "as_sample",
    "band_pairs",
    "mbd",
    "mbd_brute",
    "mei",
    "mei_brute",
    "parabola_f",
    "parabola_g",
    "pointwise_counts",
    "quantile",
    "rank_counts",
]


def as_sample(values, name="sample"):
    """Validate an ``n x m`` matrix of curves and return it as float64.

    Rows are observations, columns are evaluation points.  A 1-D input is
    read as ``n`` curves observed at a single point.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError(f"{name}: expected an n x m matrix, got shape {x.shape}")
    n, m = x.shape
    if n < 2:
        raise DataError(f"{name}: depth needs at least 2 observations, got {n}")
    if m < 1:
        raise DataError(f"{name}: no evaluation points")
    _check_finite(x, name)
    return x


def _check_finite(x, name):
    bad = ~np.isfinite(x)
    if bad.any():
        i, k = np.argwhere(bad)[0]
        raise DataError(f"{name}: non-finite value {x[i, k]} at observation {i + 1}, point {k + 1}")


@numba.njit(nogil=True, cache=True)
def _scan_ties(x, order, n_le, n_ge):
    rows, n = x.shape
    for r in range(rows):
        start = 0
        while start < n:
            end = start
            val = x[r, order[r, start]]
            while end + 1 < n and x[r, order[r, end + 1]] == val:
                end += 1
            for q in range(start, end + 1):
                n_le[r, order[r, q]] = end + 1
                n_ge[r, order[r, q]] = n - start
            start = end + 1


def rank_counts(x):
    """Tie-aware counts along the last axis.

    Parameters
    ----------
    x : ndarray, shape (..., n)
        Each slice along the last axis is one set of ``n`` comparable values
        (float or integer).

    Returns
    -------
    n_le, n_ge : ndarray of int32, same shape as `x`
        Number of values ``<=`` and ``>=`` each element, itself included.
    """
    x = np.asarray(x)
    shape = x.shape
    flat = np.ascontiguousarray(x.reshape(-1, shape[-1]))
    order = np.argsort(flat, axis=-1)
    n_le = np.empty(flat.shape, dtype=np.int32)
    n_ge = np.empty(flat.shape, dtype=np.int32)
    _scan_ties(flat, order, n_le, n_ge)
    return n_le.reshape(shape), n_ge.reshape(shape)


def band_pairs(n_le, n_ge, n):
    """Number of unordered curve pairs whose band contains each element.

    With ``e`` tied values, ``l`` strictly below and ``u`` strictly above,
    a pair covers the element unless both members lie strictly on the same
    side: ``C(e,2) + e*l + e*u + l*u``.
    """
    n_le = np.asarray(n_le, dtype=np.int64)
    n_ge = np.asarray(n_ge, dtype=np.int64)
    e = n_le + n_ge - n
    below = n_le - e
    above = n_ge - e
    return e * (e - 1) // 2 + e * (below + above) + below * above


@dataclass(frozen=True)
class PointCounts:
    """Counts for the ``n`` elements of a single evaluation point."""

    n_le: np.ndarray
    n_ge: np.ndarray
    e: np.ndarray
    pairs_containing: np.ndarray


def pointwise_counts(column):
    """Return :class:`PointCounts` for one column of ``n >= 2`` finite values."""
    col = np.asarray(column, dtype=np.float64).ravel()
    if col.size < 2:
        raise DataError(f"need at least 2 values, got {col.size}")
    bad = np.flatnonzero(~np.isfinite(col))
    if bad.size:
        raise DataError(f"non-finite value {col[bad[0]]} at index {bad[0]}")
    n = col.size
    n_le, n_ge = rank_counts(col)
    n_le = n_le.astype(np.int64)
    n_ge = n_ge.astype(np.int64)
    return PointCounts(n_le, n_ge, n_le + n_ge - n, band_pairs(n_le, n_ge, n))


@dataclass(frozen=True)
class DepthVector:
    """Depth values kept as exact integer numerators.

    ``value_i = numerators[i] / (denominator * m)`` where ``denominator`` is
    ``C(n, 2)`` for MBD and ``n`` for MEI, and ``m`` is the number of
    evaluation points averaged over.
    """

    kind: str
    numerators: np.ndarray
    denominator: int
    m: int

    @property
    def n(self):
        return len(self.numerators)

    @property
    def values(self):
        return self.numerators / float(self.denominator * self.m)

    def fractions(self):
        scale = self.denominator * self.m
        return [Fraction(int(v), scale) for v in self.numerators]

    def __len__(self):
        return len(self.numerators)


def _binom2(n):
    return n * (n - 1) // 2


def mbd(sample):
    """Modified band depth of every curve with respect to the sample."""
    x = as_sample(sample)
    n, m = x.shape
    n_le, n_ge = rank_counts(x.T)
    num = band_pairs(n_le, n_ge, n).sum(axis=0)
    return DepthVector("MBD", num, _binom2(n), m)


def mei(sample):
    """Modified epigraph index: mean proportion of curves lying at or above."""
    x = as_sample(sample)
    n, m = x.shape
    _, n_ge = rank_counts(x.T)
    return DepthVector("MEI", n_ge.sum(axis=0, dtype=np.int64), n, m)


def mbd_brute(sample):
    """MBD by enumerating every band explicitly (test oracle)."""
    x = as_sample(sample)
    n, m = x.shape
    a, b = np.triu_indices(n, k=1)
    lo = np.minimum(x[a], x[b])[:, None, :]
    hi = np.maximum(x[a], x[b])[:, None, :]
    inside = (lo <= x[None]) & (x[None] <= hi)
    return DepthVector("MBD", inside.sum(axis=(0, 2), dtype=np.int64), _binom2(n), m)


def mei_brute(sample):
    """MEI by comparing every pair of curves pointwise (test oracle)."""
    x = as_sample(sample)
    n, m = x.shape
    above = x[None, :, :] >= x[:, None, :]
    return DepthVector("MEI", above.sum(axis=(1, 2), dtype=np.int64), n, m)


def _check_n(n):
    if n < 2:
        raise ValueError(f"sample size must be at least 2, got {n}")


def parabola_f(n, z):
    """Upper bound of MBD as a function of MEI for a sample of size `n`.

    ``f_n(z) = a0 + a1 z + a2 n^2 z^2`` with ``a0 = a2 = -2/(n(n-1))`` and
    ``a1 = 2(n+1)/(n-1)``.  Accepts Fractions for exact evaluation.
    """
    _check_n(n)
    if isinstance(z, Fraction):
        a0 = Fraction(-2, n * (n - 1))
        a1 = Fraction(2 * (n + 1), n - 1)
    else:
        a0 = -2.0 / (n * (n - 1))
        a1 = 2.0 * (n + 1) / (n - 1)
    return a0 + a1 * z + a0 * n * n * z * z


def parabola_g(n, z):
    """Reference parabola of the DepthGram, ``2/n + z - n z^2 / (2(n-1))``."""
    _check_n(n)
    if isinstance(z, Fraction):
        return Fraction(2, n) + z - Fraction(n, 2 * (n - 1)) * z * z
    return 2.0 / n + z - n * z * z / (2.0 * (n - 1))


def quantile(values, q):
    """Sample quantile with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("quantile of an empty sequence")
    return float(np.quantile(v, q, method="linear"))
