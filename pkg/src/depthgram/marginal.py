"""Per-dimension magnitude and shape screening.

Magnitude outliers are found with the functional boxplot: the central region
is the envelope of the ceil(n/2) deepest curves by MBD, inflated by ``F``
times its pointwise height, and a curve is flagged when it leaves the
inflated band anywhere.  Shape outliers are found with the outliergram: the
gap ``f_n(MEI) - MBD`` is screened with the boxplot rule ``Q3 + F * IQR``.

Both screens reuse the MBD and MEI numerators that the DepthGram pass already
computes for every dimension.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .depth import DepthVector, band_pairs, rank_counts


@dataclass
class MarginalFlags:
    """Boolean flag matrices of shape ``(p, n)``: dimension by observation."""

    magnitude: np.ndarray
    shape: np.ndarray

    @property
    def n(self):
        return self.magnitude.shape[1]

    @property
    def p(self):
        return self.magnitude.shape[0]

    def magnitude_dims(self, i):
        """Sorted 1-based dimensions where observation `i` (0-based) is a magnitude outlier."""
        return (np.flatnonzero(self.magnitude[:, i]) + 1).tolist()

    def shape_dims(self, i):
        return (np.flatnonzero(self.shape[:, i]) + 1).tolist()

    def dimension_counts(self):
        return {"magnitude": self.magnitude.sum(axis=1), "shape": self.shape.sum(axis=1)}

    def to_dict(self):
        return {
            "magnitude_dims": {str(i + 1): self.magnitude_dims(i)
                               for i in range(self.n) if self.magnitude[:, i].any()},
            "shape_dims": {str(i + 1): self.shape_dims(i)
                           for i in range(self.n) if self.shape[:, i].any()},
            "flags_per_dimension": {k: v.tolist() for k, v in self.dimension_counts().items()},
        }


def boxplot_flags(curves, mbd_num, F=1.5):
    """Functional boxplot flags for a stack of dimensions.

    Parameters
    ----------
    curves : ndarray, shape (B, n, N)
    mbd_num : ndarray, shape (B, n)
        MBD numerators (or values) of each curve within its dimension.
    F : float
        Fence inflation factor.

    Returns
    -------
    ndarray of bool, shape (B, n)
    """
    curves = np.asarray(curves, dtype=np.float64)
    B, n, _ = curves.shape
    h = -(-n // 2)
    # stable sort: among equal depths the lower observation index wins
    deepest = np.argsort(-np.asarray(mbd_num), axis=1, kind="stable")[:, :h]
    central = np.take_along_axis(curves, deepest[:, :, None], axis=1)
    lo = central.min(axis=1, keepdims=True)
    hi = central.max(axis=1, keepdims=True)
    spread = F * (hi - lo)
    outside = (curves < lo - spread) | (curves > hi + spread)
    return outside.any(axis=2)


def outliergram_scores(mbd_num, mei_num, n, m):
    """``f_n(MEI) - MBD`` from integer numerators, exact up to the final division.

    With ``G`` the MEI numerator and ``P`` the MBD numerator over ``m``
    points, ``d * n(n-1)m^2 = -2m^2 + 2(n+1)Gm - 2G^2 - 2Pm``.
    """
    G = np.asarray(mei_num)
    P = np.asarray(mbd_num)
    if n * m < 2**30:
        G = G.astype(np.int64)
        P = P.astype(np.int64)
        num = -2 * m * m + 2 * (n + 1) * G * m - 2 * G * G - 2 * P * m
        return num / float(n * (n - 1) * m * m)
    G = G.astype(object)
    P = P.astype(object)
    num = -2 * m * m + 2 * (n + 1) * G * m - 2 * G * G - 2 * P * m
    return np.array([float(v) for v in (num / (n * (n - 1) * m * m)).ravel()]).reshape(G.shape)


def boxplot_rule(scores, F=1.5):
    """Flag entries strictly above ``Q3 + F * IQR`` along the last axis."""
    q1, q3 = np.quantile(scores, [0.25, 0.75], axis=-1, method="linear", keepdims=True)
    return scores > q3 + F * (q3 - q1)


def outliergram_flags(mbd_num, mei_num, n, m, F=1.5):
    return boxplot_rule(outliergram_scores(mbd_num, mei_num, n, m), F)


def functional_boxplot_dim(curves, mbd_col, F=1.5):
    """Magnitude flags for one dimension given as ``n x N`` curves."""
    curves = np.asarray(curves, dtype=np.float64)
    num = mbd_col.numerators if isinstance(mbd_col, DepthVector) else mbd_col
    return boxplot_flags(curves[None], np.asarray(num)[None], F)[0]


def outliergram_dim(mbd_col, mei_col, F=1.5):
    """Shape flags for one dimension from its MBD and MEI depth vectors."""
    if mbd_col.m != mei_col.m or mbd_col.n != mei_col.n:
        raise ValueError("MBD and MEI columns come from different samples")
    return outliergram_flags(mbd_col.numerators[None], mei_col.numerators[None],
                             mbd_col.n, mbd_col.m, F)[0]


def screen_block(curves, F=1.5):
    """Depth numerators and marginal flags for a ``(B, n, N)`` stack of dimensions."""
    B, n, N = curves.shape
    n_le, n_ge = rank_counts(curves.transpose(0, 2, 1))
    mbd_num = band_pairs(n_le, n_ge, n).sum(axis=1)
    mei_num = n_ge.sum(axis=1, dtype=np.int64)
    return boxplot_flags(curves, mbd_num, F), outliergram_flags(mbd_num, mei_num, n, N, F)


def marginal_screen(source, F=1.5, threads=1, chunk=64):
    """Run both screens on every dimension of `source`.

    `source` is anything with ``n, p, N`` and ``read_dimensions(start, stop)``.
    The result does not depend on `threads` or `chunk`.
    """
    starts = range(0, source.p, chunk)

    def work(j0):
        return screen_block(source.read_dimensions(j0, min(j0 + chunk, source.p)), F)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(j0) for j0 in starts]
    return MarginalFlags(np.concatenate([m for m, _ in parts]),
                         np.concatenate([s for _, s in parts]))
