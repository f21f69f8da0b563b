"""DepthGram computation in a single streaming pass over dimensions.

For every dimension ``j`` and time point ``k`` the ``n`` values are ranked
once.  The resulting counts feed four integer accumulators at the same time:

* per-dimension MBD and MEI numerators (columns of the dimension matrices),
* per-time-point sums over dimensions (the time matrices),
* the time MEI of the sign-corrected data, obtained by counting ``<=``
  instead of ``>=`` on dimensions whose cumulative correlation sign is -1,
* the second-level depths of the dimension matrices, which only need the
  ranks within each finished column.

Nothing of size ``n x p`` is kept unless ``emit_matrices`` is requested.
All cross-dimension state is integer, so the result is bit-identical for any
chunking or worker count.  Only the sign chain is sequential; chunks are
processed in parallel and committed in dimension order.
"""

import hashlib
import json
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .depth import band_pairs, rank_counts
from .errors import DataError
from .marginal import MarginalFlags, boxplot_flags, outliergram_flags

VARIANTS = ("dimensions", "time", "time_correlation")
DEFAULT_CHUNK = 64


def default_threads():
    return int(os.environ.get("HDFD_THREADS", "1"))


def correlation_sign(prev_col, cur_col):
    """Sign of the Pearson correlation of two columns; +1 when zero or undefined.

    Integer columns (depth numerators) are handled exactly.
    """
    a = np.asarray(prev_col)
    b = np.asarray(cur_col)
    if a.shape != b.shape:
        raise ValueError(f"columns differ in length: {a.shape} vs {b.shape}")
    if a.dtype.kind in "iu" and b.dtype.kind in "iu":
        n = a.size
        big = max(int(np.abs(a).max(initial=0)), int(np.abs(b).max(initial=0)))
        if n * n * big * big < 2**62:
            a = a.astype(np.int64)
            b = b.astype(np.int64)
            cov = n * int(a @ b) - int(a.sum()) * int(b.sum())
        else:
            al, bl = a.tolist(), b.tolist()
            cov = n * sum(x * y for x, y in zip(al, bl)) - sum(al) * sum(bl)
    else:
        a = a.astype(np.float64)
        b = b.astype(np.float64)
        cov = float((a - a.mean()) @ (b - b.mean()))
    return -1 if cov < 0 else 1


@dataclass
class DepthGram:
    variant: str
    n: int
    m: int
    mei_num: list
    mbd_num: list
    dg1: np.ndarray
    dg2: np.ndarray
    d_scores: np.ndarray
    F: float = None
    threshold: float = None
    flags: np.ndarray = None

    @property
    def points(self):
        return np.column_stack([self.dg1, self.dg2])

    @property
    def flagged(self):
        if self.flags is None:
            return []
        return np.flatnonzero(self.flags).tolist()

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "dg1": self.dg1.tolist(),
            "dg2": self.dg2.tolist(),
            "d_scores": self.d_scores.tolist(),
            "F": self.F,
            "threshold": self.threshold,
            "flagged": [i + 1 for i in self.flagged],
        }


def _depthgram_from_sums(variant, n, m, mei_num, mbd_num):
    """Build DepthGram points from second-level numerators.

    ``mei_num[i]`` sums ``>=`` counts over the ``m`` columns of the MBD
    matrix and ``mbd_num[i]`` sums band counts over the MEI matrix.  The
    distance to the reference parabola is evaluated in exact integers:
    with ``W = n*m - G`` and ``D = 2n(n-1)m^2``,
    ``d * D = 4Pm - 4(n-1)m^2 - 2(n-1)mW + W^2``.
    """
    if n < 2:
        raise DataError(f"DepthGram needs at least 2 observations, got {n}")
    G = [int(v) for v in mei_num]
    P = [int(v) for v in mbd_num]
    dg1 = np.array([float(Fraction(n * m - g, n * m)) for g in G])
    dg2 = np.array([float(Fraction(2 * pv, n * (n - 1) * m)) for pv in P])
    D = 2 * n * (n - 1) * m * m
    d = []
    for g, pv in zip(G, P):
        w = n * m - g
        d.append(float(Fraction(4 * pv * m - 4 * (n - 1) * m * m - 2 * (n - 1) * m * w + w * w, D)))
    return DepthGram(variant, n, m, G, P, dg1, dg2, np.array(d))


# Second-level inputs are (m, n): one row per column of a first-level matrix.

def _mei_numerators(cols):
    _, n_ge = rank_counts(cols)
    return n_ge.sum(axis=0, dtype=np.int64)


def _mbd_numerators(cols):
    le, ge = rank_counts(cols)
    return band_pairs(le, ge, cols.shape[1]).sum(axis=0)


def depthgram_points(variant, mbd_rows, mei_rows):
    """DepthGram points from ``n x m`` first-level depth matrices.

    Rows are observations.  Integer numerator matrices give exact ranking;
    float matrices are accepted too.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    mbd_rows = np.asarray(mbd_rows)
    mei_rows = np.asarray(mei_rows)
    if mbd_rows.shape != mei_rows.shape or mbd_rows.ndim != 2:
        raise DataError(f"depth matrices must share an n x m shape, got "
                        f"{mbd_rows.shape} and {mei_rows.shape}")
    n, m = mbd_rows.shape
    if n < 2:
        raise DataError(f"DepthGram needs at least 2 observations, got {n}")
    G = _mei_numerators(np.ascontiguousarray(mbd_rows.T))
    P = _mbd_numerators(np.ascontiguousarray(mei_rows.T))
    return _depthgram_from_sums(variant, n, m, G, P)


def flag_outliers(dg, F=1.5):
    """Flag observations whose distance above the parabola exceeds ``Q3 + F*IQR``."""
    if F <= 0:
        raise ValueError(f"F must be positive, got {F}")
    q1, q3 = np.quantile(dg.d_scores, [0.25, 0.75], method="linear")
    threshold = float(q3 + F * (q3 - q1))
    return replace(dg, F=float(F), threshold=threshold, flags=dg.d_scores > threshold)


@dataclass
class DepthMatrices:
    """First-level depth numerators, rows are observations.

    ``mbd_d``/``mei_d`` are ``n x p`` (denominators ``C(n,2)*N`` and
    ``n*N``); ``mbd_t``/``mei_t``/``mei_t_flipped`` are ``n x N``
    (denominators ``C(n,2)*p`` and ``n*p``).  The dimension matrices are None
    unless requested.
    """

    n: int
    p: int
    N: int
    mbd_t: np.ndarray
    mei_t: np.ndarray
    mei_t_flipped: np.ndarray
    mbd_d: np.ndarray = None
    mei_d: np.ndarray = None

    def values(self, name):
        num = getattr(self, name)
        n = self.n
        m = self.N if name.endswith("_d") else self.p
        den = n * (n - 1) // 2 if name.startswith("mbd") else n
        return num / float(den * m)


@dataclass
class ChunkResult:
    start: int
    mbd_d: np.ndarray
    mei_d: np.ndarray
    pairs_t: np.ndarray
    nge_t: np.ndarray
    same_t: np.ndarray
    opp_t: np.ndarray
    rel_signs: np.ndarray
    dim_mei_num: np.ndarray
    dim_mbd_num: np.ndarray
    magnitude: np.ndarray = None
    shape: np.ndarray = None

    @property
    def size(self):
        return self.mbd_d.shape[0]


def process_block(curves, start, F=1.5, marginal=False):
    """Per-chunk kernel; `curves` is ``(B, n, N)`` for dimensions ``start..start+B-1``.

    The sign chain inside the chunk is built relative to its first
    dimension: ``same_t`` holds the corrected time MEI counts if the chunk
    starts with sign +1 and ``opp_t`` if it starts with -1.
    """
    curves = np.asarray(curves, dtype=np.float64)
    B, n, N = curves.shape
    n_le, n_ge = rank_counts(curves.transpose(0, 2, 1))
    pairs = band_pairs(n_le, n_ge, n)
    mbd_d = pairs.sum(axis=1)
    mei_d = n_ge.sum(axis=1, dtype=np.int64)

    rel = np.ones(B, dtype=np.int8)
    for b in range(1, B):
        rel[b] = rel[b - 1] * correlation_sign(mei_d[b - 1], mei_d[b])
    plus = rel > 0
    nge_t = n_ge.sum(axis=0, dtype=np.int64)
    nle_t = n_le.sum(axis=0, dtype=np.int64)
    if plus.all():
        same_t, opp_t = nge_t, nle_t
    else:
        same_t = n_ge[plus].sum(axis=0, dtype=np.int64) + n_le[~plus].sum(axis=0, dtype=np.int64)
        opp_t = nge_t + nle_t - same_t

    res = ChunkResult(
        start=start,
        mbd_d=mbd_d,
        mei_d=mei_d,
        pairs_t=pairs.sum(axis=0),
        nge_t=nge_t,
        same_t=same_t,
        opp_t=opp_t,
        rel_signs=rel,
        dim_mei_num=_mei_numerators(mbd_d),
        dim_mbd_num=_mbd_numerators(mei_d),
    )
    if marginal:
        res.magnitude = boxplot_flags(curves, mbd_d, F)
        res.shape = outliergram_flags(mbd_d, mei_d, n, N, F)
    return res


class StreamState:
    """Accumulators for a pass over dimensions ``0..p-1`` in order."""

    def __init__(self, n, p, N, keep_dimension_matrices=False, marginal=False):
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        self.n, self.p, self.N = n, p, N
        self.next_j = 0
        self.pairs_t = np.zeros((N, n), dtype=np.int64)
        self.nge_t = np.zeros((N, n), dtype=np.int64)
        self.flip_t = np.zeros((N, n), dtype=np.int64)
        self.dim_mei_num = np.zeros(n, dtype=np.int64)
        self.dim_mbd_num = np.zeros(n, dtype=np.int64)
        self.prev_mei = None
        self.prev_sign = 1
        self.flipped = 0
        self.signs = np.empty(p, dtype=np.int8)
        self.keep = keep_dimension_matrices
        self.marginal = marginal
        self._mbd_cols, self._mei_cols = [], []
        self._magnitude, self._shape = [], []

    def commit(self, chunk):
        if chunk.start != self.next_j:
            raise DataError(f"dimension {chunk.start + 1} arrived out of order, "
                            f"expected {self.next_j + 1}")
        if chunk.mbd_d.shape[1] != self.n or chunk.pairs_t.shape[0] != self.N:
            raise DataError("block shape does not match the stream's n x N")
        if self.next_j + chunk.size > self.p:
            raise DataError(f"more than p={self.p} dimensions supplied")
        first = 1
        if self.prev_mei is not None:
            first = self.prev_sign * correlation_sign(self.prev_mei, chunk.mei_d[0])
        signs = first * chunk.rel_signs
        self.signs[self.next_j:self.next_j + chunk.size] = signs
        self.flipped += int((signs < 0).sum())
        self.flip_t += chunk.same_t if first > 0 else chunk.opp_t
        self.pairs_t += chunk.pairs_t
        self.nge_t += chunk.nge_t
        self.dim_mei_num += chunk.dim_mei_num
        self.dim_mbd_num += chunk.dim_mbd_num
        self.prev_mei = chunk.mei_d[-1]
        self.prev_sign = int(signs[-1])
        if self.keep:
            self._mbd_cols.append(chunk.mbd_d)
            self._mei_cols.append(chunk.mei_d)
        if self.marginal:
            self._magnitude.append(chunk.magnitude)
            self._shape.append(chunk.shape)
        self.next_j += chunk.size
        return self

    @property
    def complete(self):
        return self.next_j == self.p

    def matrices(self):
        m = DepthMatrices(self.n, self.p, self.N, self.pairs_t.T.copy(), self.nge_t.T.copy(),
                          self.flip_t.T.copy())
        if self.keep and self._mbd_cols:
            m.mbd_d = np.concatenate(self._mbd_cols).T.copy()
            m.mei_d = np.concatenate(self._mei_cols).T.copy()
        return m

    def marginal_flags(self):
        if not self.marginal:
            return None
        return MarginalFlags(np.concatenate(self._magnitude), np.concatenate(self._shape))

    def depthgrams(self):
        if not self.complete:
            raise DataError(f"stream incomplete: {self.next_j} of {self.p} dimensions seen")
        n = self.n
        dims = _depthgram_from_sums("dimensions", n, self.p, self.dim_mei_num, self.dim_mbd_num)
        # MBD_t is unchanged by sign flips, so both time variants share G
        G = _mei_numerators(self.pairs_t)
        P = _mbd_numerators(self.nge_t)
        P_flip = _mbd_numerators(self.flip_t)
        return {
            "dimensions": dims,
            "time": _depthgram_from_sums("time", n, self.N, G, P),
            "time_correlation": _depthgram_from_sums("time_correlation", n, self.N, G, P_flip),
        }


def accumulate_dimension(block, state, F=1.5):
    """Fold one ``n x N`` dimension block into `state` and return it."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (state.n, state.N):
        raise DataError(f"block of shape {block.shape} does not match "
                        f"n x N = {state.n} x {state.N}")
    return state.commit(process_block(block[None], state.next_j, F, state.marginal))


@dataclass
class AnalysisReport:
    n: int
    p: int
    N: int
    F: float
    depthgrams: dict
    outliers: list
    provenance: dict
    flipped_dimensions: int
    marginal: MarginalFlags = None
    matrices: DepthMatrices = None
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing=True):
        doc = {
            "schema": "depthgram-report/1",
            "shape": {"n": self.n, "p": self.p, "N": self.N},
            "F": self.F,
            "depthgrams": {k: dg.to_dict() for k, dg in self.depthgrams.items()},
            "outliers": [i + 1 for i in self.outliers],
            "provenance": {str(i + 1): v for i, v in self.provenance.items()},
            "sign_chain": {"flipped_dimensions": self.flipped_dimensions},
            "marginal": None if self.marginal is None else self.marginal.to_dict(),
        }
        if include_timing:
            doc["timing"] = self.timing
        return doc

    def checksum(self):
        """SHA-256 of the canonical report, excluding timing metadata."""
        text = json.dumps(self.to_dict(include_timing=False), sort_keys=True, allow_nan=False)
        return hashlib.sha256(text.encode()).hexdigest()


def _chunks(p, chunk):
    return [(j, min(j + chunk, p)) for j in range(0, p, chunk)]


def stream(source, F=1.5, run_marginal=False, emit_matrices=False, threads=None,
           chunk=DEFAULT_CHUNK):
    """Run the dimension pass over `source` and return the completed StreamState."""
    threads = default_threads() if threads is None else threads
    state = StreamState(source.n, source.p, source.N, emit_matrices, run_marginal)

    def work(bounds):
        j0, j1 = bounds
        block = source.read_dimensions(j0, j1)
        if block.shape != (j1 - j0, source.n, source.N):
            raise DataError(f"dimensions {j0 + 1}..{j1}: block shape {block.shape} "
                            f"does not match header")
        return process_block(block, j0, F, run_marginal)

    tasks = _chunks(source.p, chunk)
    if threads <= 1:
        for bounds in tasks:
            state.commit(work(bounds))
        return state
    with ThreadPoolExecutor(threads) as pool:
        pending = deque()
        it = iter(tasks)
        for bounds in it:
            pending.append(pool.submit(work, bounds))
            if len(pending) >= 2 * threads:
                break
        while pending:
            state.commit(pending.popleft().result())
            nxt = next(it, None)
            if nxt is not None:
                pending.append(pool.submit(work, nxt))
    return state


def analyze(source, F=1.5, run_marginal=False, emit_matrices=False, threads=None,
            chunk=DEFAULT_CHUNK):
    """Compute the three DepthGrams of `source`, flag outliers and assemble a report.

    `source` needs ``n, p, N`` and ``read_dimensions(start, stop)`` returning
    a ``(stop-start, n, N)`` array; see :mod:`depthgram.formats`.
    """
    t0 = time.perf_counter()
    state = stream(source, F, run_marginal, emit_matrices, threads, chunk)
    t1 = time.perf_counter()
    dgs = {k: flag_outliers(dg, F) for k, dg in state.depthgrams().items()}
    provenance = {}
    for k in VARIANTS:
        for i in dgs[k].flagged:
            provenance.setdefault(i, []).append(k)
    report = AnalysisReport(
        n=source.n, p=source.p, N=source.N, F=float(F),
        depthgrams=dgs,
        outliers=sorted(provenance),
        provenance=dict(sorted(provenance.items())),
        flipped_dimensions=state.flipped,
        marginal=state.marginal_flags(),
        matrices=state.matrices() if emit_matrices else None,
    )
    report.timing = {"pass_seconds": round(t1 - t0, 6),
                     "total_seconds": round(time.perf_counter() - t0, 6)}
    return report


def depth_matrices(source):
    """Fully materialized depth matrices (non-streaming helper for small data)."""
    return stream(source, emit_matrices=True).matrices()
