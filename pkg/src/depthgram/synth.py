"""Synthetic high-dimensional functional data with planted outliers.

Four varying-coefficient models share the layout: ``n`` observations of
which the last 15 are nominal outliers (5 magnitude, 5 shape, 5 joint, in
that order).  Each nominal outlier is atypical on ``round(c * p)`` randomly
chosen dimensions and follows the typical branch elsewhere.

Random streams
--------------
All randomness comes from Philox4x64-10 counter-based generators keyed by
``(seed, stream)``:

* stream 0 draws, in order, the reference intercepts ``alpha``, the
  Models 1/2 joint reference table, and the contaminated dimension sets;
* stream ``j`` (1-based dimension index) draws the ``n x N`` standard
  normals for dimension ``j``, row by row, which are coloured by the
  Cholesky factor of the noise covariance.

Dimension ``j`` therefore depends only on ``(seed, j)``, and any dimension
range can be regenerated independently and in any order.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DataError

N_PER_TYPE = 5
OUTLIER_TYPES = ("magnitude", "shape", "joint")
MAGNITUDE_SHIFT = 10.0
GP_SCALE = 0.3
GP_RANGE = 0.3


def time_grid(N):
    """Equispaced grid ``t_k = (k-1)/(N-1)`` on [0, 1]; ``[0.0]`` when N == 1."""
    if N < 1:
        raise ValueError(f"grid needs at least one point, got N={N}")
    if N == 1:
        return np.zeros(1)
    return np.arange(N) / (N - 1)


def gp_covariance(t):
    t = np.asarray(t, dtype=np.float64)
    return GP_SCALE * np.exp(-np.abs(t[:, None] - t[None, :]) / GP_RANGE)


@lru_cache(maxsize=16)
def _cholesky_cached(N):
    return gp_factor(time_grid(N))


def gp_factor(t):
    """Lower Cholesky factor of the noise covariance on grid `t`."""
    cov = gp_covariance(t)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + 1e-10 * np.eye(len(cov)))
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(cov)
        raise RuntimeError(f"noise covariance not factorizable on {len(cov)} points "
                           f"(min eigenvalue {w.min():.3e}) even with 1e-10 jitter") from exc


def gp_noise(N, rng):
    """One zero-mean Gaussian process draw on the N-point grid."""
    return _cholesky_cached(N) @ rng.standard_normal(N)


def coefficient_h(j, p, t, alternating=False):
    """Varying coefficient ``1 + 2 t^(1+j/p) (1-t)^(2-j/p)`` for dimension ``j`` (1-based).

    With `alternating`, even dimensions are negated.
    """
    t = np.asarray(t, dtype=np.float64)
    if not 1 <= j <= p:
        raise ValueError(f"dimension {j} outside 1..{p}")
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    r = j / p
    h = 1.0 + 2.0 * t ** (1.0 + r) * (1.0 - t) ** (2.0 - r)
    if alternating and j % 2 == 0:
        h = -h
    return h if h.ndim else float(h)


def _coefficients(j0, j1, p, t, alternating):
    j = np.arange(j0 + 1, j1 + 1, dtype=np.float64)[:, None]
    r = j / p
    h = 1.0 + 2.0 * t[None, :] ** (1.0 + r) * (1.0 - t[None, :]) ** (2.0 - r)
    if alternating:
        h[(np.arange(j0 + 1, j1 + 1) % 2 == 0)] *= -1.0
    return h


def reference_curves(model, alphas, t):
    """Typical and shape-outlier reference curves, each ``n x N``."""
    a = np.asarray(alphas)[:, None]
    t = np.asarray(t)[None, :]
    if model in (1, 3):
        return np.sin(4 * np.pi * t) + a, np.cos(4 * np.pi * t + np.pi / 2) + a
    return 4 * t + a, 4 * t + 2 * np.sin(4 * (t + 0.5) * np.pi) + a


@dataclass(frozen=True)
class ModelConfig:
    model: int
    n: int = 100
    p: int = 50
    N: int = 100
    c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in (1, 2, 3, 4):
            raise ValueError(f"model must be 1, 2, 3 or 4, got {self.model}")
        if self.n < 20:
            raise ValueError(f"n must be at least 20 to hold 15 outliers, got {self.n}")
        if self.p < 1 or self.N < 1:
            raise ValueError(f"p and N must be positive, got p={self.p}, N={self.N}")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"contamination rate c must lie in [0, 1], got {self.c}")

    @property
    def alternating(self):
        return self.model in (2, 4)

    @property
    def n_contaminated(self):
        # round half up; Python's round() would send 0.5 to the even neighbour
        return int(np.floor(self.c * self.p + 0.5))

    def outlier_indices(self, kind):
        base = self.n - 3 * N_PER_TYPE + OUTLIER_TYPES.index(kind) * N_PER_TYPE
        return np.arange(base, base + N_PER_TYPE)

    @property
    def typical_indices(self):
        return np.arange(self.n - 3 * N_PER_TYPE)


def _stream(seed, stream):
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class JointRefs:
    """Reference observation ``l_ij`` used by each joint outlier on each dimension.

    Models 1/2 store a ``5 x p`` table; Models 3/4 store one mirror partner
    ``r_i`` per joint outlier (used on even dimensions, ``i`` itself on odd).
    """

    model: int
    joint: np.ndarray
    table: np.ndarray = None
    partners: np.ndarray = None

    def refs(self, j0, j1):
        """``(5, j1-j0)`` reference indices for 0-based dimensions ``j0..j1-1``."""
        if self.table is not None:
            return self.table[:, j0:j1]
        even = (np.arange(j0 + 1, j1 + 1) % 2 == 0)[None, :]
        return np.where(even, self.partners[:, None], self.joint[:, None])

    def to_dict(self):
        if self.table is not None:
            return {"kind": "random", "table": (self.table + 1).tolist()}
        return {"kind": "mirror",
                "partners": {str(i + 1): int(r) + 1 for i, r in zip(self.joint, self.partners)}}


def assign_joint_refs(model, alphas, outlier_ids, rng, p=None, typical=None):
    """Choose joint-outlier reference observations.

    Models 1/2 draw every ``l_ij`` uniformly from the typical observations.
    Models 3/4 first move the 3 smallest and 2 largest ``alpha`` values onto
    the joint outliers (swapping with their previous holders), then pair each
    joint outlier with the typical observation of mirrored ``alpha`` rank:
    the k-th smallest pairs with the k-th largest typical one and vice versa.

    Returns ``(alphas, JointRefs)``; `alphas` is a modified copy for Models 3/4.
    """
    alphas = np.array(alphas, dtype=np.float64)
    joint = np.asarray(outlier_ids, dtype=np.int64)
    n = alphas.size
    if typical is None:
        typical = np.arange(n - 3 * N_PER_TYPE)
    typical = np.asarray(typical)
    if model in (1, 2):
        if p is None:
            raise ValueError("p is required for Models 1 and 2")
        table = typical[rng.integers(0, typical.size, size=(joint.size, p))]
        return alphas, JointRefs(model, joint, table=table)
    n_low = (joint.size + 1) // 2
    order = np.argsort(alphas, kind="stable")
    targets = np.concatenate([order[:n_low], order[::-1][:joint.size - n_low]])
    for i, holder in zip(joint, targets.copy()):
        if i != holder:
            alphas[[i, holder]] = alphas[[holder, i]]
            targets[targets == i] = holder
    typ_order = typical[np.argsort(alphas[typical], kind="stable")]
    partners = np.empty(joint.size, dtype=np.int64)
    partners[:n_low] = typ_order[::-1][:n_low]
    partners[n_low:] = typ_order[:joint.size - n_low]
    return alphas, JointRefs(model, joint, partners=partners)


@dataclass
class GroundTruth:
    config: ModelConfig
    alphas: np.ndarray
    contaminated: dict  # observation (0-based) -> sorted 0-based dimensions
    joint_refs: JointRefs
    nominal: np.ndarray = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.nominal = np.array(["typical"] * cfg.n, dtype=object)
        for kind in OUTLIER_TYPES:
            self.nominal[cfg.outlier_indices(kind)] = kind

    @property
    def types(self):
        """Effective type per observation; outliers with no contaminated dimension are typical."""
        t = self.nominal.copy()
        for i, dims in self.contaminated.items():
            if len(dims) == 0:
                t[i] = "typical"
        return t

    def indices(self, kind):
        return np.flatnonzero(self.types == kind)

    def contamination_mask(self, kinds=OUTLIER_TYPES):
        """``(p, n)`` boolean mask of (dimension, observation) pairs contaminated by `kinds`."""
        if isinstance(kinds, str):
            kinds = (kinds,)
        cfg = self.config
        mask = np.zeros((cfg.p, cfg.n), dtype=bool)
        for i, dims in self.contaminated.items():
            if self.nominal[i] in kinds:
                mask[dims, i] = True
        return mask

    def to_dict(self):
        cfg = self.config
        types = self.types
        return {
            "model": cfg.model, "n": cfg.n, "p": cfg.p, "N": cfg.N, "c": cfg.c, "seed": cfg.seed,
            "observations": [
                {"index": i + 1, "nominal": str(self.nominal[i]), "type": str(types[i]),
                 "contaminated_dims": (np.asarray(self.contaminated.get(i, [])) + 1).tolist()}
                for i in range(cfg.n)
            ],
            "alphas": self.alphas.tolist(),
            "joint_refs": self.joint_refs.to_dict(),
        }


def draw_truth(config):
    """Draw every per-dataset random quantity except the noise."""
    rng = _stream(config.seed, 0)
    alphas = rng.standard_normal(config.n)
    alphas, refs = assign_joint_refs(config.model, alphas, config.outlier_indices("joint"), rng,
                                     p=config.p, typical=config.typical_indices)
    k = config.n_contaminated
    contaminated = {}
    for kind in OUTLIER_TYPES:
        for i in config.outlier_indices(kind):
            contaminated[int(i)] = np.sort(rng.choice(config.p, size=k, replace=False))
    return GroundTruth(config, alphas, contaminated, refs)


class SyntheticSource:
    """Dataset source that generates dimensions on demand.

    Implements ``read_dimensions(start, stop)`` like an HDFD file, so the
    engine can stream a dataset that never touches disk.  Safe to call from
    several threads.
    """

    def __init__(self, config):
        self.config = config
        self.n, self.p, self.N = config.n, config.p, config.N
        self.grid = time_grid(config.N)
        self.truth = draw_truth(config)
        self._x0, self._x0s = reference_curves(config.model, self.truth.alphas, self.grid)
        self._chol_t = np.ascontiguousarray(gp_factor(self.grid).T)
        cfg = config
        self._rows = []
        for kind in OUTLIER_TYPES:
            for pos, i in enumerate(cfg.outlier_indices(kind)):
                mask = np.zeros(cfg.p, dtype=bool)
                mask[self.truth.contaminated[int(i)]] = True
                self._rows.append((kind, pos, int(i), mask))

    def noise(self, j0, j1):
        z = np.stack([_stream(self.config.seed, j + 1).standard_normal((self.n, self.N))
                      for j in range(j0, j1)])
        return z @ self._chol_t

    def signal(self, j0, j1):
        h = _coefficients(j0, j1, self.p, self.grid, self.config.alternating)[:, None, :]
        x = self._x0[None] * h
        refs = self.truth.joint_refs.refs(j0, j1)
        for kind, pos, i, mask in self._rows:
            on = np.flatnonzero(mask[j0:j1])
            if on.size == 0:
                continue
            if kind == "magnitude":
                x[on, i] = MAGNITUDE_SHIFT + self._x0[i] * h[on, 0]
            elif kind == "shape":
                x[on, i] = self._x0s[i] * h[on, 0]
            else:
                x[on, i] = self._x0[refs[pos, on]] * h[on, 0]
        return x

    def read_dimensions(self, start, stop):
        if not 0 <= start <= stop <= self.p:
            raise IndexError(f"dimension range [{start}, {stop}) outside [0, {self.p})")
        return self.signal(start, stop) + self.noise(start, stop)


def generate(config, sink, chunk=64):
    """Write the dataset for `config` to `sink` in dimension order; return the labels.

    `sink` needs ``write_block(array)`` accepting ``(B, n, N)`` stacks, such as
    :class:`depthgram.formats.DatasetWriter`.
    """
    src = SyntheticSource(config)
    for j0 in range(0, config.p, chunk):
        block = src.read_dimensions(j0, min(j0 + chunk, config.p))
        if not np.isfinite(block).all():
            raise DataError("generator produced non-finite values")
        sink.write_block(block)
    return src.truth


def materialize(config):
    """Whole dataset as an ``(n, p, N)`` array plus labels (small configurations only)."""
    src = SyntheticSource(config)
    return src.read_dimensions(0, config.p).transpose(1, 0, 2).copy(), src.truth
