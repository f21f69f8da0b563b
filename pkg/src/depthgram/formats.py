"""Reading and writing HDFD datasets and analysis reports.

HDFD layout (all little-endian)::

    offset  size  field
    0       4     magic b"HDFD"
    4       2     format version (u16, currently 1)
    6       4     n, observations (u32)
    10      8     p, dimensions (u64)
    18      4     N, time points (u32)
    22      1     flags; bit 0 set when a time grid follows the header
    23      1     reserved, zero
    24      8N    optional time grid, f64
    ...           payload, f64, dimension-major: for j, for i, for k

Dimension ``j`` (0-based) starts at ``payload_offset + j * n * N * 8``, so
any range of dimensions can be read with a single positioned read.
"""

import csv
import json
import os
import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"HDFD"
VERSION = 1
HEADER = struct.Struct("<4sHIQIBB")
FLAG_GRID = 1
REPORT_SCHEMA = "depthgram-report/1"
CSV_COLUMNS = ["observation", "variant", "dg1", "dg2", "d_score", "flagged"]


def fmt_float(x):
    return format(float(x), ".17g")


def _nonfinite_error(block, j0, source):
    b, i, k = np.argwhere(~np.isfinite(block))[0]
    raise DataError(f"{source}: non-finite value {block[b, i, k]} at "
                    f"(i={i + 1}, j={j0 + b + 1}, k={k + 1})")


class ArraySource:
    """In-memory dataset with the same read interface as :class:`HdfdDataset`.

    `values` has shape ``(n, p, N)``: observation, dimension, time.
    """

    def __init__(self, values, grid=None):
        x = np.asarray(values, dtype=np.float64)
        if x.ndim != 3:
            raise DataError(f"expected an n x p x N array, got shape {x.shape}")
        self._x = x
        self.n, self.p, self.N = x.shape
        self.grid = None if grid is None else np.asarray(grid, dtype=np.float64)

    def read_dimensions(self, start, stop):
        block = np.ascontiguousarray(self._x[:, start:stop, :].transpose(1, 0, 2))
        if not np.isfinite(block).all():
            _nonfinite_error(block, start, "array")
        return block


class HdfdDataset:
    """Read handle on an HDFD file.

    ``read_dimensions`` uses positioned reads and may be called from several
    threads at once; ``next_dimension`` is a sequential cursor.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fd = os.open(self.path, os.O_RDONLY)
        try:
            self._read_header()
        except BaseException:
            os.close(self._fd)
            self._fd = None
            raise
        self._cursor = 0

    def _read_header(self):
        raw = os.pread(self._fd, HEADER.size, 0)
        if len(raw) < HEADER.size:
            raise DataError(f"{self.path}: file too short for an HDFD header "
                            f"({len(raw)} of {HEADER.size} bytes)")
        magic, version, n, p, N, flags, _ = HEADER.unpack(raw)
        if magic != MAGIC:
            raise DataError(f"{self.path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise DataError(f"{self.path}: unsupported format version {version}")
        self.n, self.p, self.N = n, p, N
        offset = HEADER.size
        self.grid = None
        if flags & FLAG_GRID:
            raw = os.pread(self._fd, 8 * N, offset)
            if len(raw) < 8 * N:
                raise DataError(f"{self.path}: truncated time grid")
            self.grid = np.frombuffer(raw, dtype="<f8").copy()
            offset += 8 * N
        self.payload_offset = offset
        expected = n * p * N * 8
        actual = os.fstat(self._fd).st_size - offset
        if actual != expected:
            kind = "truncated payload" if actual < expected else "trailing bytes after payload"
            raise DataError(f"{self.path}: {kind}: expected {expected} bytes, found {actual}")

    def read_dimensions(self, start, stop):
        if not 0 <= start <= stop <= self.p:
            raise IndexError(f"dimension range [{start}, {stop}) outside [0, {self.p})")
        stride = self.n * self.N * 8
        want = (stop - start) * stride
        offset = self.payload_offset + start * stride
        raw = os.pread(self._fd, want, offset)
        if len(raw) != want:
            raise DataError(f"{self.path}: short read at byte offset {offset + len(raw)}")
        block = np.frombuffer(raw, dtype="<f8").reshape(stop - start, self.n, self.N)
        if not np.isfinite(block).all():
            _nonfinite_error(block, start, self.path)
        return block.astype(np.float64, copy=True)

    def next_dimension(self):
        """Return the next ``n x N`` block, or None after the last dimension."""
        if self._cursor >= self.p:
            return None
        block = self.read_dimensions(self._cursor, self._cursor + 1)[0]
        self._cursor += 1
        return block

    def __iter__(self):
        for j in range(self.p):
            yield self.read_dimensions(j, j + 1)[0]

    def close(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def open_dataset(path):
    return HdfdDataset(path)


def next_dimension(ds):
    return ds.next_dimension()


class DatasetWriter:
    """Sequential HDFD writer; blocks must arrive in dimension order."""

    def __init__(self, path, n, p, N, grid=None):
        if n < 1 or p < 1 or N < 1:
            raise DataError(f"invalid shape n={n}, p={p}, N={N}")
        self.path = os.fspath(path)
        self.n, self.p, self.N = n, p, N
        self.written = 0
        flags = 0 if grid is None else FLAG_GRID
        self._fh = open(self.path, "wb")
        self._fh.write(HEADER.pack(MAGIC, VERSION, n, p, N, flags, 0))
        if grid is not None:
            g = np.asarray(grid, dtype="<f8")
            if g.shape != (N,):
                raise DataError(f"time grid has shape {g.shape}, expected ({N},)")
            self._fh.write(g.tobytes())

    def write_block(self, block):
        """Write one ``n x N`` block, or a ``(B, n, N)`` stack of consecutive ones."""
        b = np.asarray(block, dtype=np.float64)
        if b.ndim == 2:
            b = b[None]
        if b.shape[1:] != (self.n, self.N):
            raise DataError(f"block of shape {b.shape[1:]} does not match n x N = "
                            f"{self.n} x {self.N}")
        if self.written + b.shape[0] > self.p:
            raise DataError(f"more than p={self.p} dimensions written")
        if not np.isfinite(b).all():
            _nonfinite_error(b, self.written, self.path)
        self._fh.write(b.astype("<f8").tobytes())
        self.written += b.shape[0]

    def close(self):
        if self._fh is None:
            return
        self._fh.close()
        self._fh = None
        if self.written != self.p:
            raise DataError(f"{self.path}: {self.written} of {self.p} dimensions written")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
            self._fh = None


def write_dataset(path, blocks, n, p, N, grid=None):
    """Write `blocks` (an iterable of ``n x N`` arrays, one per dimension)."""
    with DatasetWriter(path, n, p, N, grid) as w:
        for block in blocks:
            w.write_block(block)
    return path


_INDEX_RE = re.compile(r"(\d+)(?=\D*$)")


def _read_csv_matrix(path, delimiter, skip_header):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for r, row in enumerate(reader, start=1):
            if skip_header and r == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell.strip()))
                except ValueError:
                    raise DataError(f"{path}: unparseable value {cell!r} at row {r}, "
                                    f"column {c}") from None
            if rows and len(vals) != len(rows[0]):
                raise DataError(f"{path}: ragged rows, row {r} has {len(vals)} "
                                f"columns, expected {len(rows[0])}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def import_csv(directory, out_path, delimiter=",", skip_header=False, pattern="*.csv"):
    """Convert a directory of per-dimension CSV files into an HDFD file.

    Each file holds one dimension as ``n`` rows by ``N`` columns.  Files are
    ordered by the last run of digits in the file name (``dim_0007.csv``).
    """
    import fnmatch

    names = sorted(f for f in os.listdir(directory) if fnmatch.fnmatch(f, pattern))
    if not names:
        raise DataError(f"{directory}: no files matching {pattern!r}")
    indexed = []
    for name in names:
        m = _INDEX_RE.search(name)
        if m is None:
            raise DataError(f"{name}: file name carries no dimension index")
        indexed.append((int(m.group(1)), name))
    indexed.sort()
    dup = [i for (i, _), (k, _) in zip(indexed, indexed[1:]) if i == k]
    if dup:
        raise DataError(f"{directory}: duplicate dimension index {dup[0]}")
    first = _read_csv_matrix(os.path.join(directory, indexed[0][1]), delimiter, skip_header)
    n, N = first.shape
    with DatasetWriter(out_path, n, len(indexed), N) as w:
        w.write_block(first)
        for _, name in indexed[1:]:
            path = os.path.join(directory, name)
            x = _read_csv_matrix(path, delimiter, skip_header)
            if x.shape != (n, N):
                raise DataError(f"{path}: shape {x.shape[0]} x {x.shape[1]} differs from "
                                f"{n} x {N} in {indexed[0][1]}")
            w.write_block(x)
    return open_dataset(out_path)


def write_report(report, path):
    """Write an AnalysisReport as UTF-8 JSON."""
    doc = report.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise DataError(f"{path}: unknown report schema {doc.get('schema')!r}")
    return doc


def write_depthgram_csv(depthgrams, path):
    """Write DepthGram points, one row per observation and variant.

    `depthgrams` is a single DepthGram or an iterable of them.
    """
    if hasattr(depthgrams, "variant"):
        depthgrams = [depthgrams]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for dg in depthgrams:
            for i in range(dg.n):
                w.writerow([i + 1, dg.variant, fmt_float(dg.dg1[i]), fmt_float(dg.dg2[i]),
                            fmt_float(dg.d_scores[i]), int(bool(dg.flags[i]))])
    return path


@dataclass
class PointRow:
    observation: int
    variant: str
    dg1: float
    dg2: float
    d_score: float
    flagged: bool


def read_depthgram_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(CSV_COLUMNS)}, got {header}")
        for r, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise DataError(f"{path}: row {r} has {len(row)} fields")
            try:
                rows.append(PointRow(int(row[0]), row[1], float(row[2]), float(row[3]),
                                     float(row[4]), row[5] == "1"))
            except ValueError as exc:
                raise DataError(f"{path}: row {r}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no DepthGram points")
    return rows


def write_marginal_csv(flags, path):
    """Long-format marginal flags: ``observation,dimension,kind`` (1-based)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["observation", "dimension", "kind"])
        for kind, mat in (("magnitude", flags.magnitude), ("shape", flags.shape)):
            for i, j in np.argwhere(mat.T).tolist():
                w.writerow([i + 1, j + 1, kind])
    return path
