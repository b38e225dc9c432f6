"""Row streams: file ingestion, seeded shuffling and single-pass iteration.

A stream is the estimators' only view of the matrix. Rows are read in
fixed-size chunks so memory stays O(chunk * d) regardless of n, and a stream
refuses to be iterated again once its pass has finished.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolation, SinglePassError, StreamFormatError

MAGIC = b"EIGS1"
_HEADER = struct.Struct("<QQ")
_SCAN_ROWS = 4096


class _Stream:
    """Shared single-pass machinery; subclasses implement ``_read``."""

    d: int
    n = None

    def __init__(self):
        self.cursor = 0
        self._exhausted = False

    def _read(self, k):
        raise NotImplementedError

    @property
    def exhausted(self):
        return self._exhausted

    def _pull(self, k):
        if self._exhausted:
            return None
        rows = self._read(k)
        if rows.shape[0] == 0:
            self._exhausted = True
            return None
        self.cursor += rows.shape[0]
        return rows

    def next_row(self):
        """Next row under the stream order, or ``None`` at end of stream."""
        rows = self._pull(1)
        return None if rows is None else rows[0]

    def chunks(self, size=256):
        """Yield consecutive blocks of at most ``size`` rows."""
        if size < 1:
            raise ContractViolation("chunk size must be >= 1")
        if self._exhausted:
            raise SinglePassError("stream pass already completed")
        while True:
            rows = self._pull(size)
            if rows is None:
                return
            yield rows

    def __iter__(self):
        for rows in self.chunks(1):
            yield rows[0]


class RowStream(_Stream):
    """Stream over an in-memory (or memory-mapped) n x d matrix.

    When ``order_seed`` is given the rows come out in the uniformly random
    permutation drawn from that seed; only the permutation of indices is
    materialized, never a shuffled copy of the rows.
    """

    def __init__(self, source, order_seed=None):
        super().__init__()
        if not isinstance(source, np.memmap):
            source = np.asarray(source, dtype=np.float64)
        if source.ndim != 2:
            raise ContractViolation(f"stream source must be 2-d, got shape {source.shape}")
        self._source = source
        self.n, self.d = source.shape
        self.order_seed = order_seed
        if order_seed is None:
            self._order = None
        else:
            self._order = shuffle_order(self.n, order_seed)

    def _read(self, k):
        lo = self.cursor
        hi = min(self.n, lo + k)
        if self._order is None:
            block = self._source[lo:hi]
        else:
            block = self._source[self._order[lo:hi]]
        return np.array(block, dtype=np.float64)


class SubStream(_Stream):
    """A stream derived from a parent by a per-chunk transform.

    ``transform(rows)`` returns the rows to emit (possibly fewer, possibly
    rescaled). Order of survivors is preserved. Length is unknown up front.
    """

    def __init__(self, parent, transform, read_size=256):
        super().__init__()
        self.parent = parent
        self.d = parent.d
        self._transform = transform
        self._read_size = read_size
        self._buf = np.empty((0, parent.d))
        self._parent_done = False

    def _read(self, k):
        while self._buf.shape[0] < k and not self._parent_done:
            rows = self.parent._pull(self._read_size)
            if rows is None:
                self._parent_done = True
                break
            out = self._transform(rows)
            if out.shape[0]:
                self._buf = np.vstack([self._buf, out])
        rows, self._buf = self._buf[:k], self._buf[k:]
        return rows


def shuffle_order(n, seed):
    """Uniform permutation of range(n) from a seeded Fisher-Yates shuffle."""
    return np.random.default_rng(seed).permutation(n)


def filter_stream(stream, keep, read_size=256):
    """Substream of rows for which ``keep(rows)`` (a boolean mask) is true."""
    return SubStream(stream, lambda rows: rows[keep(rows)], read_size)


class StreamStats:
    """Running Frobenius mass, max squared row norm and row count."""

    def __init__(self):
        self.frob_sq = 0.0
        self.max_row_norm_sq = 0.0
        self.rows_seen = 0

    def update(self, rows):
        rows = np.atleast_2d(rows)
        norms_sq = np.einsum("ij,ij->i", rows, rows)
        self.update_norms(norms_sq)
        return norms_sq

    def update_norms(self, norms_sq):
        if norms_sq.shape[0] == 0:
            return
        self.frob_sq += float(np.sum(norms_sq))
        self.max_row_norm_sq = max(self.max_row_norm_sq, float(np.max(norms_sq)))
        self.rows_seen += int(norms_sq.shape[0])


# -- tee ---------------------------------------------------------------------


class _TeeHub:
    def __init__(self, stream, k, chunk):
        self.stream = stream
        self.k = k
        self.chunk = chunk
        self.current = None
        self.taken = set()
        self.eos = False
        self.peak_live_rows = 0
        self.physical_reads = 0

    def take(self, idx):
        if self.current is not None and idx not in self.taken:
            self.taken.add(idx)
            return self.current
        if self.current is not None and len(self.taken) < self.k:
            raise ContractViolation(
                f"tee consumer {idx} ran ahead: {self.k - len(self.taken)} consumer(s) "
                "have not received the current row"
            )
        if self.eos:
            return None
        # everyone has the current block; drop it before reading the next
        self.current = None
        rows = self.stream._pull(self.chunk)
        if rows is None:
            self.eos = True
            return None
        self.physical_reads += 1
        self.current = rows if self.chunk > 1 else rows[0]
        self.peak_live_rows = max(self.peak_live_rows, rows.shape[0])
        self.taken = {idx}
        return self.current


class TeeConsumer:
    """One logical consumer of a shared physical pass."""

    def __init__(self, hub, idx):
        self.hub = hub
        self.idx = idx

    def next(self):
        return self.hub.take(self.idx)

    def __iter__(self):
        while True:
            item = self.next()
            if item is None:
                return
            yield item


def tee(stream, k, chunk=1):
    """Split one pass into ``k`` lock-stepped consumers.

    Every row (or block of ``chunk`` rows) must reach all consumers before the
    next is read; a consumer trying to get further ahead raises.
    """
    if k < 1:
        raise ContractViolation("tee needs k >= 1")
    if stream.exhausted:
        raise SinglePassError("stream pass already completed")
    hub = _TeeHub(stream, k, chunk)
    return [TeeConsumer(hub, i) for i in range(k)]


# -- file formats ------------------------------------------------------------


def write_binary(path, A):
    A = np.ascontiguousarray(A, dtype="<f8")
    n, d = A.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(n, d))
        fh.write(A.tobytes())


def write_csv(path, A):
    A = np.asarray(A, dtype=np.float64)
    n, d = A.shape
    with open(path, "w") as fh:
        fh.write(f"{n},{d}\n")
        for row in A:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _check_finite(block, offset):
    bad = ~np.isfinite(block)
    if bad.any():
        row = offset + int(np.argwhere(bad)[0][0])
        raise StreamFormatError("non-finite entry", row=row)


def _load_binary(path):
    size = Path(path).stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + _HEADER.size)
    if len(head) < len(MAGIC) + _HEADER.size or head[: len(MAGIC)] != MAGIC:
        raise StreamFormatError("malformed EIGS1 header")
    n, d = _HEADER.unpack(head[len(MAGIC):])
    offset = len(MAGIC) + _HEADER.size
    expected = offset + 8 * n * d
    if size != expected:
        got_rows = (size - offset) // (8 * d) if d else 0
        raise StreamFormatError(
            f"file holds {size - offset} payload bytes, header declares n={n}, d={d}",
            row=int(got_rows),
        )
    if n == 0 or d == 0:
        raise StreamFormatError(f"empty matrix n={n}, d={d}")
    data = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=(n, d))
    for lo in range(0, n, _SCAN_ROWS):
        _check_finite(data[lo: lo + _SCAN_ROWS], lo)
    return data


def _load_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            n, d = (int(x) for x in header.split(","))
        except ValueError:
            raise StreamFormatError(f"malformed CSV header {header!r}") from None
        if n < 1 or d < 1:
            raise StreamFormatError(f"empty matrix n={n}, d={d}")
        A = np.empty((n, d))
        i = 0
        for line in fh:
            if not line.strip():
                continue
            if i >= n:
                raise StreamFormatError("more rows than the header declares", row=i)
            parts = line.strip().split(",")
            if len(parts) != d:
                raise StreamFormatError(f"expected {d} entries, found {len(parts)}", row=i)
            try:
                A[i] = [float(x) for x in parts]
            except ValueError:
                raise StreamFormatError("unparseable entry", row=i) from None
            _check_finite(A[i: i + 1], i)
            i += 1
    if i != n:
        raise StreamFormatError(f"header declares {n} rows, found {i}", row=i)
    return A


def load_matrix(path):
    """Read an EIGS1 binary or CSV instance (binary is memory-mapped)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
    if magic == MAGIC:
        return _load_binary(path)
    return _load_csv(path)


def open_stream(path, order_seed=None):
    return RowStream(load_matrix(path), order_seed=order_seed)
