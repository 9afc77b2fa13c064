"""Behavioral model of a reconfigurable binary CAM.

The array is rows x 1024 bits, organized as four 256-bit chunks per row. The
active word length selects a contiguous prefix of chunks (256, 512, 768, or
1024 bits); searches compare a query against that prefix of every valid row
at once and report per-row Hamming distances. One search is one event no
matter how many rows are stored, which is the whole point of the device.

The model is purely functional about the math and purely side-effecting
about accounting: every write, reconfigure, and search appends an event to
the attached :class:`~camdot.costmodel.CostTrace`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costmodel import CostTrace

__all__ = ["CamConfig", "CamError", "CamState", "ROW_CHOICES", "WORD_CHOICES"]

ROW_CHOICES = (64, 128, 256, 512)
WORD_CHOICES = (256, 512, 768, 1024)
CHUNK_BITS = 256
MAX_CHUNKS = 4


class CamError(ValueError):
    """Geometry or state violations: bad row counts, word lengths, indices."""


def _as_bit_array(bits, ndim: int) -> np.ndarray:
    """Unwrap HashBits, coerce to uint8, reject non-binary or empty input."""
    arr = np.asarray(getattr(bits, "bits", bits), dtype=np.uint8)
    if arr.ndim != ndim or arr.size == 0:
        raise CamError(f"expected a non-empty {ndim}-d bit array")
    if arr.shape[-1] > CHUNK_BITS * MAX_CHUNKS:
        raise CamError(
            f"hash length {arr.shape[-1]} exceeds the {CHUNK_BITS * MAX_CHUNKS}-bit row"
        )
    if arr.max() > 1:
        raise CamError("bit arrays may only contain 0 and 1")
    return arr


@dataclass(frozen=True)
class CamConfig:
    """Physical shape of one CAM array.

    distance_buckets optionally quantizes reported distances downward to
    multiples of the bucket width, mimicking a sense amplifier that cannot
    resolve single-bit differences. Default None reports exact integers.
    """

    rows: int
    sense_window_cycles: int = 1
    distance_buckets: int | None = None

    def __post_init__(self) -> None:
        if self.rows not in ROW_CHOICES:
            raise CamError(f"rows must be one of {ROW_CHOICES}, got {self.rows}")
        if self.sense_window_cycles < 1:
            raise CamError("sense_window_cycles must be positive")
        if self.distance_buckets is not None and self.distance_buckets < 1:
            raise CamError("distance_buckets must be positive when set")


class CamState:
    """Storage plus occupancy bookkeeping for one array.

    Searches against an unmodified state are read-only with respect to the
    stored bits and safe to issue from multiple threads; the trace append is
    atomic under the GIL, though event order then follows thread timing.
    """

    def __init__(self, config: CamConfig, trace: CostTrace | None = None) -> None:
        self.config = config
        self.trace = trace if trace is not None else CostTrace()
        self.word_bits = CHUNK_BITS
        self.storage = np.zeros((config.rows, CHUNK_BITS * MAX_CHUNKS), dtype=np.uint8)
        self.valid = np.zeros(config.rows, dtype=bool)

    # -- configuration ----------------------------------------------------

    def set_word_length(self, word_bits: int) -> None:
        """Select the active chunk prefix. Stored rows are not disturbed."""
        if word_bits not in WORD_CHOICES:
            raise CamError(f"word_bits must be one of {WORD_CHOICES}, got {word_bits}")
        self.word_bits = word_bits
        self.trace.emit(
            "reconfigure", rows=self.config.rows, word_bits=word_bits,
        )

    def clear(self) -> None:
        self.valid[:] = False

    @property
    def stored_count(self) -> int:
        return int(np.count_nonzero(self.valid))

    # -- writes -----------------------------------------------------------

    def write_row(self, row: int, bits: np.ndarray) -> None:
        """Store a hash in one row, replacing the previous contents.

        Any length up to the full row works: the hash lands in the prefix
        positions and the remainder is zero-filled, independent of the
        active word length (which only governs searches).
        """
        if not 0 <= row < self.config.rows:
            raise CamError(f"row {row} out of range for {self.config.rows}-row array")
        b = _as_bit_array(bits, ndim=1)
        self.storage[row, : b.size] = b
        self.storage[row, b.size:] = 0
        self.valid[row] = True
        self.trace.emit(
            "write", rows=self.config.rows, word_bits=self.word_bits,
        )

    def write_rows(self, bits_matrix: np.ndarray, start: int = 0) -> None:
        """Bulk store: row ``start + i`` gets ``bits_matrix[i]``. One event
        with count = number of rows, identical totals to row-by-row writes."""
        m = _as_bit_array(bits_matrix, ndim=2)
        if not 0 <= start <= self.config.rows - m.shape[0]:
            raise CamError("row range out of bounds")
        width = m.shape[1]
        self.storage[start : start + m.shape[0], :width] = m
        self.storage[start : start + m.shape[0], width:] = 0
        self.valid[start : start + m.shape[0]] = True
        self.trace.emit(
            "write", count=m.shape[0], rows=self.config.rows,
            word_bits=self.word_bits,
        )

    # -- searches ---------------------------------------------------------

    def _quantize(self, distances: np.ndarray) -> np.ndarray:
        b = self.config.distance_buckets
        if b is None:
            return distances
        return (distances // b) * b

    def search(self, bits: np.ndarray) -> list[tuple[int, int]]:
        """Hamming distance from the query to every valid row.

        Returns (row_index, distance) pairs in row order; invalid rows are
        omitted. Cost: one search event regardless of occupancy.
        """
        q = _as_bit_array(bits, ndim=1)
        if q.size != self.word_bits:
            raise CamError(
                f"query length {q.size} does not match active word {self.word_bits}"
            )
        rows = np.flatnonzero(self.valid)
        window = self.storage[rows, : self.word_bits]
        distances = self._quantize((window != q).sum(axis=1).astype(np.int64))
        self.trace.emit(
            "search", rows=self.config.rows, word_bits=self.word_bits,
            valid_rows=rows.size,
        )
        return [(int(r), int(d)) for r, d in zip(rows, distances)]

    def search_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch of searches: (valid row indices, distances[query, row]).

        Semantically identical to calling :meth:`search` once per query row;
        emits one grouped event with count = number of queries. Distances
        are computed through a +-1 float32 matmul: integer dot values up to
        1024 are exact in float32, so the result matches the bitwise path.
        """
        q = _as_bit_array(queries, ndim=2)
        if q.shape[1] != self.word_bits:
            raise CamError("queries must be (count, word_bits)")
        rows = np.flatnonzero(self.valid)
        window = self.storage[rows, : self.word_bits]
        q_signs = 1.0 - 2.0 * q.astype(np.float32)
        s_signs = 1.0 - 2.0 * window.astype(np.float32)
        agree = q_signs @ s_signs.T                      # in [-word, word]
        distances = ((self.word_bits - agree) * 0.5).astype(np.int64)
        distances = self._quantize(distances)
        self.trace.emit(
            "search", count=q.shape[0], rows=self.config.rows,
            word_bits=self.word_bits, valid_rows=rows.size,
        )
        return rows, distances
