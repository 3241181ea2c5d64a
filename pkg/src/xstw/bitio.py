"""Bit-level packing: MSB-first within each byte, fields written MSB-first."""

from __future__ import annotations

import numpy as np


def fields_to_bits(values: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Explode (value, width) fields into a 0/1 bit array, MSB-first.

    Zero-width fields are allowed and contribute nothing.
    """
    values = np.asarray(values, dtype=np.int64)
    widths = np.asarray(widths, dtype=np.int64)
    total = int(widths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.uint8)
    starts = np.cumsum(widths) - widths
    idx = np.repeat(np.arange(len(widths)), widths)
    pos_in_field = np.arange(total) - np.repeat(starts, widths)
    shift = np.repeat(widths, widths) - 1 - pos_in_field
    return ((values[idx] >> shift) & 1).astype(np.uint8)


class BitWriter:
    """Accumulates bit fields; bytes are emitted MSB-first, zero padded."""

    def __init__(self):
        self._chunks: list[tuple[np.ndarray, np.ndarray]] = []
        self._bit_count = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits and not 0 <= value < (1 << nbits):
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._chunks.append(
            (np.array([value], dtype=np.int64), np.array([nbits], dtype=np.int64))
        )
        self._bit_count += nbits

    def write_fields(self, values: np.ndarray, widths: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.int64)
        widths = np.asarray(widths, dtype=np.int64)
        self._chunks.append((values, widths))
        self._bit_count += int(widths.sum())

    @property
    def bit_count(self) -> int:
        return self._bit_count

    def getvalue(self) -> bytes:
        if not self._chunks:
            return b""
        values = np.concatenate([v for v, _ in self._chunks])
        widths = np.concatenate([w for _, w in self._chunks])
        bits = fields_to_bits(values, widths)
        return np.packbits(bits).tobytes()


class BitReader:
    """Reads MSB-first bit fields from bytes."""

    def __init__(self, data: bytes):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)).tolist()
        self._pos = 0

    @property
    def bits_left(self) -> int:
        return len(self._bits) - self._pos

    def read(self, nbits: int) -> int:
        pos = self._pos
        end = pos + nbits
        if end > len(self._bits):
            raise EOFError("truncated stream")
        acc = 0
        for b in self._bits[pos:end]:
            acc = (acc << 1) | b
        self._pos = end
        return acc

    def read_bit(self) -> int:
        pos = self._pos
        if pos >= len(self._bits):
            raise EOFError("truncated stream")
        self._pos = pos + 1
        return self._bits[pos]
