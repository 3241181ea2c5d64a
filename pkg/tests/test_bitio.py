import numpy as np
import pytest

from xstw.bitio import BitReader, BitWriter, fields_to_bits


class TestFieldsToBits:
    def test_msb_first(self):
        bits = fields_to_bits(np.array([0b101]), np.array([3]))
        assert bits.tolist() == [1, 0, 1]

    def test_zero_width_fields_skipped(self):
        bits = fields_to_bits(np.array([7, 3, 7]), np.array([0, 2, 0]))
        assert bits.tolist() == [1, 1]

    def test_empty(self):
        assert fields_to_bits(np.array([]), np.array([])).size == 0


class TestWriterReader:
    def test_roundtrip_scalars(self):
        w = BitWriter()
        fields = [(0, 1), (5, 4), (30, 5), (0x1234, 16), (1, 1)]
        for v, n in fields:
            w.write(v, n)
        r = BitReader(w.getvalue())
        for v, n in fields:
            assert r.read(n) == v

    def test_golden_bytes(self):
        w = BitWriter()
        w.write(0b1010, 4)
        w.write(0b1111, 4)
        w.write(0b1, 1)
        assert w.getvalue() == bytes([0b10101111, 0b10000000])

    def test_bulk_fields_match_scalar_writes(self):
        rng = np.random.default_rng(3)
        widths = rng.integers(0, 16, 200)
        values = np.array([int(rng.integers(0, 1 << w)) if w else 0 for w in widths])
        a = BitWriter()
        a.write_fields(values, widths)
        b = BitWriter()
        for v, n in zip(values, widths):
            if n:
                b.write(int(v), int(n))
        assert a.getvalue() == b.getvalue()
        assert a.bit_count == int(widths.sum())

    def test_read_past_end_raises(self):
        r = BitReader(b"\xff")
        r.read(8)
        with pytest.raises(EOFError, match="truncated"):
            r.read(1)

    def test_value_out_of_range(self):
        w = BitWriter()
        with pytest.raises(ValueError, match="fit"):
            w.write(4, 2)

    def test_read_bit(self):
        r = BitReader(bytes([0b01100000]))
        assert [r.read_bit() for _ in range(3)] == [0, 1, 1]
