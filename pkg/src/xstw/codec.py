"""Encoder/decoder core: precincts, bitplane truncation, rate allocation,
and the bitstream container that embeds the weight table in its header.

Payload layout per precinct: a 4-bit quantization Q and 5-bit refinement R,
then for every component and band (layout order) the coefficient groups of
four.  Each group carries a significance flag; significant groups (bitplane
count above the truncation position) add a 4-bit bitplane count, the
retained magnitude bits of each coefficient, and one sign bit per nonzero
retained magnitude.  Bits pack MSB-first within bytes; header integers are
little-endian.
"""

from __future__ import annotations

import dataclasses
import struct

import numpy as np

from xstw.bitio import BitReader, BitWriter, fields_to_bits
from xstw.dwt import (
    MIN_HEIGHT,
    MIN_WIDTH,
    NUM_BANDS,
    SubbandSet,
    forward_dwt,
    inverse_dwt,
    layout_for,
)
from xstw.pixel_io import RasterImage, rgb_to_ycbcr_reversible
from xstw.weights import NUM_ENTRIES, WeightTable

MAGIC = b"XSTW"
VERSION = 1
PRECINCT_LINES = 4
MAX_Q = 15
MAX_R = 30
MAX_T = 15

_HEADER_FMT = "<4sBHHBBH"
_TABLE_BYTES = (NUM_ENTRIES * 12 + 7) // 8  # 30 x (gain u4, priority u8)
HEADER_BYTES = struct.calcsize(_HEADER_FMT) + _TABLE_BYTES


class BudgetError(ValueError):
    """Raised when a bit budget cannot fit even the all-truncated payload."""


class BitstreamError(ValueError):
    """Raised when a bitstream is malformed."""


@dataclasses.dataclass(frozen=True)
class PrecinctQuant:
    q: int
    r: int

    def __post_init__(self):
        if not 0 <= self.q <= MAX_Q:
            raise ValueError(f"Q {self.q} out of [0, {MAX_Q}]")
        if not 0 <= self.r <= MAX_R:
            raise ValueError(f"R {self.r} out of [0, {MAX_R}]")


@dataclasses.dataclass(frozen=True)
class Precinct:
    """Coefficient slices of all bands/components for 4 image lines."""

    precinct_id: int
    line_range: tuple[int, int]
    bands: list[list[np.ndarray]]  # [component][band_id] -> 2D slice


@dataclasses.dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    components: int
    precinct_height: int
    target_bpp_fixed: int  # unsigned 8.8 fixed point
    table: WeightTable
    payload: bytes
    payload_bits: int

    @property
    def target_bpp(self) -> float:
        return self.target_bpp_fixed / 256.0

    def tobytes(self) -> bytes:
        head = struct.pack(
            _HEADER_FMT,
            MAGIC,
            VERSION,
            self.width,
            self.height,
            self.components,
            self.precinct_height,
            self.target_bpp_fixed,
        )
        w = BitWriter()
        for g, p in zip(self.table.gains, self.table.priorities):
            w.write(int(g), 4)
            w.write(int(p), 8)
        return head + w.getvalue() + self.payload

    @classmethod
    def frombytes(cls, data: bytes) -> "Bitstream":
        fixed = struct.calcsize(_HEADER_FMT)
        if len(data) < fixed + _TABLE_BYTES:
            raise BitstreamError("truncated stream: header incomplete")
        magic, version, width, height, components, plines, bpp_fixed = struct.unpack(
            _HEADER_FMT, data[:fixed]
        )
        if magic != MAGIC:
            raise BitstreamError("bad magic")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        if components not in (1, 3):
            raise BitstreamError(f"bad component count {components}")
        if plines != PRECINCT_LINES:
            raise BitstreamError(f"bad precinct height {plines}")
        if width == 0 or height == 0:
            raise BitstreamError("bad dimensions")
        r = BitReader(data[fixed : fixed + _TABLE_BYTES])
        gains, priorities = [], []
        for _ in range(NUM_ENTRIES):
            gains.append(r.read(4))
            priorities.append(r.read(8))
        try:
            table = WeightTable(gains=np.array(gains), priorities=np.array(priorities))
        except ValueError as exc:
            raise BitstreamError(f"bad weight table: {exc}") from None
        payload = data[fixed + _TABLE_BYTES :]
        return cls(
            width=width,
            height=height,
            components=components,
            precinct_height=plines,
            target_bpp_fixed=bpp_fixed,
            table=table,
            payload=payload,
            payload_bits=len(payload) * 8,
        )


def decode_header(data: bytes) -> Bitstream:
    """Parse the header without decoding the payload."""
    return Bitstream.frombytes(data)


def truncation_position(q_p: int, g_b: int, p_b: int, r_p: int) -> int:
    """Discarded LSB count for a band: clamp(Q - G - r, 0, 15).

    The refinement bit r is 1 for bands whose priority rank is below the
    precinct threshold, granting them one extra retained bitplane.
    """
    r = 1 if p_b < r_p else 0
    t = q_p - g_b - r
    return 0 if t < 0 else (MAX_T if t > MAX_T else t)


def quantize_band(coeffs: np.ndarray, t: int) -> np.ndarray:
    """Drop the t least significant magnitude bits, keeping signs."""
    mags = np.abs(coeffs) >> t
    return np.where(coeffs < 0, -mags, mags)


def dequantize_band(truncated: np.ndarray, t: int) -> np.ndarray:
    """Reconstruct magnitudes at the midpoint of the truncation interval."""
    mags = np.abs(truncated)
    if t > 0:
        mags = np.where(mags > 0, (mags << t) + (1 << (t - 1)), 0)
    return np.where(truncated < 0, -mags, mags)


def _bit_lengths(mags: np.ndarray) -> np.ndarray:
    # frexp exponents equal bit lengths exactly for integer magnitudes
    _, exps = np.frexp(mags.astype(np.float64))
    return exps.astype(np.int64)


def _suffix_gt(counts: np.ndarray) -> np.ndarray:
    """From per-value counts (.., 17) to sums over values > t for t in 0..15."""
    s = np.cumsum(counts[:, ::-1], axis=1)[:, ::-1]
    return s[:, 1 : MAX_T + 2]


class _BandPlan:
    """One band of one component, vectorized over all its precinct slices.

    Groups of four consecutive coefficients are formed inside each precinct
    slice; only the last group of a slice can be short.  ``cost[p, t]`` is
    the exact payload bit count of precinct p at truncation t.
    """

    __slots__ = ("n_precincts", "n_groups", "group_m", "mag4", "neg4", "valid", "cost")

    def __init__(self, coeffs: np.ndarray, n_precincts: int):
        flat = coeffs.reshape(n_precincts, -1).astype(np.int64)
        n, length = flat.shape
        n_groups = (length + 3) // 4
        self.n_precincts = n
        self.n_groups = n_groups

        mag4 = np.zeros((n, n_groups * 4), dtype=np.int64)
        mag4[:, :length] = np.abs(flat)
        neg4 = np.zeros((n, n_groups * 4), dtype=np.int64)
        neg4[:, :length] = flat < 0
        valid = np.zeros(n_groups * 4, dtype=bool)
        valid[:length] = True
        self.mag4 = mag4.reshape(n, n_groups, 4)
        self.neg4 = neg4.reshape(n, n_groups, 4)
        self.valid = valid.reshape(n_groups, 4)
        self.group_m = _bit_lengths(self.mag4.max(axis=2))

        # data bits at truncation t: sum over significant groups (M > t) of
        # 4 + (M - t) * group_size, via histograms over M
        sizes = self.valid.sum(axis=1)
        rows = np.arange(n)[:, None]
        idx = (rows * 17 + self.group_m).ravel()
        minlength = n * 17
        cnt_groups = np.bincount(idx, minlength=minlength).reshape(n, 17)
        cnt_size = np.bincount(
            idx, weights=np.broadcast_to(sizes, (n, n_groups)).ravel().astype(np.float64),
            minlength=minlength,
        ).reshape(n, 17)
        cnt_size_m = np.bincount(
            idx, weights=(sizes[None, :] * self.group_m).ravel().astype(np.float64),
            minlength=minlength,
        ).reshape(n, 17)
        s_groups = _suffix_gt(cnt_groups)
        s_size = _suffix_gt(cnt_size)
        s_size_m = _suffix_gt(cnt_size_m)
        ts = np.arange(MAX_T + 1)
        data = 4 * s_groups + s_size_m - ts[None, :] * s_size

        # one sign bit per coefficient with magnitude >= 2^t
        bl = _bit_lengths(mag4)
        idx_bl = (rows * 17 + bl).ravel()
        cnt_bl = np.bincount(idx_bl, minlength=minlength).reshape(n, 17)
        signs = _suffix_gt(cnt_bl)

        self.cost = (n_groups + data + signs).astype(np.int64)

    def fields(self, t_per_precinct: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(values, widths) matrices, shape (precincts, groups, 10)."""
        t = np.asarray(t_per_precinct, dtype=np.int64)[:, None]
        sig = self.group_m > t
        data_bits = np.where(sig, self.group_m - t, 0)
        q4 = self.mag4 >> t[:, :, None]
        n, n_groups = self.group_m.shape
        values = np.empty((n, n_groups, 10), dtype=np.int64)
        widths = np.empty((n, n_groups, 10), dtype=np.int64)
        values[:, :, 0] = sig
        widths[:, :, 0] = 1
        values[:, :, 1] = self.group_m
        widths[:, :, 1] = np.where(sig, 4, 0)
        values[:, :, 2:6] = q4
        widths[:, :, 2:6] = data_bits[:, :, None] * self.valid[None, :, :]
        values[:, :, 6:10] = self.neg4
        widths[:, :, 6:10] = (q4 > 0) & self.valid[None, :, :]
        return values, widths


def build_precincts(subbands: list[SubbandSet]) -> list[Precinct]:
    """Split component subband sets into precincts of 4 image lines."""
    layout = subbands[0].layout
    n_precincts = layout.plane_height // PRECINCT_LINES
    precincts = []
    for p in range(n_precincts):
        per_comp = []
        for bands in subbands:
            slices = []
            for info in layout:
                rows = PRECINCT_LINES >> info.vert_level
                coeffs = bands[info.band_id]
                slices.append(coeffs[p * rows : (p + 1) * rows])
            per_comp.append(slices)
        precincts.append(
            Precinct(
                precinct_id=p,
                line_range=(p * PRECINCT_LINES, (p + 1) * PRECINCT_LINES),
                bands=per_comp,
            )
        )
    return precincts


def _entry_params(table: WeightTable, components: int):
    idx = np.arange(components * NUM_BANDS)
    return table.gains[idx], table.priorities[idx]


def _truncation_grid(gains: np.ndarray, priorities: np.ndarray) -> np.ndarray:
    """T for every (Q, R, entry), shape (16, 31, entries)."""
    qs = np.arange(MAX_Q + 1)[:, None, None]
    rs = np.arange(MAX_R + 1)[None, :, None]
    refined = (priorities[None, None, :] < rs).astype(np.int64)
    t = qs - gains[None, None, :] - refined
    return np.clip(t, 0, MAX_T)


def _cost_grids(plans: list[_BandPlan], t_grid: np.ndarray) -> np.ndarray:
    """Payload cost of every (precinct, Q, R), including the 9 header bits."""
    cost_stack = np.stack([plan.cost for plan in plans], axis=1)  # (P, E, 16)
    gathered = np.take_along_axis(
        cost_stack[:, None, None, :, :],  # (P, 1, 1, E, 16)
        t_grid[None, :, :, :, None],  # (1, 16, 31, E, 1)
        axis=4,
    )
    return gathered[..., 0].sum(axis=3) + 9


def _precinct_plans(precinct: Precinct) -> list[_BandPlan]:
    return [_BandPlan(coeffs, 1) for comp in precinct.bands for coeffs in comp]


def precinct_cost(precinct: Precinct, quant: PrecinctQuant, table: WeightTable) -> int:
    """Exact payload bit count of code_precinct, without materializing it."""
    gains, priorities = _entry_params(table, len(precinct.bands))
    total = 9
    for i, plan in enumerate(_precinct_plans(precinct)):
        t = truncation_position(quant.q, int(gains[i]), int(priorities[i]), quant.r)
        total += int(plan.cost[0, t])
    return total


def code_precinct(
    precinct: Precinct, quant: PrecinctQuant, table: WeightTable
) -> np.ndarray:
    """Payload bits (one uint8 per bit) for a precinct at the given (Q, R)."""
    gains, priorities = _entry_params(table, len(precinct.bands))
    all_values = [np.array([quant.q, quant.r], dtype=np.int64)]
    all_widths = [np.array([4, 5], dtype=np.int64)]
    for i, plan in enumerate(_precinct_plans(precinct)):
        t = truncation_position(quant.q, int(gains[i]), int(priorities[i]), quant.r)
        values, widths = plan.fields(np.array([t]))
        all_values.append(values.ravel())
        all_widths.append(widths.ravel())
    return fields_to_bits(np.concatenate(all_values), np.concatenate(all_widths))


def _allocate(costs: np.ndarray, budget: int) -> tuple[int, int, int]:
    """Smallest Q with a fitting R, then the R spending the most bits."""
    for q in range(MAX_Q + 1):
        row = costs[q]
        fits = row <= budget
        if fits.any():
            best_cost = row[fits].max()
            r = int(np.nonzero(fits & (row == best_cost))[0].max())
            return q, r, int(best_cost)
    raise BudgetError("budget infeasible")


def allocate_rate(
    precinct: Precinct, table: WeightTable, budget_bits: int
) -> PrecinctQuant:
    """Pick the (Q, R) retaining the most information within the budget."""
    gains, priorities = _entry_params(table, len(precinct.bands))
    t_grid = _truncation_grid(gains, priorities)
    costs = _cost_grids(_precinct_plans(precinct), t_grid)[0]
    q, r, _ = _allocate(costs, budget_bits)
    return PrecinctQuant(q=q, r=r)


def _pad_plane(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph = max(h + (-h % MIN_HEIGHT), MIN_HEIGHT) - h
    pw = max(w + (-w % MIN_WIDTH), MIN_WIDTH) - w
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def _image_planes(img: RasterImage) -> list[np.ndarray]:
    if img.channels == 1:
        return [img.samples.astype(np.int32)]
    planes = rgb_to_ycbcr_reversible(img)
    return [planes.y, planes.cb, planes.cr]


def coded_samples(width: int, height: int, components: int) -> int:
    """Sample count of the padded planes actually coded; the bpp denominator."""
    padded_w = max(width + (-width % MIN_WIDTH), MIN_WIDTH)
    padded_h = max(height + (-height % MIN_HEIGHT), MIN_HEIGHT)
    return padded_w * padded_h * components


def encode(img: RasterImage, table: WeightTable, target_bpp: float) -> Bitstream:
    """Encode under a bit budget of target_bpp bits per coded sample.

    The plane is padded to the transform alignment, so the budget denominator
    is the padded sample count (identical to width x height x components for
    aligned sizes).  The budget is split evenly over precincts with unspent
    bits rolling forward; header bits are not counted against it.
    """
    if not 0 < target_bpp < 256:
        raise ValueError(f"target_bpp {target_bpp} out of (0, 256)")
    planes = [_pad_plane(p) for p in _image_planes(img)]
    subbands = [forward_dwt(p) for p in planes]
    layout = subbands[0].layout
    components = len(planes)
    n_precincts = layout.plane_height // PRECINCT_LINES

    plans = [
        _BandPlan(bands[info.band_id], n_precincts)
        for bands in subbands
        for info in layout
    ]
    peak_m = max(int(plan.group_m.max()) for plan in plans)
    if peak_m > MAX_T:
        raise ValueError("coefficient exceeds 16-bit sign-magnitude range")

    gains, priorities = _entry_params(table, components)
    t_grid = _truncation_grid(gains, priorities)
    costs = _cost_grids(plans, t_grid)  # (P, 16, 31)
    total_budget = int(target_bpp * coded_samples(img.width, img.height, components))

    qs = np.empty(n_precincts, dtype=np.int64)
    rs = np.empty(n_precincts, dtype=np.int64)
    bits_used = 0
    for p in range(n_precincts):
        share_end = total_budget * (p + 1) // n_precincts
        q, r, cost = _allocate(costs[p], share_end - bits_used)
        qs[p], rs[p] = q, r
        bits_used += cost

    t_entries = t_grid[qs, rs]  # (P, E)
    band_fields = [plan.fields(t_entries[:, e]) for e, plan in enumerate(plans)]

    writer = BitWriter()
    for p in range(n_precincts):
        writer.write(int(qs[p]), 4)
        writer.write(int(rs[p]), 5)
        for values, widths in band_fields:
            writer.write_fields(values[p].ravel(), widths[p].ravel())

    assert writer.bit_count == bits_used
    return Bitstream(
        width=img.width,
        height=img.height,
        components=components,
        precinct_height=PRECINCT_LINES,
        target_bpp_fixed=int(round(target_bpp * 256)),
        table=table,
        payload=writer.getvalue(),
        payload_bits=bits_used,
    )


def _read_band(reader: BitReader, n_coeffs: int, t: int) -> np.ndarray:
    out = np.zeros(n_coeffs, dtype=np.int32)
    half = (1 << (t - 1)) if t else 0
    i = 0
    while i < n_coeffs:
        size = min(4, n_coeffs - i)
        if reader.read_bit():
            m = reader.read(4)
            w = m - t
            if w <= 0:
                raise BitstreamError("invalid bitplane count")
            qs = [reader.read(w) for _ in range(size)]
            for j, q in enumerate(qs):
                if q:
                    mag = (q << t) + half
                    out[i + j] = -mag if reader.read_bit() else mag
        i += size
    return out


def decode(bs: Bitstream | bytes) -> RasterImage:
    """Reconstruct the image from a bitstream; exact when nothing was truncated."""
    if isinstance(bs, (bytes, bytearray)):
        bs = Bitstream.frombytes(bytes(bs))
    padded_h = max(bs.height + (-bs.height % MIN_HEIGHT), MIN_HEIGHT)
    padded_w = max(bs.width + (-bs.width % MIN_WIDTH), MIN_WIDTH)
    layout = layout_for(padded_w, padded_h)
    gains, priorities = _entry_params(bs.table, bs.components)

    band_arrays = [
        [np.zeros((info.height, info.width), dtype=np.int32) for info in layout]
        for _ in range(bs.components)
    ]
    reader = BitReader(bs.payload)
    n_precincts = padded_h // PRECINCT_LINES
    try:
        for p in range(n_precincts):
            q_p = reader.read(4)
            r_p = reader.read(5)
            if r_p > MAX_R:
                raise BitstreamError(f"refinement {r_p} out of range")
            for c in range(bs.components):
                for info in layout:
                    i = c * NUM_BANDS + info.band_id
                    t = truncation_position(q_p, int(gains[i]), int(priorities[i]), r_p)
                    rows = PRECINCT_LINES >> info.vert_level
                    flat = _read_band(reader, rows * info.width, t)
                    band_arrays[c][info.band_id][p * rows : (p + 1) * rows] = (
                        flat.reshape(rows, info.width)
                    )
    except EOFError:
        raise BitstreamError("truncated stream") from None

    planes = [
        np.ascontiguousarray(inverse_dwt(SubbandSet(layout, arrays))[: bs.height, : bs.width])
        for arrays in band_arrays
    ]
    if bs.components == 1:
        return RasterImage(np.clip(planes[0], 0, 255).astype(np.uint8))
    y, cb, cr = planes
    g = y - ((cb + cr) >> 2)
    rgb = np.stack([cr + g, g, cb + g], axis=-1)
    return RasterImage(np.ascontiguousarray(np.clip(rgb, 0, 255)).astype(np.uint8))
