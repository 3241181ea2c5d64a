"""Asymmetric multilevel 5/3 wavelet transform (5 horizontal / 2 vertical levels).

Levels 1 and 2 decompose both directions; levels 3-5 run horizontally only on
the remaining low-pass, yielding the fixed 10-band layout below (deepest
level first):

    LL5,2  HL5,2  HL4,2  HL3,2  HL2,2  LH2,2  HH2,2  HL1,1  LH1,1  HH1,1

The first letter is the horizontal filter, the second the vertical filter.
All lifting arithmetic is integer and exactly reversible.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

HORIZ_LEVELS = 5
VERT_LEVELS = 2
MIN_WIDTH = 1 << HORIZ_LEVELS
MIN_HEIGHT = 1 << VERT_LEVELS

BAND_NAMES = (
    "LL5,2",
    "HL5,2",
    "HL4,2",
    "HL3,2",
    "HL2,2",
    "LH2,2",
    "HH2,2",
    "HL1,1",
    "LH1,1",
    "HH1,1",
)
NUM_BANDS = len(BAND_NAMES)

# (horiz_level, vert_level) per band, same order as BAND_NAMES
BAND_LEVELS = ((5, 2), (5, 2), (4, 2), (3, 2), (2, 2), (2, 2), (2, 2), (1, 1), (1, 1), (1, 1))


@dataclasses.dataclass(frozen=True)
class BandInfo:
    band_id: int
    name: str
    horiz_level: int
    vert_level: int
    width: int
    height: int

    @property
    def size(self) -> int:
        return self.width * self.height


@dataclasses.dataclass(frozen=True)
class SubbandLayout:
    """Band geometry for one plane size; bands partition the plane area."""

    plane_width: int
    plane_height: int
    bands: tuple[BandInfo, ...]

    def __iter__(self):
        return iter(self.bands)

    def __getitem__(self, band_id: int) -> BandInfo:
        return self.bands[band_id]


@dataclasses.dataclass
class SubbandSet:
    """Layout plus one signed-integer coefficient array per band."""

    layout: SubbandLayout
    coefficients: list[np.ndarray]

    def __getitem__(self, band_id: int) -> np.ndarray:
        return self.coefficients[band_id]


def _check_plane_dims(width: int, height: int) -> None:
    if width < MIN_WIDTH or height < MIN_HEIGHT:
        raise ValueError(
            f"plane {width}x{height} below minimum {MIN_WIDTH}x{MIN_HEIGHT}"
        )
    if width % MIN_WIDTH or height % MIN_HEIGHT:
        raise ValueError(
            f"plane {width}x{height} not a multiple of {MIN_WIDTH}x{MIN_HEIGHT}"
        )


def layout_for(width: int, height: int) -> SubbandLayout:
    """Band geometry for a plane of the given (already padded) size."""
    _check_plane_dims(width, height)
    bands = []
    for band_id, (name, (h, v)) in enumerate(zip(BAND_NAMES, BAND_LEVELS)):
        bands.append(
            BandInfo(
                band_id=band_id,
                name=name,
                horiz_level=h,
                vert_level=v,
                width=width >> h,
                height=height >> v,
            )
        )
    return SubbandLayout(plane_width=width, plane_height=height, bands=tuple(bands))


def _lift_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One 5/3 analysis step along the last axis (even length required)."""
    even = x[..., 0::2]
    odd = x[..., 1::2]
    even_next = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    d = odd - (even + even_next) // 2
    d_prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    s = even + (d_prev + d + 2) // 4
    return s, d


def _lift_inverse(s: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`_lift_forward` along the last axis."""
    d_prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    even = s - (d_prev + d + 2) // 4
    even_next = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    odd = d + (even + even_next) // 2
    out = np.empty(s.shape[:-1] + (2 * s.shape[-1],), dtype=s.dtype)
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def _fwd_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    if axis == 0:
        s, d = _lift_forward(np.ascontiguousarray(x.T))
        return s.T, d.T
    return _lift_forward(x)


def _inv_axis(s: np.ndarray, d: np.ndarray, axis: int) -> np.ndarray:
    if axis == 0:
        return _lift_inverse(np.ascontiguousarray(s.T), np.ascontiguousarray(d.T)).T
    return _lift_inverse(s, d)


def forward_dwt(plane: np.ndarray) -> SubbandSet:
    """Decompose a signed-integer plane into the 10-band set."""
    height, width = plane.shape
    layout = layout_for(width, height)
    ll = plane.astype(np.int32)

    bands: dict[str, np.ndarray] = {}
    for level in (1, 2):
        sv, dv = _fwd_axis(ll, axis=0)  # vertical first
        ll, hl = _fwd_axis(sv, axis=1)
        lh, hh = _fwd_axis(dv, axis=1)
        v = min(level, VERT_LEVELS)
        bands[f"HL{level},{v}"] = hl
        bands[f"LH{level},{v}"] = lh
        bands[f"HH{level},{v}"] = hh
    for level in (3, 4, 5):
        ll, d = _fwd_axis(ll, axis=1)  # horizontal only
        bands[f"HL{level},{VERT_LEVELS}"] = d
    bands[f"LL{HORIZ_LEVELS},{VERT_LEVELS}"] = ll

    coefficients = [bands[info.name] for info in layout]
    for info, coeffs in zip(layout, coefficients):
        assert coeffs.shape == (info.height, info.width)
    return SubbandSet(layout=layout, coefficients=coefficients)


def inverse_dwt(bands: SubbandSet) -> np.ndarray:
    """Reconstruct the plane; exact inverse when coefficients are untouched."""
    layout = bands.layout
    named = {}
    for info in layout:
        coeffs = bands[info.band_id]
        if coeffs.shape != (info.height, info.width):
            raise ValueError(
                f"band {info.name}: shape {coeffs.shape} != {(info.height, info.width)}"
            )
        named[info.name] = coeffs.astype(np.int32)

    ll = named[f"LL{HORIZ_LEVELS},{VERT_LEVELS}"]
    for level in (5, 4, 3):
        ll = _inv_axis(ll, named[f"HL{level},{VERT_LEVELS}"], axis=1)
    for level in (2, 1):
        v = min(level, VERT_LEVELS)
        sv = _inv_axis(ll, named[f"HL{level},{v}"], axis=1)
        dv = _inv_axis(named[f"LH{level},{v}"], named[f"HH{level},{v}"], axis=1)
        ll = _inv_axis(sv, dv, axis=0)
    return ll


def _lift_inverse_f(s: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Linear (float) synthesis step; used only to measure basis energies."""
    d_prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    even = s - (d_prev + d) / 4.0
    even_next = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    odd = d + (even + even_next) / 2.0
    out = np.empty(s.shape[:-1] + (2 * s.shape[-1],), dtype=np.float64)
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def _inv_axis_f(s: np.ndarray, d: np.ndarray, axis: int) -> np.ndarray:
    if axis == 0:
        return _lift_inverse_f(np.ascontiguousarray(s.T), np.ascontiguousarray(d.T)).T
    return _lift_inverse_f(s, d)


def synthesize_impulse(
    layout: SubbandLayout, band_id: int, row: int, col: int, amplitude: float = 1.0
) -> np.ndarray:
    """Linear synthesis of a single coefficient impulse (float plane)."""
    named = {
        info.name: np.zeros((info.height, info.width), dtype=np.float64)
        for info in layout
    }
    info = layout[band_id]
    named[info.name][row, col] = amplitude

    ll = named[f"LL{HORIZ_LEVELS},{VERT_LEVELS}"]
    for level in (5, 4, 3):
        ll = _inv_axis_f(ll, named[f"HL{level},{VERT_LEVELS}"], axis=1)
    for level in (2, 1):
        v = min(level, VERT_LEVELS)
        sv = _inv_axis_f(ll, named[f"HL{level},{v}"], axis=1)
        dv = _inv_axis_f(named[f"LH{level},{v}"], named[f"HH{level},{v}"], axis=1)
        ll = _inv_axis_f(sv, dv, axis=0)
    return ll


_GAIN_PLANE = (512, 64)  # wide/tall enough that mid-band impulses stay interior


@functools.lru_cache(maxsize=None)
def synthesis_gain(band_id: int) -> float:
    """Squared L2 norm of the band's synthesis basis function.

    Measured empirically from a mid-band unit impulse on a reference plane.
    """
    if not 0 <= band_id < NUM_BANDS:
        raise ValueError(f"band_id {band_id} out of range")
    layout = layout_for(*_GAIN_PLANE)
    info = layout[band_id]
    plane = synthesize_impulse(layout, band_id, info.height // 2, info.width // 2)
    return float(np.sum(plane * plane))
