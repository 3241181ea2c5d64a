"""Raster image I/O (binary PGM/PPM) and the reversible color transform."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np


@dataclasses.dataclass(frozen=True)
class RasterImage:
    """8-bit raster image; ``samples`` is (height, width) or (height, width, 3)."""

    samples: np.ndarray

    def __post_init__(self):
        s = self.samples
        if s.ndim not in (2, 3) or (s.ndim == 3 and s.shape[2] != 3):
            raise ValueError(f"expected (h, w) or (h, w, 3) samples, got {s.shape}")
        if s.dtype != np.uint8:
            raise ValueError(f"expected uint8 samples, got {s.dtype}")

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    @property
    def bit_depth(self) -> int:
        return 8

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.samples.shape == other.samples.shape and bool(
            np.array_equal(self.samples, other.samples)
        )


@dataclasses.dataclass(frozen=True)
class PlanarImage:
    """Signed-integer Y/Cb/Cr planes produced by the reversible transform."""

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray

    def __post_init__(self):
        if not (self.y.shape == self.cb.shape == self.cr.shape):
            raise ValueError("plane dimensions differ")

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def width(self) -> int:
        return self.y.shape[1]


@dataclasses.dataclass(frozen=True)
class LabelMap:
    """Per-pixel class ids for segmentation scoring."""

    labels: np.ndarray
    num_classes: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def _read_pnm_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Parse a PNM header, returning (magic, width, height, maxval, payload offset)."""
    if len(data) < 2 or data[:1] != b"P":
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    magic = data[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError(f"{path}: malformed header")
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise ValueError(f"{path}: malformed header")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ValueError(f"{path}: malformed header")
    pos += 1  # single whitespace byte before the payload
    width, height, maxval = fields
    return magic, width, height, maxval, pos


def load_image(path) -> RasterImage:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255."""
    data = Path(path).read_bytes()
    magic, width, height, maxval, pos = _read_pnm_header(data, path)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported format {magic!r} (want P5 or P6)")
    if maxval != 255:
        raise ValueError(f"{path}: maxval {maxval} unsupported (want 255)")
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    payload = data[pos : pos + n]
    if len(payload) < n:
        raise ValueError(f"{path}: truncated payload")
    samples = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        samples = samples.reshape(height, width)
    else:
        samples = samples.reshape(height, width, 3)
    return RasterImage(samples.copy())


def store_image(img: RasterImage, path) -> None:
    """Write ``img`` as binary PGM (1 channel) or PPM (3 channels)."""
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    Path(path).write_bytes(header + img.samples.tobytes())


def rgb_to_ycbcr_reversible(img: RasterImage) -> PlanarImage:
    """Reversible color transform: Y = (R + 2G + B) >> 2, Cb = B - G, Cr = R - G."""
    if img.channels != 3:
        raise ValueError(f"need a 3-channel image, got {img.channels} channel(s)")
    rgb = img.samples.astype(np.int32)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    y = (r + 2 * g + b) >> 2
    return PlanarImage(y=y, cb=b - g, cr=r - g)


def ycbcr_to_rgb_reversible(planes: PlanarImage) -> RasterImage:
    """Exact inverse of :func:`rgb_to_ycbcr_reversible`."""
    y, cb, cr = planes.y, planes.cb, planes.cr
    g = y - ((cb + cr) >> 2)
    r = cr + g
    b = cb + g
    rgb = np.stack([r, g, b], axis=-1)
    if rgb.min() < 0 or rgb.max() > 255:
        raise ValueError("reconstructed sample outside [0, 255]")
    return RasterImage(rgb.astype(np.uint8))


def load_label_map(path) -> LabelMap:
    """Load a P5 PGM whose gray values are class ids."""
    img = load_image(path)
    if img.channels != 1:
        raise ValueError(f"{path}: label maps must be single-channel PGM")
    labels = img.samples.astype(np.int32)
    return LabelMap(labels=labels, num_classes=int(labels.max()) + 1)
