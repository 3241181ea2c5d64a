import numpy as np
import pytest

from xstw.pixel_io import RasterImage, store_image


def synthetic_photo(rng, w, h, color=True, noise=12.0):
    """Band-limited random field plus texture noise; stands in for camera data."""
    yy, xx = np.mgrid[0:h, 0:w]
    channels = 3 if color else 1
    img = np.zeros((h, w, channels))
    for c in range(channels):
        fx, fy = rng.uniform(0.004, 0.05, 2)
        phase = rng.uniform(0, 2 * np.pi, 3)
        img[:, :, c] = (
            120
            + 65 * np.sin(2 * np.pi * fx * xx + phase[0])
            + 55 * np.cos(2 * np.pi * fy * yy + phase[1])
            + 25 * np.sin(2 * np.pi * (fx * yy + fy * xx) + phase[2])
        )
    img += rng.normal(0, noise, img.shape)
    img = np.clip(img, 0, 255).astype(np.uint8)
    return RasterImage(img[:, :, 0] if not color else img)


def synthetic_screenshot(rng, w, h, color=True):
    """Flat regions, hard edges, and thin 'text' strokes."""
    channels = 3 if color else 1
    img = np.full((h, w, channels), 235, dtype=np.int64)
    for _ in range(6):  # panels
        x0, y0 = rng.integers(0, w // 2), rng.integers(0, h // 2)
        x1, y1 = x0 + rng.integers(w // 4, w // 2), y0 + rng.integers(h // 4, h // 2)
        img[y0:y1, x0:x1] = rng.integers(40, 220, channels)
    for _ in range(max(6, h // 12)):  # text-like strokes
        y = int(rng.integers(0, h - 2))
        x0 = int(rng.integers(0, w // 2))
        length = int(rng.integers(w // 8, w // 2))
        img[y, x0 : min(w, x0 + length)] = rng.integers(0, 60)
    img = np.clip(img, 0, 255).astype(np.uint8)
    return RasterImage(img[:, :, 0] if not color else img)


def write_corpus(directory, images):
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        suffix = "ppm" if img.channels == 3 else "pgm"
        path = directory / f"img{i:02d}.{suffix}"
        store_image(img, path)
        paths.append(str(path))
    return paths


@pytest.fixture
def small_gray_corpus(tmp_path):
    rng = np.random.default_rng(100)
    images = [synthetic_photo(rng, 64, 32, color=False) for _ in range(3)]
    return write_corpus(tmp_path / "corpus", images)
