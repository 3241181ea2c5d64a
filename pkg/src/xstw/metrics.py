"""Quality metrics: PSNR, 5-scale MS-SSIM on luma, and mean IoU for labels.

MS-SSIM follows the original multi-scale construction: 11x11 Gaussian window
(sigma 1.5), K1=0.01/K2=0.03 on a 255 range, scale weights
(0.0448, 0.2856, 0.3001, 0.2363, 0.1333), contrast*structure on the four
coarse scales and full SSIM on the last, dyadic 2x2-mean downsampling.
Color inputs are reduced to BT.601 luma first; PSNR instead averages over
all RGB samples.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from xstw.pixel_io import LabelMap, RasterImage

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_WINDOW = 11
MSSSIM_SIGMA = 1.5
MSSSIM_MIN_SIDE = MSSSIM_WINDOW * 2 ** (len(MSSSIM_WEIGHTS) - 1)  # 176
_K1, _K2, _RANGE = 0.01, 0.03, 255.0


@dataclasses.dataclass(frozen=True)
class MetricScore:
    value: float
    higher_is_better: bool = True


def _check_same_geometry(a: RasterImage, b: RasterImage) -> None:
    if a.samples.shape != b.samples.shape:
        raise ValueError(
            f"image geometry differs: {a.samples.shape} vs {b.samples.shape}"
        )


def psnr(a: RasterImage, b: RasterImage) -> MetricScore:
    """10*log10(255^2 / MSE) over every sample; +inf for identical images."""
    _check_same_geometry(a, b)
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return MetricScore(value=math.inf)
    return MetricScore(value=10.0 * math.log10(255.0**2 / mse))


def _luma(img: RasterImage) -> np.ndarray:
    # contiguous output so scores cannot depend on the caller's memory layout
    if img.channels == 1:
        return np.ascontiguousarray(img.samples, dtype=np.float64)
    rgb = np.ascontiguousarray(img.samples).astype(np.float64)
    return np.ascontiguousarray(
        0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    )


def _gaussian_kernel() -> np.ndarray:
    offsets = np.arange(MSSSIM_WINDOW) - MSSSIM_WINDOW // 2
    k = np.exp(-(offsets**2) / (2.0 * MSSSIM_SIGMA**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = sliding_window_view(img, len(kernel), axis=1) @ kernel
    out = (sliding_window_view(out, len(kernel), axis=0) @ kernel).T
    return out.T


def _ssim_maps(x: np.ndarray, y: np.ndarray, kernel: np.ndarray):
    c1 = (_K1 * _RANGE) ** 2
    c2 = (_K2 * _RANGE) ** 2
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    sigma_xx = _filter_valid(x * x, kernel) - mu_x * mu_x
    sigma_yy = _filter_valid(y * y, kernel) - mu_y * mu_y
    sigma_xy = _filter_valid(x * y, kernel) - mu_x * mu_y
    luminance = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    return luminance * cs, cs


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(a: RasterImage, b: RasterImage) -> MetricScore:
    """Multi-scale SSIM on luma; 1.0 exactly for identical images."""
    _check_same_geometry(a, b)
    if min(a.width, a.height) < MSSSIM_MIN_SIDE:
        raise ValueError(
            f"image too small for {len(MSSSIM_WEIGHTS)} scales: need both sides"
            f" >= {MSSSIM_MIN_SIDE}, got {a.width}x{a.height}"
        )
    x, y = _luma(a), _luma(b)
    kernel = _gaussian_kernel()
    factors = []
    for scale, weight in enumerate(MSSSIM_WEIGHTS):
        ssim_map, cs_map = _ssim_maps(x, y, kernel)
        last = scale == len(MSSSIM_WEIGHTS) - 1
        mean = float(np.mean(ssim_map if last else cs_map))
        factors.append(max(mean, 0.0) ** weight)
        if not last:
            x, y = _downsample2(x), _downsample2(y)
    return MetricScore(value=float(np.prod(factors)))


def iou(pred: LabelMap, truth: LabelMap, num_classes: int | None = None) -> MetricScore:
    """Mean per-class intersection-over-union, averaged over the classes
    present in the truth map."""
    if pred.labels.shape != truth.labels.shape:
        raise ValueError(
            f"label geometry differs: {pred.labels.shape} vs {truth.labels.shape}"
        )
    if num_classes is None:
        num_classes = max(pred.num_classes, truth.num_classes)
    p = pred.labels.ravel()
    t = truth.labels.ravel()
    if p.max() >= num_classes or t.max() >= num_classes:
        raise ValueError(f"label exceeds num_classes {num_classes}")
    confusion = np.bincount(
        t * num_classes + p, minlength=num_classes * num_classes
    ).reshape(num_classes, num_classes)
    tp = np.diag(confusion).astype(np.float64)
    fn = confusion.sum(axis=1) - tp  # truth class mispredicted
    fp = confusion.sum(axis=0) - tp  # predicted where truth differs
    present = confusion.sum(axis=1) > 0
    scores = tp[present] / (tp[present] + fp[present] + fn[present])
    return MetricScore(value=float(scores.mean()))
