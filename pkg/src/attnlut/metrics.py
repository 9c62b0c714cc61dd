"""Image-quality metrics: PSNR, SSIM and CIELAB colour difference."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import as_image

# sRGB (D65) linear RGB -> XYZ
SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# reference white as the image of RGB (1, 1, 1), so white maps to a* = b* = 0
D65_WHITE = SRGB_TO_XYZ @ np.ones(3)


def _pair(a, b):
    a, b = as_image(a).astype(np.float64), as_image(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images; ``inf`` when identical."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of an ``H x W`` plane."""
    k = g.size
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean structural similarity over channels, Gaussian window, no padding."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < size:
        raise ValueError(f"ssim needs images of at least {size}x{size}, got {a.shape[1]}x{a.shape[0]}")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    g = gaussian_window(size, sigma)
    maps = []
    for c in range(3):
        x, y = a[..., c], b[..., c]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        maps.append(num / den)
    return float(np.mean(maps))


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(image) -> np.ndarray:
    """sRGB in ``[0, 1]`` -> CIELAB under D65."""
    rgb = as_image(image).astype(np.float64)
    xyz = srgb_to_linear(rgb) @ SRGB_TO_XYZ.T
    t = xyz / D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta ** 3, np.cbrt(t), t / (3 * delta ** 2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def delta_e(a, b) -> float:
    """Mean per-pixel Euclidean distance in CIELAB."""
    a, b = _pair(a, b)
    diff = rgb_to_lab(a) - rgb_to_lab(b)
    return float(np.mean(np.sqrt(np.sum(diff * diff, axis=-1))))
