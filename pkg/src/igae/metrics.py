"""Image-quality metrics on plain arrays (no graph)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSNR_CAP = 99.0


@dataclass
class MetricRow:
    scene_id: str
    view_id: int
    space: str  # "rgb" | "latent"
    psnr: float
    ssim: float


def psnr(a, b, data_range: float = 1.0, channel_std=None) -> float:
    """-10 log10(mse / data_range^2), capped at 99 dB.

    ``channel_std`` (per last-axis channel) normalizes latent residuals before
    the mse, in which case ``data_range`` is 1 by convention.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    if channel_std is not None:
        diff = diff / np.asarray(channel_std, dtype=np.float64)
    err = float(np.mean(diff * diff))
    if err <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * np.log10(err / data_range**2))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def _gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=-1) if img.ndim == 3 else img


def ssim(a, b, data_range: float = 1.0, win: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over the valid region of a Gaussian-windowed grayscale map.

    Colour inputs [H, W, C] are reduced to grayscale by the channel mean. The
    window shrinks (to the largest odd size that fits) on images smaller than 11.
    """
    x, y = _gray(a), _gray(b)
    if x.shape != y.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    size = min(win, x.shape[0], x.shape[1])
    size -= (size + 1) % 2
    g = gaussian_window(size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def latent_stats(latents: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-channel std over a set of [n, h, w, c] latents and the range of the
    std-normalized values (used as the latent SSIM dynamic range)."""
    lat = np.asarray(latents, dtype=np.float64)
    std = lat.reshape(-1, lat.shape[-1]).std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    normed = lat / std
    return std, float(np.ptp(normed.mean(axis=-1))) or 1.0


def latent_psnr(a, b, std) -> float:
    return psnr(a, b, 1.0, channel_std=std)


def latent_ssim(a, b, std, data_range: float) -> float:
    return ssim(np.asarray(a) / std, np.asarray(b) / std, data_range=data_range)
