"""Image-quality metrics: PSNR and Gaussian-window SSIM (with its adjoint)."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


_WINDOW = gaussian_window()


def _filter(img: np.ndarray) -> np.ndarray:
    # zero padded and symmetric, hence self-adjoint
    out = correlate1d(img, _WINDOW, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _WINDOW, axis=1, mode="constant", cval=0.0)


def _as3(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img[..., None] if img.ndim == 2 else img


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for images on [0, 1]; identical images report 99 dB."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse <= 10.0 ** (-PSNR_CAP / 10.0):
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_terms(x: np.ndarray, y: np.ndarray):
    mu_x, mu_y = _filter(x), _filter(y)
    exx, eyy, exy = _filter(x * x), _filter(y * y), _filter(x * y)
    sxx = exx - mu_x**2
    syy = eyy - mu_y**2
    sxy = exy - mu_x * mu_y
    A1 = 2.0 * mu_x * mu_y + C1
    A2 = 2.0 * sxy + C2
    B1 = mu_x**2 + mu_y**2 + C1
    B2 = sxx + syy + C2
    return mu_x, mu_y, A1, A2, B1, B2


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x, y = _as3(a), _as3(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    _, _, A1, A2, B1, B2 = _ssim_terms(x, y)
    return (A1 * A2) / (B1 * B2)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), zero padding."""
    return float(np.mean(ssim_map(a, b)))


def ssim_backward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient of ``ssim(a, b)`` with respect to ``a``."""
    x, y = _as3(a), _as3(b)
    mu_x, mu_y, A1, A2, B1, B2 = _ssim_terms(x, y)
    S = (A1 * A2) / (B1 * B2)
    g = 1.0 / S.size
    d_mu_x = g * (2.0 * mu_y * (A2 - A1) / (B1 * B2) + 2.0 * mu_x * S * (1.0 / B2 - 1.0 / B1))
    d_exx = -g * S / B2
    d_exy = g * 2.0 * A1 / (B1 * B2)
    grad = _filter(d_mu_x) + 2.0 * x * _filter(d_exx) + y * _filter(d_exy)
    return grad.reshape(np.shape(a))
