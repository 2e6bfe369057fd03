"""Training objectives: reconstruction, depth regularization and scale penalty.

Every loss returns its value together with the gradient(s) it needs to hand
back, so the training loop never differentiates anything implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import ssim, ssim_backward


class ShapeMismatchError(ValueError):
    pass


@dataclass
class LossWeights:
    recon_dssim: float = 0.2
    depth_l1: float = 0.1
    depth_smooth: float = 0.01
    depth_tv: float = 0.1
    scale: float = 100.0
    grad_floor: float = 1e-3

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def _check(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")


def loss_recon(
    render: np.ndarray, target: np.ndarray, weights: LossWeights = LossWeights()
) -> tuple[float, np.ndarray]:
    """``(1 - l1) * L1 + l1 * (1 - SSIM) / 2`` and its gradient w.r.t. ``render``."""
    _check(render, target)
    diff = render - target
    lam = weights.recon_dssim
    l1 = float(np.mean(np.abs(diff)))
    dssim = (1.0 - ssim(render, target)) / 2.0
    grad = (1.0 - lam) * np.sign(diff) / diff.size
    if lam:
        grad = grad - lam * 0.5 * ssim_backward(render, target)
    return (1.0 - lam) * l1 + lam * dssim, grad


def _forward_diff(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y; the last column/row is zero."""
    gx = np.zeros_like(D)
    gy = np.zeros_like(D)
    gx[:, :-1] = D[:, 1:] - D[:, :-1]
    gy[:-1, :] = D[1:, :] - D[:-1, :]
    return gx, gy


def _forward_diff_adjoint(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    out = np.zeros_like(gx)
    out[:, 1:] += gx[:, :-1]
    out[:, :-1] -= gx[:, :-1]
    out[1:, :] += gy[:-1, :]
    out[:-1, :] -= gy[:-1, :]
    return out


def _median_with_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
    flat = x.reshape(-1)
    order = np.argsort(flat, kind="stable")
    n = flat.size
    grad = np.zeros(n)
    if n % 2:
        grad[order[n // 2]] = 1.0
    else:
        grad[order[n // 2 - 1]] = 0.5
        grad[order[n // 2]] = 0.5
    return float(grad @ flat), grad.reshape(x.shape)


def inverse_depth(depth: np.ndarray) -> np.ndarray:
    return 1.0 / (np.asarray(depth, dtype=np.float64) + 1.0)


def loss_depth(
    D: np.ndarray,
    D_pseudo: np.ndarray,
    image: np.ndarray,
    weights: LossWeights = LossWeights(),
    align: bool = True,
) -> tuple[dict[str, float], np.ndarray]:
    """Pseudo-depth L1, edge-aware smoothness and TV on an inverse-depth map.

    ``image`` only weights the smoothness term and receives no gradient. With
    ``align`` the pseudo depth is rescaled so both maps share a median.
    Returns the three weighted terms and ``dL/dD``.
    """
    D = np.asarray(D, dtype=np.float64)
    _check(D, D_pseudo)
    if np.shape(image)[:2] != D.shape:
        raise ShapeMismatchError(f"image {np.shape(image)} does not match depth {D.shape}")
    P = D.size
    grad = np.zeros_like(D)

    if align:
        med_d, dmed = _median_with_grad(D)
        med_p = float(np.median(D_pseudo))
        ref = D_pseudo * (med_d / med_p)
    else:
        ref = np.asarray(D_pseudo, dtype=np.float64)
    r = D - ref
    l1 = weights.depth_l1 * float(np.mean(np.abs(r)))
    sgn = np.sign(r) * weights.depth_l1 / P
    grad += sgn
    if align:
        grad -= float(np.sum(sgn * D_pseudo)) / med_p * dmed

    img = np.asarray(image, dtype=np.float64)
    img = img[..., None] if img.ndim == 2 else img
    ix = np.zeros(D.shape)
    iy = np.zeros(D.shape)
    ix[:, :-1] = np.mean(np.abs(img[:, 1:] - img[:, :-1]), axis=2)
    iy[:-1, :] = np.mean(np.abs(img[1:, :] - img[:-1, :]), axis=2)
    wx = 1.0 / np.maximum(ix, weights.grad_floor)
    wy = 1.0 / np.maximum(iy, weights.grad_floor)

    gx, gy = _forward_diff(D)
    smooth = weights.depth_smooth * float(np.sum(np.abs(gx) * wx + np.abs(gy) * wy)) / P
    tv = weights.depth_tv * float(np.mean(np.abs(gx)) + np.mean(np.abs(gy)))
    sx, sy = np.sign(gx), np.sign(gy)
    grad += _forward_diff_adjoint(
        weights.depth_smooth * sx * wx / P + weights.depth_tv * sx / P,
        weights.depth_smooth * sy * wy / P + weights.depth_tv * sy / P,
    )
    return {"depth_l1": l1, "smooth": smooth, "tv": tv}, grad


def loss_scale(
    log_scales: np.ndarray, weights: LossWeights = LossWeights()
) -> tuple[float, np.ndarray]:
    """``l5 * mean_i min(s_i)``; the gradient goes to the first minimal axis."""
    log_scales = np.asarray(log_scales, dtype=np.float64)
    n = log_scales.shape[0]
    grad = np.zeros_like(log_scales)
    if n == 0:
        return 0.0, grad
    s = np.exp(log_scales)
    k = np.argmin(s, axis=1)
    smin = s[np.arange(n), k]
    grad[np.arange(n), k] = weights.scale * smin / n
    return weights.scale * float(np.mean(smin)), grad


def total_loss(recon: float, depth: float, scale: float) -> float:
    return float(recon) + float(depth) + float(scale)
