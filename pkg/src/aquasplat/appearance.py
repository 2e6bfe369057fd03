"""Pose-conditioned appearance: per-view embeddings and an affine color head.

A small MLP turns the positional-encoded camera pose into a 16-dim
embedding. A second MLP sees, for every Gaussian, its view-evaluated base
color, its Fourier feature and that embedding, and emits per-channel scale
``gamma = exp(raw)`` and offset ``beta``. The final color is
``gamma * base + beta``. The color head's output layer starts at zero, so a
fresh model reproduces the base colors exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MLP, MissingCacheError
from .scene import FEATURE_DIM, Camera, GaussianCloud, GaussianPrimitive, sh_basis

EMBED_DIM = 16
POSE_OCTAVES = 4
POSE_DIM = 12 * POSE_OCTAVES * 2
HIDDEN = 128


def pose_encoding(camera: Camera) -> np.ndarray:
    """Sin/cos encoding of the 12 pose scalars (row-major R, then t)."""
    pose = np.concatenate([camera.R.reshape(-1), camera.t])
    freqs = np.pi * 2.0 ** np.arange(POSE_OCTAVES)
    arg = pose[:, None] * freqs
    return np.stack([np.sin(arg), np.cos(arg)], axis=-1).reshape(-1)


@dataclass
class _ColorCache:
    base: np.ndarray
    gamma: np.ndarray
    basis: np.ndarray
    dbasis: np.ndarray
    dirs: np.ndarray
    dist: np.ndarray
    coeffs: np.ndarray
    n_visible: int


class AppearanceModel:
    """Pose embedder (2 layers) and color network (3 layers), 128 hidden units."""

    def __init__(self, rng: np.random.Generator):
        self.embedder = MLP([POSE_DIM, HIDDEN, EMBED_DIM], rng)
        self.color_net = MLP([3 + FEATURE_DIM + EMBED_DIM, HIDDEN, HIDDEN, 6], rng, zero_last=True)
        self._color_cache: _ColorCache | None = None

    def named_params(self) -> dict[str, np.ndarray]:
        out = {f"embedder.{k}": v for k, v in self.embedder.params.items()}
        out.update({f"color_net.{k}": v for k, v in self.color_net.params.items()})
        return out

    # -- embedding -----------------------------------------------------------

    def embed(self, camera: Camera, keep_cache: bool = True) -> np.ndarray:
        return self.embedder.forward(pose_encoding(camera)[None, :], keep_cache)[0]

    def embed_backward(self, d_embedding: np.ndarray) -> dict[str, np.ndarray]:
        _, grads = self.embedder.backward(np.asarray(d_embedding)[None, :])
        return {f"embedder.{k}": v for k, v in grads.items()}

    # -- colors --------------------------------------------------------------

    def base_colors(
        self, coeffs: np.ndarray, positions: np.ndarray, camera: Camera
    ) -> tuple[np.ndarray, tuple]:
        degree = int(round(np.sqrt(coeffs.shape[1]))) - 1
        v = positions - camera.center
        dist = np.linalg.norm(v, axis=1, keepdims=True)
        dirs = v / dist
        B, dB = sh_basis(dirs, degree)
        base = np.einsum("nk,nkc->nc", B, coeffs) + 0.5
        return base, (B, dB, dirs, dist)

    def colors(
        self,
        cloud: GaussianCloud,
        camera: Camera,
        embedding: np.ndarray,
        keep_cache: bool = True,
    ) -> np.ndarray:
        """Transformed color for every Gaussian in ``cloud`` seen from ``camera``."""
        base, (B, dB, dirs, dist) = self.base_colors(cloud.base_color, cloud.positions, camera)
        n = len(cloud)
        inp = np.concatenate([base, cloud.features, np.broadcast_to(embedding, (n, EMBED_DIM))], 1)
        raw = self.color_net.forward(inp, keep_cache)
        gamma = np.exp(raw[:, :3])
        beta = raw[:, 3:]
        if keep_cache:
            self._color_cache = _ColorCache(base, gamma, B, dB, dirs, dist, cloud.base_color, n)
        return gamma * base + beta

    def colors_backward(
        self, d_color: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        """Returns ``(d_base_color_coeffs, d_positions, d_embedding, net_grads)``."""
        c = self._color_cache
        if c is None:
            raise MissingCacheError("colors_backward called without a cached forward pass")
        d_raw = np.concatenate([d_color * c.base * c.gamma, d_color], axis=1)
        d_inp, grads = self.color_net.backward(d_raw)
        d_base = d_color * c.gamma + d_inp[:, :3]
        d_embedding = d_inp[:, 3 + FEATURE_DIM:].sum(axis=0)
        d_coeffs = c.basis[:, :, None] * d_base[:, None, :]
        # direction enters only through SH bands >= 1
        d_dir = np.einsum("nkc,nc,nkj->nj", c.coeffs, d_base, c.dbasis)
        d_pos = (d_dir - c.dirs * np.sum(d_dir * c.dirs, axis=1, keepdims=True)) / c.dist
        return d_coeffs, d_pos, d_embedding, {f"color_net.{k}": v for k, v in grads.items()}

    def affine_params(
        self, cloud: GaussianCloud, camera: Camera, embedding: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-Gaussian ``(gamma, beta)`` without touching the caches."""
        base, _ = self.base_colors(cloud.base_color, cloud.positions, camera)
        n = len(cloud)
        inp = np.concatenate([base, cloud.features, np.broadcast_to(embedding, (n, EMBED_DIM))], 1)
        raw = self.color_net.forward(inp, keep_cache=False)
        return np.exp(raw[:, :3]), raw[:, 3:]


def embed_pose(model: AppearanceModel, camera: Camera) -> np.ndarray:
    return model.embed(camera, keep_cache=False)


def appearance_color(
    model: AppearanceModel,
    primitive: GaussianPrimitive,
    view_dir: np.ndarray,
    embedding: np.ndarray,
) -> np.ndarray:
    """Color of a single Gaussian for a given unit view direction."""
    coeffs = np.asarray(primitive.base_color, dtype=np.float64)
    degree = int(round(np.sqrt(coeffs.shape[0]))) - 1
    B, _ = sh_basis(np.asarray(view_dir, dtype=np.float64)[None, :], degree)
    base = B[0] @ coeffs + 0.5
    inp = np.concatenate([base, primitive.appearance_feature, embedding])[None, :]
    raw = model.color_net.forward(inp, keep_cache=False)[0]
    return np.exp(raw[:3]) * base + raw[3:]
