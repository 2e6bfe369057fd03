"""Scattering-medium heads and the underwater image-formation composite.

Both heads are small convolutional stacks over a per-pixel context made of
the inverse rendered depth and the view embedding broadcast to every pixel.
They emit, per pixel and color channel::

    backscatter:  B_inf (sigmoid), b (softplus), B_res (sigmoid), d (softplus)
    attenuation:  (a'_p, a_p), p = 1..2, all sigmoid

which feed

    B_hat(z) = B_inf (1 - exp(-b z)) + B_res exp(-d z)
    a(z)     = sum_p a'_p exp(-a_p z)
    I        = a(z) * C_hat + B_hat(z)

with ``z`` the alpha-blended camera-space depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ConvStack, MissingCacheError, sigmoid, softplus

N_TERMS = 2
CONTEXT_CHANNELS = 17
HIDDEN_CHANNELS = 16


def _logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p))


def _softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y)))


# initial medium: B_inf 0.2, b 1, B_res ~0, d 1; a' 0.5 and a 0.4 / 0.6 so
# the two attenuation terms are not symmetric
_BACKSCATTER_BIAS = np.repeat([_logit(0.2), _softplus_inv(1.0), -6.0, _softplus_inv(1.0)], 3)
_ATTENUATION_BIAS = np.concatenate(
    [np.zeros(3 * N_TERMS), np.tile([_logit(0.4), _logit(0.6)], 3)]
)


class ShapeMismatchError(ValueError):
    pass


def build_context(inv_depth: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    """Stack inverse depth ``(H, W)`` with the embedding broadcast to every pixel."""
    inv_depth = np.asarray(inv_depth, dtype=np.float64)
    if inv_depth.ndim == 3 and inv_depth.shape[2] == 1:
        inv_depth = inv_depth[..., 0]
    if inv_depth.ndim != 2:
        raise ShapeMismatchError(f"depth must be (H, W), got {inv_depth.shape}")
    embedding = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if embedding.shape[0] != CONTEXT_CHANNELS - 1:
        raise ShapeMismatchError(f"embedding must have {CONTEXT_CHANNELS - 1} entries")
    H, W = inv_depth.shape
    return np.concatenate(
        [inv_depth[..., None], np.broadcast_to(embedding, (H, W, embedding.shape[0]))], axis=2
    )


def backscatter(B_inf, b, B_res, d, z):
    """Backscatter model evaluated elementwise; ``z`` broadcasts over channels."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim >= 2 and np.ndim(B_inf) == z.ndim + 1:
        z = z[..., None]
    return B_inf * (1.0 - np.exp(-b * z)) + B_res * np.exp(-d * z)


def attenuation(a_weight, a_rate, z):
    """``sum_p a_weight[p] exp(-a_rate[p] z)``; the term axis is the last one."""
    z = np.asarray(z, dtype=np.float64)
    if np.ndim(a_weight) > z.ndim:
        z = z.reshape(z.shape + (1,) * (np.ndim(a_weight) - z.ndim))
    return np.sum(a_weight * np.exp(-a_rate * z), axis=-1)


@dataclass
class MediumParams:
    B_inf: np.ndarray
    b: np.ndarray
    B_res: np.ndarray
    d: np.ndarray
    a_weight: np.ndarray
    a_rate: np.ndarray


@dataclass
class MediumOutput:
    backscatter: np.ndarray
    attenuation: np.ndarray
    z: np.ndarray
    params: MediumParams


@dataclass
class _MediumCache:
    depth: np.ndarray
    z: np.ndarray
    bs_raw: np.ndarray
    at_raw: np.ndarray
    out: MediumOutput
    exp_b: np.ndarray
    exp_d: np.ndarray
    exp_a: np.ndarray
    object_color: np.ndarray | None = None


class MediumModel:
    """Backscatter and attenuation heads conditioned on depth and embedding."""

    def __init__(self, rng: np.random.Generator):
        self.backscatter_head = ConvStack(
            CONTEXT_CHANNELS, HIDDEN_CHANNELS, 12, rng, out_bias=_BACKSCATTER_BIAS
        )
        self.attenuation_head = ConvStack(
            CONTEXT_CHANNELS, HIDDEN_CHANNELS, 6 * N_TERMS, rng, out_bias=_ATTENUATION_BIAS
        )
        self._cache: _MediumCache | None = None

    def named_params(self) -> dict[str, np.ndarray]:
        out = {f"backscatter.{k}": v for k, v in self.backscatter_head.params.items()}
        out.update({f"attenuation.{k}": v for k, v in self.attenuation_head.params.items()})
        return out

    def estimate(
        self, depth: np.ndarray, embedding: np.ndarray, keep_cache: bool = True
    ) -> MediumOutput:
        """Backscatter and attenuation maps for a rendered depth ``(H, W)``."""
        depth = np.asarray(depth, dtype=np.float64)
        z = np.maximum(depth, 0.0)
        ctx = build_context(1.0 / (depth + 1.0), embedding)
        bs_raw = self.backscatter_head.forward(ctx, keep_cache)
        at_raw = self.attenuation_head.forward(ctx, keep_cache)
        H, W = depth.shape
        at = sigmoid(at_raw).reshape(H, W, 2, 3, N_TERMS)
        params = MediumParams(
            B_inf=sigmoid(bs_raw[..., 0:3]),
            b=softplus(bs_raw[..., 3:6]),
            B_res=sigmoid(bs_raw[..., 6:9]),
            d=softplus(bs_raw[..., 9:12]),
            a_weight=at[:, :, 0],
            a_rate=at[:, :, 1],
        )
        zc = z[..., None]
        exp_b = np.exp(-params.b * zc)
        exp_d = np.exp(-params.d * zc)
        exp_a = np.exp(-params.a_rate * zc[..., None])
        out = MediumOutput(
            backscatter=params.B_inf * (1.0 - exp_b) + params.B_res * exp_d,
            attenuation=np.sum(params.a_weight * exp_a, axis=-1),
            z=z,
            params=params,
        )
        if keep_cache:
            self._cache = _MediumCache(depth, z, bs_raw, at_raw, out, exp_b, exp_d, exp_a)
        return out

    def compose(self, object_color: np.ndarray, medium: MediumOutput) -> np.ndarray:
        if self._cache is not None and self._cache.out is medium:
            self._cache.object_color = object_color
        return compose_underwater(object_color, medium)

    def backward(
        self, d_image: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        """Adjoint of ``estimate`` followed by ``compose``.

        Returns ``(d_object_color, d_depth, d_embedding, head_grads)``.
        """
        c = self._cache
        if c is None or c.object_color is None:
            raise MissingCacheError("medium backward needs estimate() and compose() caches")
        p = c.out.params
        zc = c.z[..., None]
        d_obj = d_image * c.out.attenuation
        d_att = d_image * c.object_color
        d_bs = d_image

        d_B_inf = d_bs * (1.0 - c.exp_b)
        d_b = d_bs * p.B_inf * zc * c.exp_b
        d_B_res = d_bs * c.exp_d
        d_d = -d_bs * p.B_res * zc * c.exp_d
        d_z = np.sum(d_bs * (p.B_inf * p.b * c.exp_b - p.B_res * p.d * c.exp_d), axis=-1)

        d_aw = d_att[..., None] * c.exp_a
        d_ar = -d_att[..., None] * p.a_weight * zc[..., None] * c.exp_a
        d_z += np.sum(-d_att[..., None] * p.a_weight * p.a_rate * c.exp_a, axis=(-2, -1))
        d_z *= c.depth > 0

        bs_s = sigmoid(c.bs_raw)
        d_bs_raw = np.concatenate(
            [
                d_B_inf * p.B_inf * (1.0 - p.B_inf),
                d_b * bs_s[..., 3:6],
                d_B_res * p.B_res * (1.0 - p.B_res),
                d_d * bs_s[..., 9:12],
            ],
            axis=-1,
        )
        H, W = c.z.shape
        d_at = np.stack([d_aw * p.a_weight * (1 - p.a_weight), d_ar * p.a_rate * (1 - p.a_rate)], 2)
        d_at_raw = d_at.reshape(H, W, 6 * N_TERMS)

        d_ctx_b, g_b = self.backscatter_head.backward(d_bs_raw)
        d_ctx_a, g_a = self.attenuation_head.backward(d_at_raw)
        d_ctx = d_ctx_b + d_ctx_a
        d_depth = d_z - d_ctx[..., 0] / (c.depth + 1.0) ** 2
        d_embedding = d_ctx[..., 1:].sum(axis=(0, 1))
        grads = {f"backscatter.{k}": v for k, v in g_b.items()}
        grads.update({f"attenuation.{k}": v for k, v in g_a.items()})
        return d_obj, d_depth, d_embedding, grads


def estimate_backscatter(model: MediumModel, context: np.ndarray, z: np.ndarray) -> np.ndarray:
    raw = model.backscatter_head.forward(context, keep_cache=False)
    return backscatter(
        sigmoid(raw[..., 0:3]), softplus(raw[..., 3:6]), sigmoid(raw[..., 6:9]),
        softplus(raw[..., 9:12]), z,
    )


def estimate_attenuation(model: MediumModel, context: np.ndarray, z: np.ndarray) -> np.ndarray:
    raw = sigmoid(model.attenuation_head.forward(context, keep_cache=False))
    H, W = raw.shape[:2]
    at = raw.reshape(H, W, 2, 3, N_TERMS)
    return attenuation(at[:, :, 0], at[:, :, 1], np.asarray(z)[..., None])


def compose_underwater(object_color: np.ndarray, medium: MediumOutput) -> np.ndarray:
    object_color = np.asarray(object_color, dtype=np.float64)
    if object_color.shape != medium.attenuation.shape:
        raise ShapeMismatchError(
            f"object color {object_color.shape} vs medium {medium.attenuation.shape}"
        )
    return medium.attenuation * object_color + medium.backscatter
