"""Differentiable projection and depth-sorted alpha blending.

The whole frame is blended at once in a single global front-to-back order.
There is no 3-sigma screen-space box: a pixel sees every Gaussian whose
footprint there is at least ``1e-6`` (about 5.3 sigma), so the rendered
function is continuous in all parameters up to jumps of that size. Each pixel keeps a
padded list of its contributors, which vectorizes cleanly in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import MissingCacheError
from .scene import Camera, covariance_backward, covariance_from_params, save_f32, save_png

NEAR_PLANE = 0.01
MIN_OPACITY = 1.0 / 255.0
LOWPASS = 0.3
T_EPS = 1e-4
# pairs with a Gaussian footprint below this are not evaluated
FOOTPRINT_MIN = 1e-6
Q_MAX = -2.0 * np.log(FOOTPRINT_MIN)


@dataclass
class ProjectedGaussians:
    """Screen-space Gaussians, one row per visible primitive.

    ``index`` maps rows back to the source cloud and breaks depth ties.
    """

    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray

    def __len__(self) -> int:
        return self.index.shape[0]

    def take(self, order: np.ndarray) -> "ProjectedGaussians":
        return ProjectedGaussians(
            index=self.index[order],
            mean2d=self.mean2d[order],
            cov2d=self.cov2d[order],
            depth=self.depth[order],
            opacity=self.opacity[order],
            color=self.color[order],
        )

    def sorted(self) -> "ProjectedGaussians":
        """Ascending view depth, ties broken by primitive index."""
        return self.take(np.lexsort((self.index, self.depth)))


@dataclass
class ProjectionCache:
    camera: Camera
    index: np.ndarray
    p_cam: np.ndarray
    T: np.ndarray
    cov3d: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray


@dataclass
class BlendCache:
    """Per-pixel pair lists ``(H*W, K)`` in blending order."""

    projected: ProjectedGaussians
    lists: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    conic: np.ndarray
    G: np.ndarray
    sigma: np.ndarray
    T: np.ndarray
    alive: np.ndarray
    weights: np.ndarray
    valid: np.ndarray


@dataclass
class RenderOutput:
    color: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    cache: BlendCache | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        """Dense per-pixel blending weights ``(H*W, M)`` in sorted order."""
        if self.cache is None:
            raise MissingCacheError("weights need a cached forward pass")
        c = self.cache
        dense = np.zeros((c.lists.shape[0], len(c.projected)))
        rows = np.broadcast_to(np.arange(c.lists.shape[0])[:, None], c.lists.shape)
        np.add.at(dense, (rows, c.lists), c.weights)
        return dense


@dataclass
class ProjectedGrads:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray


@dataclass
class GeometryGrads:
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    mean2d_norm: np.ndarray
    visible: np.ndarray


def project(
    positions: np.ndarray,
    rotations: np.ndarray,
    log_scales: np.ndarray,
    opacities: np.ndarray,
    colors: np.ndarray,
    camera: Camera,
) -> tuple[ProjectedGaussians, ProjectionCache]:
    """Perspective-project Gaussians and their covariances (EWA splatting).

    Gaussians at or behind the near plane, or with opacity below 1/255, are
    culled.
    """
    positions = np.asarray(positions, dtype=np.float64)
    p_cam = positions @ camera.R.T + camera.t
    z = p_cam[:, 2]
    keep = (z > NEAR_PLANE) & (np.asarray(opacities) >= MIN_OPACITY)
    idx = np.flatnonzero(keep)
    p = p_cam[idx]
    tx, ty, tz = p[:, 0], p[:, 1], p[:, 2]
    mean2d = np.stack([camera.fx * tx / tz + camera.cx, camera.fy * ty / tz + camera.cy], axis=1)

    J = np.zeros((idx.size, 2, 3))
    J[:, 0, 0] = camera.fx / tz
    J[:, 0, 2] = -camera.fx * tx / tz**2
    J[:, 1, 1] = camera.fy / tz
    J[:, 1, 2] = -camera.fy * ty / tz**2
    T = J @ camera.R
    cov3d = covariance_from_params(rotations[idx], log_scales[idx])
    cov2d = T @ cov3d @ np.swapaxes(T, 1, 2) + LOWPASS * np.eye(2)

    projected = ProjectedGaussians(
        index=idx,
        mean2d=mean2d,
        cov2d=cov2d,
        depth=tz.copy(),
        opacity=np.asarray(opacities, dtype=np.float64)[idx],
        color=np.asarray(colors, dtype=np.float64)[idx],
    )
    cache = ProjectionCache(
        camera=camera,
        index=idx,
        p_cam=p,
        T=T,
        cov3d=cov3d,
        rotations=np.asarray(rotations)[idx],
        log_scales=np.asarray(log_scales)[idx],
    )
    return projected, cache


def project_backward(
    grads: ProjectedGrads, cache: ProjectionCache, n_total: int
) -> GeometryGrads:
    """Adjoint of :func:`project`, scattered back to all ``n_total`` Gaussians.

    ``grads`` rows must follow the projection order (``cache.index``).
    """
    cam = cache.camera
    p = cache.p_cam
    tx, ty, tz = p[:, 0], p[:, 1], p[:, 2]
    G = 0.5 * (grads.cov2d + np.swapaxes(grads.cov2d, 1, 2))
    dT = 2.0 * G @ cache.T @ cache.cov3d
    dcov3d = np.swapaxes(cache.T, 1, 2) @ G @ cache.T
    dJ = dT @ cam.R.T

    inv_z2 = 1.0 / tz**2
    dmx, dmy = grads.mean2d[:, 0], grads.mean2d[:, 1]
    dtx = -cam.fx * inv_z2 * dJ[:, 0, 2] + cam.fx / tz * dmx
    dty = -cam.fy * inv_z2 * dJ[:, 1, 2] + cam.fy / tz * dmy
    dtz = (
        -cam.fx * inv_z2 * dJ[:, 0, 0]
        + 2.0 * cam.fx * tx / tz**3 * dJ[:, 0, 2]
        - cam.fy * inv_z2 * dJ[:, 1, 1]
        + 2.0 * cam.fy * ty / tz**3 * dJ[:, 1, 2]
        - cam.fx * tx * inv_z2 * dmx
        - cam.fy * ty * inv_z2 * dmy
        + grads.depth
    )
    dpos = np.stack([dtx, dty, dtz], axis=1) @ cam.R
    drot, dlog = covariance_backward(cache.rotations, cache.log_scales, dcov3d)

    out = GeometryGrads(
        positions=np.zeros((n_total, 3)),
        rotations=np.zeros((n_total, 4)),
        log_scales=np.zeros((n_total, 3)),
        opacities=np.zeros(n_total),
        colors=np.zeros((n_total, 3)),
        mean2d_norm=np.zeros(n_total),
        visible=np.zeros(n_total, dtype=bool),
    )
    idx = cache.index
    out.positions[idx] = dpos
    out.rotations[idx] = drot
    out.log_scales[idx] = dlog
    out.opacities[idx] = grads.opacity
    out.colors[idx] = grads.color
    out.mean2d_norm[idx] = np.linalg.norm(grads.mean2d, axis=1)
    out.visible[idx] = True
    return out


def _pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.reshape(-1).astype(np.float64), ys.reshape(-1).astype(np.float64)


def _conics(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
    valid = (det > 0) & (cov[:, 0, 0] > 0)
    safe_det = np.where(valid, det, 1.0)
    conic = np.stack(
        [cov[:, 1, 1] / safe_det, -0.5 * (cov[:, 0, 1] + cov[:, 1, 0]) / safe_det,
         cov[:, 0, 0] / safe_det],
        axis=1,
    )
    return conic, valid


def _pixel_lists(projected, conic, valid, width, height):
    """Per-pixel lists of Gaussians with footprint ``G >= FOOTPRINT_MIN``.

    Lists keep the sorted blending order and are padded to a common length;
    padding slots carry ``G = 0`` and point at column 0.
    """
    n_pix = width * height
    mean = projected.mean2d
    xs = np.arange(width, dtype=np.float64)[:, None] - mean[None, :, 0]
    ys = np.arange(height, dtype=np.float64)[:, None] - mean[None, :, 1]
    # q is separable into an x part, a y part and one cross product; the
    # mask is built in float32 and q is recomputed exactly on the survivors
    qx = np.where(valid, conic[:, 0] * xs * xs, np.inf).astype(np.float32)
    qy = (conic[:, 2] * ys * ys).astype(np.float32)
    qd = np.multiply(
        (2.0 * conic[:, 1] * ys).astype(np.float32)[:, None, :], xs.astype(np.float32)[None, :, :]
    )
    qd += qy[:, None, :]
    qd += qx[None, :, :]
    m = conic.shape[0]
    flat = np.flatnonzero(qd.reshape(n_pix, m) <= Q_MAX)
    pix = flat // m
    col = flat - pix * m
    row = pix // width
    dx = np.take(xs.ravel(), (pix - row * width) * m + col)
    dy = np.take(ys.ravel(), row * m + col)
    q = (
        np.take(conic[:, 0], col) * dx * dx
        + 2.0 * np.take(conic[:, 1], col) * dx * dy
        + np.take(conic[:, 2], col) * dy * dy
    )

    counts = np.bincount(pix, minlength=n_pix)
    K = int(counts.max()) if pix.size else 0
    dest = np.arange(pix.size) - np.take(np.cumsum(counts) - counts, pix) + pix * K
    lists = np.zeros(n_pix * K, dtype=np.intp)
    used = np.zeros(n_pix * K, dtype=bool)
    DX = np.zeros(n_pix * K)
    DY = np.zeros(n_pix * K)
    G = np.zeros(n_pix * K)
    lists[dest] = col
    used[dest] = True
    DX[dest] = dx
    DY[dest] = dy
    G[dest] = np.exp(-0.5 * q)
    shape = (n_pix, K)
    return lists.reshape(shape), used.reshape(shape), DX.reshape(shape), DY.reshape(shape), G.reshape(shape)


def blend(
    projected: ProjectedGaussians, width: int, height: int, keep_cache: bool = True
) -> RenderOutput:
    """Front-to-back alpha blending of color, depth and accumulated opacity.

    Pixel centres sit at integer coordinates. A contributor is skipped once
    the transmittance in front of it drops below ``1e-4``, and pairs whose
    Gaussian footprint is below ``FOOTPRINT_MIN`` are not evaluated.
    """
    if len(projected) > 1:
        d = np.diff(projected.depth)
        tie_ok = np.diff(projected.index) > 0
        if np.any(d < 0) or np.any((d == 0) & ~tie_ok):
            raise ValueError("blend expects Gaussians sorted by (depth, index)")

    conic, valid = _conics(projected.cov2d)
    diagnostics = {"non_pd_skipped": int(np.count_nonzero(~valid))}
    lists, used, dx, dy, G = _pixel_lists(projected, conic, valid, width, height)
    sigma = projected.opacity[lists] * G

    T = np.empty_like(sigma)
    if sigma.shape[1]:
        T[:, 0] = 1.0
        np.cumprod(1.0 - sigma[:, :-1], axis=1, out=T[:, 1:])
    alive = (T >= T_EPS) & used
    w = sigma * T * alive

    color = np.einsum("pk,pkc->pc", w, projected.color[lists]).reshape(height, width, 3)
    depth = np.einsum("pk,pk->p", w, projected.depth[lists]).reshape(height, width)
    alpha = w.sum(axis=1).reshape(height, width)
    cache = None
    if keep_cache:
        cache = BlendCache(projected, lists, dx, dy, conic, G, sigma, T, alive, w, valid)
    return RenderOutput(color, depth, alpha, cache, diagnostics)


def _scatter(lists: np.ndarray, values: np.ndarray, m: int) -> np.ndarray:
    """Sum per-pair values into their Gaussian (deterministic order)."""
    return np.bincount(lists.reshape(-1), weights=values.reshape(-1), minlength=m)


def blend_backward(
    dcolor: np.ndarray | None,
    ddepth: np.ndarray | None,
    dalpha: np.ndarray | None,
    output: RenderOutput,
) -> ProjectedGrads:
    """Adjoint of :func:`blend` for every projected field."""
    c = output.cache
    if c is None:
        raise MissingCacheError("blend_backward needs the forward cache")
    proj = c.projected
    m = len(proj)
    n_pix, K = c.weights.shape
    dC = np.zeros((n_pix, 3)) if dcolor is None else np.asarray(dcolor).reshape(n_pix, 3)
    dD = np.zeros(n_pix) if ddepth is None else np.asarray(ddepth).reshape(n_pix)
    # dL/dw for every pair: one dense product, then gather the pairs
    dense = np.concatenate([dC, dD[:, None]], axis=1) @ np.concatenate(
        [proj.color, proj.depth[:, None]], axis=1
    ).T
    gw = np.take_along_axis(dense, c.lists, axis=1)
    if dalpha is not None:
        gw += np.asarray(dalpha).reshape(n_pix)[:, None]

    gwW = gw * c.weights
    # suffix[k] = sum_{i > k} gw_i w_i
    suffix = np.cumsum(gwW[:, ::-1], axis=1)[:, ::-1] - gwW
    # an opaque contributor (sigma = 1) leaves only dead pixels behind it,
    # so its suffix is exactly zero
    one_minus = 1.0 - c.sigma
    behind = np.divide(suffix, one_minus, out=np.zeros_like(suffix), where=one_minus > 0)
    dsigma = c.alive * (gw * c.T - behind)

    dsG = dsigma * c.G
    d_opacity = _scatter(c.lists, dsG, m)
    dq = -0.5 * dsG * proj.opacity[c.lists]
    dqx = dq * c.dx
    dqy = dq * c.dy
    sx = _scatter(c.lists, dqx, m)
    sy = _scatter(c.lists, dqy, m)
    A, B, C = c.conic[:, 0], c.conic[:, 1], c.conic[:, 2]
    d_mean = -2.0 * np.stack([A * sx + B * sy, B * sx + C * sy], axis=1)
    da = _scatter(c.lists, dqx * c.dx, m)
    db = _scatter(c.lists, dqx * c.dy, m)
    dc = _scatter(c.lists, dqy * c.dy, m)
    conic_m = np.empty((m, 2, 2))
    conic_m[:, 0, 0], conic_m[:, 0, 1], conic_m[:, 1, 0], conic_m[:, 1, 1] = A, B, B, C
    dconic = np.empty((m, 2, 2))
    dconic[:, 0, 0], dconic[:, 0, 1], dconic[:, 1, 0], dconic[:, 1, 1] = da, db, db, dc
    dcov = -conic_m @ dconic @ conic_m * c.valid[:, None, None]

    w = c.weights
    return ProjectedGrads(
        mean2d=d_mean,
        cov2d=dcov,
        depth=_scatter(c.lists, w * dD[:, None], m),
        opacity=d_opacity,
        color=np.stack([_scatter(c.lists, w * dC[:, None, ch], m) for ch in range(3)], axis=1),
    )


def render(
    positions: np.ndarray,
    rotations: np.ndarray,
    log_scales: np.ndarray,
    opacities: np.ndarray,
    colors: np.ndarray,
    camera: Camera,
    keep_cache: bool = True,
) -> tuple[RenderOutput, ProjectionCache, np.ndarray]:
    """Project, depth-sort and blend. Returns the output, projection cache
    and the sort order applied to the projected rows."""
    projected, pcache = project(positions, rotations, log_scales, opacities, colors, camera)
    order = np.lexsort((projected.index, projected.depth))
    out = blend(projected.take(order), camera.width, camera.height, keep_cache=keep_cache)
    return out, pcache, order


def render_backward(
    dcolor: np.ndarray | None,
    ddepth: np.ndarray | None,
    dalpha: np.ndarray | None,
    output: RenderOutput,
    pcache: ProjectionCache,
    order: np.ndarray,
    n_total: int,
) -> GeometryGrads:
    g = blend_backward(dcolor, ddepth, dalpha, output)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    unsorted = ProjectedGrads(
        mean2d=g.mean2d[inv],
        cov2d=g.cov2d[inv],
        depth=g.depth[inv],
        opacity=g.opacity[inv],
        color=g.color[inv],
    )
    return project_backward(unsorted, pcache, n_total)


def export_png(path, output: RenderOutput) -> None:
    save_png(path, output.color)


def export_f32(path, output: RenderOutput) -> None:
    """Color (H*W*3), depth (H*W) and alpha (H*W) back to back as float32."""
    save_f32(
        path,
        np.concatenate(
            [output.color.reshape(-1), output.depth.reshape(-1), output.alpha.reshape(-1)]
        ),
    )
