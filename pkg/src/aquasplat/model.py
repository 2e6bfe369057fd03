"""The full differentiable scene: Gaussians, appearance nets and medium heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .appearance import AppearanceModel
from .medium import MediumModel, MediumOutput
from .rasterizer import GeometryGrads, ProjectionCache, RenderOutput, render, render_backward
from .scene import Camera, GaussianCloud

GAUSSIAN_PARAMS = ("positions", "rotations", "log_scales", "opacity_logits", "base_color")


@dataclass
class ViewState:
    camera: Camera
    embedding: np.ndarray
    colors: np.ndarray
    render: RenderOutput
    projection: ProjectionCache
    order: np.ndarray
    medium: MediumOutput | None
    image: np.ndarray

    @property
    def object_color(self) -> np.ndarray:
        """Water-free color buffer (before the medium is applied)."""
        return self.render.color

    @property
    def depth(self) -> np.ndarray:
        return self.render.depth


class SceneModel:
    """Binds the cloud to the appearance and medium networks.

    With ``use_medium=False`` the composite is the identity and the model
    reduces to plain splatting with the appearance head.
    """

    def __init__(self, cloud: GaussianCloud, seed: int = 0, use_medium: bool = True):
        rng = np.random.default_rng(seed)
        self.cloud = cloud
        self.appearance = AppearanceModel(rng)
        self.medium = MediumModel(rng)
        self.use_medium = use_medium

    def network_params(self) -> dict[str, np.ndarray]:
        out = self.appearance.named_params()
        out.update(self.medium.named_params())
        return out

    def named_params(self) -> dict[str, np.ndarray]:
        out = {f"gaussians.{k}": getattr(self.cloud, k) for k in GAUSSIAN_PARAMS}
        out.update(self.appearance.named_params())
        if self.use_medium:
            out.update(self.medium.named_params())
        return out

    def forward(self, camera: Camera, keep_cache: bool = True) -> ViewState:
        cloud = self.cloud
        e = self.appearance.embed(camera, keep_cache)
        colors = self.appearance.colors(cloud, camera, e, keep_cache)
        out, pcache, order = render(
            cloud.positions, cloud.rotations, cloud.log_scales, cloud.opacities,
            colors, camera, keep_cache=keep_cache,
        )
        med = None
        image = out.color
        if self.use_medium:
            med = self.medium.estimate(out.depth, e, keep_cache)
            image = self.medium.compose(out.color, med)
        return ViewState(camera, e, colors, out, pcache, order, med, image)

    def backward(
        self, state: ViewState, d_image: np.ndarray, d_depth: np.ndarray | None = None
    ) -> tuple[dict[str, np.ndarray], GeometryGrads]:
        """Gradients for every parameter in :meth:`named_params`.

        Also returns the raw rasterizer gradients, whose screen-space norm
        and visibility mask drive densification.
        """
        grads: dict[str, np.ndarray] = {}
        d_embedding = np.zeros_like(state.embedding)
        d_color = d_image
        d_depth_total = np.zeros_like(state.depth) if d_depth is None else d_depth.copy()
        if self.use_medium:
            d_color, d_depth_med, d_e_med, g_med = self.medium.backward(d_image)
            d_depth_total += d_depth_med
            d_embedding += d_e_med
            grads.update(g_med)

        n = len(self.cloud)
        geom = render_backward(
            d_color, d_depth_total, None, state.render, state.projection, state.order, n
        )
        d_coeffs, d_pos, d_e_app, g_col = self.appearance.colors_backward(geom.colors)
        grads.update(g_col)
        grads.update(self.appearance.embed_backward(d_embedding + d_e_app))

        op = self.cloud.opacities
        grads["gaussians.positions"] = geom.positions + d_pos
        grads["gaussians.rotations"] = geom.rotations
        grads["gaussians.log_scales"] = geom.log_scales
        grads["gaussians.opacity_logits"] = geom.opacities * op * (1.0 - op)
        grads["gaussians.base_color"] = d_coeffs
        return grads, geom

    def render_image(self, camera: Camera) -> ViewState:
        return self.forward(camera, keep_cache=False)
