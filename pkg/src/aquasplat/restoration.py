"""Water-free rendering and adaptive contrast stretching (white balance)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import SceneModel
from .scene import Camera


@dataclass(frozen=True)
class StretchRange:
    """Per-channel source and target bounds of the contrast stretch."""

    source_min: np.ndarray
    source_max: np.ndarray
    target_min: np.ndarray
    target_max: np.ndarray

    def __post_init__(self) -> None:
        for name in ("target_min", "target_max"):
            v = getattr(self, name)
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def degenerate(self) -> np.ndarray:
        """Channels whose source range is empty; these pass through."""
        return ~(self.source_max > self.source_min)


def restore_view(model: SceneModel, camera: Camera) -> np.ndarray:
    """Render the object branch only: colors blended without the medium."""
    return model.render_image(camera).object_color.copy()


def acs_range(
    image: np.ndarray, low_percentile: float = 1.0, high_percentile: float = 99.0
) -> StretchRange:
    """Choose stretch bounds from percentiles and the gray-world target.

    Each channel maps its source range to ``[0, t]`` where ``t`` makes the
    stretched channel mean equal the mean over all channels of the input.
    Channels that cannot reach that mean with ``t = 1`` map to ``[m, 1]``.
    """
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    flat = img.reshape(-1, img.shape[-1])
    lo = np.percentile(flat, low_percentile, axis=0)
    hi = np.percentile(flat, high_percentile, axis=0)
    gray = float(flat.mean())
    mean = flat.mean(axis=0)
    span = hi - lo
    offset = mean - lo
    ok = (span > 0) & (offset > 0)
    t_max = np.clip(np.where(ok, gray * span / np.where(ok, offset, 1.0), 1.0), 0.0, 1.0)
    t_min = np.zeros_like(lo)
    for c in np.flatnonzero(ok):
        t_min[c], t_max[c] = _gray_world_bounds(flat[:, c], lo[c], span[c], gray, t_max[c])
    return StretchRange(lo, hi, t_min, t_max)


def _gray_world_bounds(channel, lo, span, gray, guess) -> tuple[float, float]:
    """Target bounds whose stretched and clamped channel mean equals ``gray``.

    The closed-form maximum ignores clamping; it is kept when already exact,
    otherwise the clamped mean, monotone in either bound, is solved directly.
    A channel too dark to reach ``gray`` on ``[0, 1]`` lifts its floor instead.
    """
    unit = (channel - lo) / span

    def mean(t0, t1):
        return float(np.clip(t0 + unit * (t1 - t0), 0.0, 1.0).mean())

    if abs(mean(0.0, guess) - gray) <= 1e-12:
        return 0.0, guess
    if mean(0.0, 1.0) >= gray:
        return 0.0, brentq(lambda t: mean(0.0, t) - gray, 0.0, 1.0, xtol=1e-14)
    return brentq(lambda t: mean(t, 1.0) - gray, 0.0, 1.0, xtol=1e-14), 1.0


def apply_stretch(image: np.ndarray, rng: StretchRange) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    span = np.where(rng.degenerate, 1.0, rng.source_max - rng.source_min)
    out = (img - rng.source_min) / span * (rng.target_max - rng.target_min) + rng.target_min
    out = np.clip(out, 0.0, 1.0)
    return np.where(rng.degenerate, img, out)


def acs_white_balance(image: np.ndarray) -> np.ndarray:
    """Per-channel contrast stretch toward gray-world balance."""
    return apply_stretch(image, acs_range(image))
