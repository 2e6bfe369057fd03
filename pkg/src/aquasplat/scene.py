"""Scene primitives: Gaussians, cameras and their parameterizations.

Gaussians are stored structure-of-arrays in :class:`GaussianCloud` so every
downstream stage works on whole ``(N, ...)`` arrays. Opacity is kept as a
logit and scale as a log so the optimizer runs unconstrained.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_FREQS = 4
FEATURE_DIM = 3 * FEATURE_FREQS * 2
BOUND_QUANTILE = 0.97

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.4453057213202769,
    -0.5900435899266435,
)


class ParameterDomainError(ValueError):
    """A parameter is outside the domain an operation is defined on."""


def _check_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ParameterDomainError(f"{name}: non-finite input")


# ---------------------------------------------------------------------------
# Rotations and covariance
# ---------------------------------------------------------------------------


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Return unit quaternions (w, x, y, z); works on ``(4,)`` or ``(N, 4)``."""
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (possibly unnormalized) quaternions, ``(..., 3, 3)``."""
    q = normalize_quaternions(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quaternion_to_matrix_backward(q: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Pull ``dL/dR`` back to the raw (unnormalized) quaternion."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    u = q / norm
    w, x, y, z = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    G = dR
    dw = 2 * (-z * G[..., 0, 1] + y * G[..., 0, 2] + z * G[..., 1, 0]
              - x * G[..., 1, 2] - y * G[..., 2, 0] + x * G[..., 2, 1])
    dx = 2 * (y * G[..., 0, 1] + z * G[..., 0, 2] + y * G[..., 1, 0] - 2 * x * G[..., 1, 1]
              - w * G[..., 1, 2] + z * G[..., 2, 0] + w * G[..., 2, 1] - 2 * x * G[..., 2, 2])
    dy = 2 * (-2 * y * G[..., 0, 0] + x * G[..., 0, 1] + w * G[..., 0, 2] + x * G[..., 1, 0]
              + z * G[..., 1, 2] - w * G[..., 2, 0] + z * G[..., 2, 1] - 2 * y * G[..., 2, 2])
    dz = 2 * (-2 * z * G[..., 0, 0] - w * G[..., 0, 1] + x * G[..., 0, 2] + w * G[..., 1, 0]
              - 2 * z * G[..., 1, 1] + y * G[..., 1, 2] + x * G[..., 2, 0] + y * G[..., 2, 1])
    du = np.stack([dw, dx, dy, dz], axis=-1)
    # project out the radial component of the normalization
    return (du - u * np.sum(du * u, axis=-1, keepdims=True)) / norm


def covariance_from_params(rotation: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """Covariance ``R S S^T R^T`` with ``S = diag(exp(log_scale))``.

    Accepts a single Gaussian (``(4,)``, ``(3,)``) or a batch (``(N, 4)``,
    ``(N, 3)``).
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    log_scale = np.asarray(log_scale, dtype=np.float64)
    _check_finite("covariance_from_params", rotation, log_scale)
    if np.any(np.linalg.norm(rotation, axis=-1) == 0):
        raise ParameterDomainError("covariance_from_params: zero quaternion")
    M = quaternion_to_matrix(rotation) * np.exp(log_scale)[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


def covariance_backward(
    rotation: np.ndarray, log_scale: np.ndarray, dcov: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a loss w.r.t. quaternion and log-scale given ``dL/dSigma``."""
    R = quaternion_to_matrix(rotation)
    s = np.exp(log_scale)
    M = R * s[..., None, :]
    dcov_sym = 0.5 * (dcov + np.swapaxes(dcov, -1, -2))
    dM = 2.0 * dcov_sym @ M
    ds = np.einsum("...ij,...ij->...j", dM, R)
    dR = dM * s[..., None, :]
    return quaternion_to_matrix_backward(rotation, dR), ds * s


# ---------------------------------------------------------------------------
# Fourier appearance features
# ---------------------------------------------------------------------------


def quantile_bound(positions: np.ndarray, q: float = BOUND_QUANTILE) -> float:
    """0.97-quantile of per-point L-infinity norms (linear interpolation)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        raise ParameterDomainError("quantile_bound: empty point set")
    return float(np.quantile(np.abs(positions).max(axis=1), q, method="linear"))


def normalize_positions(positions: np.ndarray, bound: float) -> np.ndarray:
    """Map ``[-bound, bound]`` affinely onto ``[0, 1]``; outside points clamp."""
    if not bound > 0:
        raise ParameterDomainError("normalize_positions: bound must be positive")
    return np.clip(0.5 * (np.asarray(positions, dtype=np.float64) / bound + 1.0), 0.0, 1.0)


def fourier_encode(normalized: np.ndarray) -> np.ndarray:
    """Encode already-normalized coordinates as ``[sin(pi p 2^m), cos(pi p 2^m)]``.

    Layout per point: coordinate-major, then frequency ``m = 1..4``, then
    the (sin, cos) pair.
    """
    p = np.asarray(normalized, dtype=np.float64)
    freqs = np.pi * 2.0 ** np.arange(1, FEATURE_FREQS + 1)
    arg = p[..., :, None] * freqs
    enc = np.stack([np.sin(arg), np.cos(arg)], axis=-1)
    return enc.reshape(p.shape[:-1] + (FEATURE_DIM,))


def fourier_feature(position: np.ndarray, bound: float) -> np.ndarray:
    """24-dim locality-preserving feature for raw world positions."""
    position = np.asarray(position, dtype=np.float64)
    _check_finite("fourier_feature", position)
    return fourier_encode(normalize_positions(position, bound))


# ---------------------------------------------------------------------------
# Spherical harmonics
# ---------------------------------------------------------------------------


def sh_basis(dirs: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Real SH basis values ``(N, K)`` and their gradients ``(N, K, 3)``.

    ``dirs`` are unit vectors; the gradient is w.r.t. the (unconstrained)
    direction components, the caller chains through normalization.
    """
    n = dirs.shape[0]
    K = (degree + 1) ** 2
    B = np.zeros((n, K))
    dB = np.zeros((n, K, 3))
    B[:, 0] = SH_C0
    if degree < 1:
        return B, dB
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    one, zero = np.ones(n), np.zeros(n)
    B[:, 1], dB[:, 1] = -SH_C1 * y, np.stack([zero, -SH_C1 * one, zero], -1)
    B[:, 2], dB[:, 2] = SH_C1 * z, np.stack([zero, zero, SH_C1 * one], -1)
    B[:, 3], dB[:, 3] = -SH_C1 * x, np.stack([-SH_C1 * one, zero, zero], -1)
    if degree < 2:
        return B, dB
    xx, yy, zz = x * x, y * y, z * z
    terms2 = [
        (x * y, (y, x, zero)),
        (y * z, (zero, z, y)),
        (2 * zz - xx - yy, (-2 * x, -2 * y, 4 * z)),
        (x * z, (z, zero, x)),
        (xx - yy, (2 * x, -2 * y, zero)),
    ]
    for k, (c, (val, grad)) in enumerate(zip(SH_C2, terms2)):
        B[:, 4 + k] = c * val
        dB[:, 4 + k] = c * np.stack(grad, -1)
    if degree < 3:
        return B, dB
    terms3 = [
        (y * (3 * xx - yy), (6 * x * y, 3 * xx - 3 * yy, zero)),
        (x * y * z, (y * z, x * z, x * y)),
        (y * (4 * zz - xx - yy), (-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z)),
        (z * (2 * zz - 3 * xx - 3 * yy), (-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy)),
        (x * (4 * zz - xx - yy), (4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z)),
        (z * (xx - yy), (2 * x * z, -2 * y * z, xx - yy)),
        (x * (xx - 3 * yy), (3 * xx - 3 * yy, -6 * x * y, zero)),
    ]
    for k, (c, (val, grad)) in enumerate(zip(SH_C3, terms3)):
        B[:, 9 + k] = c * val
        dB[:, 9 + k] = c * np.stack(grad, -1)
    return B, dB


def rgb_to_sh_dc(rgb: np.ndarray) -> np.ndarray:
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def sh_dc_to_rgb(dc: np.ndarray) -> np.ndarray:
    return np.asarray(dc, dtype=np.float64) * SH_C0 + 0.5


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPrimitive:
    """One Gaussian, as a read-only view for inspection and tests."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    base_color: np.ndarray
    appearance_feature: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))


@dataclass
class GaussianCloud:
    """The optimizable scene, one row per Gaussian.

    ``base_color`` holds SH coefficients with shape ``(N, K, 3)``,
    ``K = (sh_degree + 1) ** 2``.
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    base_color: np.ndarray
    features: np.ndarray
    normalization_bound: float
    sh_degree: int = 0

    def __post_init__(self) -> None:
        n = self.positions.shape[0]
        shapes = {
            "positions": (self.positions, (n, 3)),
            "rotations": (self.rotations, (n, 4)),
            "log_scales": (self.log_scales, (n, 3)),
            "opacity_logits": (self.opacity_logits, (n,)),
            "base_color": (self.base_color, (n, (self.sh_degree + 1) ** 2, 3)),
            "features": (self.features, (n, FEATURE_DIM)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if not self.normalization_bound > 0:
            raise ValueError("normalization_bound must be positive")

    @classmethod
    def create(
        cls,
        positions: np.ndarray,
        colors: np.ndarray,
        scales: np.ndarray | float,
        opacities: np.ndarray | float = 0.9,
        rotations: np.ndarray | None = None,
        sh_degree: int = 0,
        bound: float | None = None,
    ) -> "GaussianCloud":
        """Build a cloud from RGB colors and linear scales/opacities."""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = positions.shape[0]
        scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (n, 3)).copy()
        opac = np.broadcast_to(np.asarray(opacities, dtype=np.float64), (n,)).copy()
        if rotations is None:
            rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        base = np.zeros((n, (sh_degree + 1) ** 2, 3))
        base[:, 0] = rgb_to_sh_dc(np.asarray(colors, dtype=np.float64).reshape(n, 3))
        if bound is None:
            bound = quantile_bound(positions) if n else 1.0
            bound = bound if bound > 0 else 1.0
        return cls(
            positions=positions.copy(),
            rotations=normalize_quaternions(np.asarray(rotations, dtype=np.float64)),
            log_scales=np.log(scales),
            opacity_logits=np.log(opac) - np.log1p(-opac),
            base_color=base,
            features=fourier_feature(positions, bound),
            normalization_bound=float(bound),
            sh_degree=sh_degree,
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def covariances(self) -> np.ndarray:
        return covariance_from_params(self.rotations, self.log_scales)

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            base_color=self.base_color[i].copy(),
            appearance_feature=self.features[i].copy(),
        )

    def params(self) -> dict[str, np.ndarray]:
        """Optimizable arrays by name (features are a frozen encoding)."""
        return {
            "positions": self.positions,
            "rotations": self.rotations,
            "log_scales": self.log_scales,
            "opacity_logits": self.opacity_logits,
            "base_color": self.base_color,
        }

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            positions=self.positions.copy(),
            rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            base_color=self.base_color.copy(),
            features=self.features.copy(),
            normalization_bound=self.normalization_bound,
            sh_degree=self.sh_degree,
        )

    def select(self, mask: np.ndarray) -> "GaussianCloud":
        return GaussianCloud(
            positions=self.positions[mask],
            rotations=self.rotations[mask],
            log_scales=self.log_scales[mask],
            opacity_logits=self.opacity_logits[mask],
            base_color=self.base_color[mask],
            features=self.features[mask],
            normalization_bound=self.normalization_bound,
            sh_degree=self.sh_degree,
        )

    @staticmethod
    def concat(a: "GaussianCloud", b: "GaussianCloud") -> "GaussianCloud":
        return GaussianCloud(
            positions=np.concatenate([a.positions, b.positions]),
            rotations=np.concatenate([a.rotations, b.rotations]),
            log_scales=np.concatenate([a.log_scales, b.log_scales]),
            opacity_logits=np.concatenate([a.opacity_logits, b.opacity_logits]),
            base_color=np.concatenate([a.base_color, b.base_color]),
            features=np.concatenate([a.features, b.features]),
            normalization_bound=a.normalization_bound,
            sh_degree=a.sh_degree,
        )


@dataclass
class Camera:
    """Pinhole camera with a world-to-camera pose ``x_cam = R x + t``."""

    R: np.ndarray
    t: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.abs(self.R.T @ self.R - np.eye(3)).max() > 1e-6:
            raise ValueError("camera rotation is not orthonormal")
        if self.width < 8 or self.height < 8:
            raise ValueError("camera must be at least 8x8 pixels")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @classmethod
    def look_at(
        cls,
        eye: np.ndarray,
        target: np.ndarray,
        up: np.ndarray = (0.0, 0.0, 1.0),
        *,
        width: int,
        height: int,
        fx: float,
        fy: float | None = None,
    ) -> "Camera":
        """OpenCV-style camera (x right, y down, z forward) at ``eye``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        return cls(
            R=R,
            t=-R @ eye,
            fx=fx,
            fy=fx if fy is None else fy,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
        )

    def to_dict(self) -> dict:
        return {
            "R": [float(v) for v in self.R.reshape(-1)],
            "t": [float(v) for v in self.t],
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            R=np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
            t=np.asarray(d["t"], dtype=np.float64),
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


# ---------------------------------------------------------------------------
# Image buffers
# ---------------------------------------------------------------------------


def save_png(path: str | Path, image: np.ndarray) -> None:
    """Write a color ``(H, W, 3)`` or gray ``(H, W)`` image as 8-bit PNG."""
    from PIL import Image

    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_png(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64)
    return data / 255.0


def save_f32(path: str | Path, array: np.ndarray) -> None:
    """Flat little-endian float32 dump, row-major."""
    np.asarray(array, dtype="<f4").tofile(path)


def load_f32(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} floats, found {data.size}")
    return data.reshape(shape).astype(np.float64)


# ---------------------------------------------------------------------------
# Point-cloud import
# ---------------------------------------------------------------------------


def read_ascii_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read vertex ``x, y, z, r, g, b`` from an ASCII PLY file.

    Colors stored as integers are taken to be 8-bit and rescaled to [0, 1].
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append((tok[-1], tok[1]))
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if n_vertex is None or body_start is None:
        raise ValueError(f"{path}: missing vertex element or header end")
    names = [p[0] for p in props]
    for req in ("x", "y", "z", "red", "green", "blue"):
        if req not in names and not (req in ("red", "green", "blue") and req[0] in names):
            raise ValueError(f"{path}: vertex property '{req}' missing")
    rows = np.array(
        [[float(v) for v in lines[body_start + k].split()] for k in range(n_vertex)]
    ).reshape(n_vertex, len(props))
    col = {name: rows[:, j] for j, name in enumerate(names)}
    xyz = np.stack([col["x"], col["y"], col["z"]], axis=1)
    keys = [k if k in col else k[0] for k in ("red", "green", "blue")]
    rgb = np.stack([col[k] for k in keys], axis=1)
    types = dict(props)
    if types.get(keys[0], "float") in ("uchar", "uint8", "int", "uint", "char"):
        rgb = rgb / 255.0
    return xyz, rgb


def cloud_from_ply(path: str | Path, opacity: float = 0.5, sh_degree: int = 0) -> GaussianCloud:
    """Initialize isotropic Gaussians from a colored point cloud.

    Each scale is the mean distance to the three nearest neighbours.
    """
    from scipy.spatial import cKDTree

    xyz, rgb = read_ascii_ply(path)
    if len(xyz) > 1:
        k = min(4, len(xyz))
        dist, _ = cKDTree(xyz).query(xyz, k=k)
        scale = np.maximum(dist[:, 1:].mean(axis=1), 1e-7)
    else:
        scale = np.full(len(xyz), 0.01)
    return GaussianCloud.create(
        xyz, rgb, scales=scale[:, None], opacities=opacity, sh_degree=sh_degree
    )


# ---------------------------------------------------------------------------
# Binary cloud serialization
# ---------------------------------------------------------------------------

CLOUD_MAGIC = b"AQSP"
CLOUD_VERSION = 1


def write_cloud(fh, cloud: GaussianCloud) -> None:
    """Little-endian: magic, u32 version, u64 count, u32 sh_degree,
    f64 normalization bound, then one f64 record per Gaussian with fields
    in declaration order."""
    fh.write(CLOUD_MAGIC)
    fh.write(struct.pack("<IQId", CLOUD_VERSION, len(cloud), cloud.sh_degree,
                         cloud.normalization_bound))
    n = len(cloud)
    records = np.concatenate(
        [
            cloud.positions,
            cloud.rotations,
            cloud.log_scales,
            cloud.opacity_logits[:, None],
            cloud.base_color.reshape(n, -1),
            cloud.features,
        ],
        axis=1,
    )
    fh.write(np.ascontiguousarray(records, dtype="<f8").tobytes())


def read_cloud(fh) -> GaussianCloud:
    magic = fh.read(4)
    if magic != CLOUD_MAGIC:
        raise ValueError("not an AQSP checkpoint")
    version, n, sh_degree, bound = struct.unpack("<IQId", fh.read(24))
    if version != CLOUD_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    K = (sh_degree + 1) ** 2
    width = 3 + 4 + 3 + 1 + 3 * K + FEATURE_DIM
    rec = np.frombuffer(fh.read(8 * width * n), dtype="<f8").reshape(n, width)
    rec = rec.astype(np.float64)
    cols = np.cumsum([0, 3, 4, 3, 1, 3 * K, FEATURE_DIM])
    return GaussianCloud(
        positions=rec[:, cols[0]:cols[1]].copy(),
        rotations=rec[:, cols[1]:cols[2]].copy(),
        log_scales=rec[:, cols[2]:cols[3]].copy(),
        opacity_logits=rec[:, cols[3]].copy(),
        base_color=rec[:, cols[4]:cols[5]].reshape(n, K, 3).copy(),
        features=rec[:, cols[5]:cols[6]].copy(),
        normalization_bound=bound,
        sh_degree=sh_degree,
    )


__all__ = [
    "Camera",
    "GaussianCloud",
    "GaussianPrimitive",
    "ParameterDomainError",
    "cloud_from_ply",
    "covariance_backward",
    "covariance_from_params",
    "fourier_encode",
    "fourier_feature",
    "normalize_quaternions",
    "quantile_bound",
    "quaternion_to_matrix",
    "read_ascii_ply",
    "sh_basis",
]
