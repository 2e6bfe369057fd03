"""Synthetic underwater scenes and the on-disk dataset layout.

A dataset directory holds::

    cameras.json        [{R: 9 floats row-major, t: 3, fx, fy, cx, cy, width, height}, ...]
    images/NNN.png      degraded observations
    clean/NNN.png       water-free ground truth (optional)
    depth/NNN.f32       camera-space depth, little-endian float32, row-major
    medium.json         true medium coefficients (optional)
    init_cloud.bin      initial Gaussians (optional, else points.ply)
    points.ply          ASCII point cloud x y z r g b (optional)
    checksums.json      sha256 of every other file (optional)
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rasterizer import render
from .scene import (
    Camera,
    GaussianCloud,
    cloud_from_ply,
    load_f32,
    load_png,
    read_cloud,
    save_f32,
    save_png,
    sh_dc_to_rgb,
    write_cloud,
)

WATER_BETA_D = (1.3, 1.2, 0.9)
WATER_BETA_B = (0.95, 0.85, 0.7)
WATER_B_INF = (0.07, 0.2, 0.39)


class DatasetError(Exception):
    """Base class for dataset loading failures."""


class MissingFileError(DatasetError):
    pass


class MalformedCameraError(DatasetError):
    pass


class SizeMismatchError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


@dataclass
class SyntheticSceneSpec:
    kind: str = "plane"
    n_gaussians: int = 500
    n_cameras: int = 24
    ring_radius: float = 1.0
    ring_height: float = 1.6
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    beta_D: tuple[float, float, float] = WATER_BETA_D
    beta_B: tuple[float, float, float] = WATER_BETA_B
    B_inf: tuple[float, float, float] = WATER_B_INF
    width: int = 64
    height: int = 64
    focal: float | None = None
    far_distance: float = 10.0
    position_noise: float = 0.02
    color_noise: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("beta_D", "beta_B", "B_inf"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")
        if self.n_cameras < 4:
            raise ValueError("need at least 4 cameras")
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; choose from {sorted(SCENE_KINDS)}")


PRESETS = {
    "paper": dict(kind="plane", n_gaussians=500, n_cameras=24, width=64, height=64),
    "toy": dict(kind="plane", n_gaussians=144, n_cameras=8, width=32, height=32),
    "tiny": dict(kind="plane", n_gaussians=36, n_cameras=4, width=16, height=16),
}


def preset(name: str, **overrides) -> SyntheticSceneSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SyntheticSceneSpec(**{**PRESETS[name], **overrides})


@dataclass
class Dataset:
    cameras: list[Camera]
    images: np.ndarray
    depth_maps: np.ndarray
    clean_images: np.ndarray | None = None
    medium_truth: dict | None = None
    init_cloud: GaussianCloud | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.cameras)
        if self.images.shape[0] != n or self.depth_maps.shape[0] != n:
            raise SizeMismatchError("cameras, images and depth maps differ in length")
        if self.clean_images is not None and self.clean_images.shape != self.images.shape:
            raise SizeMismatchError("clean images do not match observations")
        for i, cam in enumerate(self.cameras):
            if self.images.shape[1:3] != (cam.height, cam.width):
                raise SizeMismatchError(f"view {i}: image size does not match camera")

    def __len__(self) -> int:
        return len(self.cameras)


# ---------------------------------------------------------------------------
# Image formation
# ---------------------------------------------------------------------------


def underwater_formation(J, z, beta_D, beta_B, B_inf) -> np.ndarray:
    """``I = J exp(-beta_D z) + B_inf (1 - exp(-beta_B z))`` per channel."""
    z = np.asarray(z, dtype=np.float64)[..., None]
    beta_D, beta_B, B_inf = (np.asarray(v, dtype=np.float64) for v in (beta_D, beta_B, B_inf))
    return np.asarray(J) * np.exp(-beta_D * z) + B_inf * (1.0 - np.exp(-beta_B * z))


def invert_formation(I, z, beta_D, beta_B, B_inf) -> np.ndarray:
    """Recover ``J`` from ``I`` given depth and coefficients."""
    z = np.asarray(z, dtype=np.float64)[..., None]
    beta_D, beta_B, B_inf = (np.asarray(v, dtype=np.float64) for v in (beta_D, beta_B, B_inf))
    return (np.asarray(I) - B_inf * (1.0 - np.exp(-beta_B * z))) * np.exp(beta_D * z)


# ---------------------------------------------------------------------------
# Scene content
# ---------------------------------------------------------------------------


def _texture(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    checker = np.sign(np.sin(3.0 * x) * np.sin(3.0 * y))
    rgb = np.stack(
        [
            0.5 + 0.3 * np.sin(2.1 * x + 0.3) * np.cos(1.7 * y) + 0.15 * checker,
            0.5 + 0.3 * np.sin(1.3 * x - 1.1 * y + 1.0) - 0.1 * checker,
            0.5 + 0.3 * np.cos(2.5 * y + 0.7 * x) + 0.1 * checker,
        ],
        axis=1,
    )
    return np.clip(rgb, 0.03, 0.97)


def _flat_rotation(normals: np.ndarray) -> np.ndarray:
    """Quaternions rotating the local z axis onto each normal."""
    z = np.array([0.0, 0.0, 1.0])
    q = np.zeros((normals.shape[0], 4))
    for i, n in enumerate(normals):
        axis = np.cross(z, n)
        s = np.linalg.norm(axis)
        c = float(np.dot(z, n))
        if s < 1e-12:
            q[i] = [1.0, 0.0, 0.0, 0.0] if c > 0 else [0.0, 1.0, 0.0, 0.0]
            continue
        angle = np.arctan2(s, c)
        q[i, 0] = np.cos(angle / 2)
        q[i, 1:] = axis / s * np.sin(angle / 2)
    return q


def _plane_scene(n: int, rng: np.random.Generator) -> GaussianCloud:
    half = 2.0
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    spacing = 2 * half / cols
    gx = (np.arange(cols) + 0.5) * spacing - half
    gy = (np.arange(rows) + 0.5) * (2 * half / rows) - half
    xx, yy = np.meshgrid(gx, gy)
    xy = np.stack([xx.ravel(), yy.ravel()], axis=1)[:n]
    xy = xy + rng.uniform(-0.15, 0.15, xy.shape) * spacing
    pos = np.concatenate([xy, np.zeros((n, 1))], axis=1)
    tangential = 0.75 * spacing
    scales = np.column_stack([np.full(n, tangential), np.full(n, tangential), np.full(n, 0.05 * spacing)])
    return GaussianCloud.create(pos, _texture(xy), scales=scales, opacities=0.98)


def _sphere_scene(n: int, rng: np.random.Generator) -> GaussianCloud:
    n_spheres = max(1, n // 40)
    centers = rng.uniform(-0.8, 0.8, (n_spheres, 3))
    radii = rng.uniform(0.25, 0.45, n_spheres)
    owner = np.arange(n) % n_spheres
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pos = centers[owner] + d * radii[owner, None]
    area = 4 * np.pi * radii[owner] ** 2 / np.bincount(owner, minlength=n_spheres)[owner]
    t = 0.8 * np.sqrt(area)
    scales = np.column_stack([t, t, 0.05 * t])
    cloud = GaussianCloud.create(
        pos, _texture(pos[:, :2] * 2.0), scales=scales, opacities=0.98, rotations=_flat_rotation(d)
    )
    return cloud


def _room_scene(n: int, rng: np.random.Generator) -> GaussianCloud:
    half = 2.0
    per_face = int(np.ceil(n / 5))
    k = int(np.ceil(np.sqrt(per_face)))
    u = ((np.arange(k) + 0.5) / k) * 2 * half - half
    uu, vv = np.meshgrid(u, u)
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
    faces = []
    # floor and four walls; the room is open at the top
    for axis, sign in ((2, -1), (0, -1), (0, 1), (1, -1), (1, 1)):
        p = np.zeros((uv.shape[0], 3))
        others = [a for a in range(3) if a != axis]
        p[:, others[0]], p[:, others[1]] = uv[:, 0], uv[:, 1]
        p[:, axis] = sign * half
        normal = np.zeros(3)
        normal[axis] = -sign
        faces.append((p, np.tile(normal, (p.shape[0], 1))))
    pos = np.concatenate([f[0] for f in faces])[:n]
    normals = np.concatenate([f[1] for f in faces])[:n]
    t = 0.75 * 2 * half / k
    scales = np.column_stack([np.full(n, t), np.full(n, t), np.full(n, 0.05 * t)])
    return GaussianCloud.create(
        pos, _texture(pos[:, :2] + pos[:, 2:]), scales=scales, opacities=0.98,
        rotations=_flat_rotation(normals),
    )


SCENE_KINDS = {"plane": _plane_scene, "spheres": _sphere_scene, "room": _room_scene}


def camera_ring(spec: SyntheticSceneSpec) -> list[Camera]:
    focal = spec.focal if spec.focal is not None else 1.0 * spec.width
    target = np.asarray(spec.look_at, dtype=np.float64)
    cams = []
    for k in range(spec.n_cameras):
        theta = 2 * np.pi * k / spec.n_cameras
        eye = target + np.array(
            [spec.ring_radius * np.cos(theta), spec.ring_radius * np.sin(theta), spec.ring_height]
        )
        cams.append(
            Camera.look_at(eye, target, (0.0, 0.0, 1.0), width=spec.width, height=spec.height, fx=focal)
        )
    return cams


def render_clean(cloud: GaussianCloud, camera: Camera):
    """Water-free color, blended depth and coverage of the true scene."""
    colors = sh_dc_to_rgb(cloud.base_color[:, 0])
    out, _, _ = render(
        cloud.positions, cloud.rotations, cloud.log_scales, cloud.opacities, colors, camera,
        keep_cache=False,
    )
    return out.color, out.depth, out.alpha


def perturb_cloud(
    cloud: GaussianCloud, rng: np.random.Generator, position_noise: float, color_noise: float
) -> GaussianCloud:
    out = cloud.copy()
    extent = float(np.ptp(cloud.positions, axis=0).max()) or 1.0
    out.positions += rng.uniform(-1, 1, out.positions.shape) * position_noise * extent
    rgb = sh_dc_to_rgb(cloud.base_color[:, 0])
    rgb = rgb + rng.uniform(-1, 1, rgb.shape) * color_noise
    out.base_color[:, 0] = (rgb - 0.5) / 0.28209479177387814
    return out


def generate_scene(spec: SyntheticSceneSpec) -> tuple[Dataset, GaussianCloud]:
    """Render a known scene through the underwater model.

    Returns the dataset (with clean images and the true medium) and the
    perturbed initial cloud. Background pixels (coverage < 0.5) are placed
    at ``far_distance``.
    """
    rng = np.random.default_rng(spec.seed)
    truth = SCENE_KINDS[spec.kind](spec.n_gaussians, rng)
    cameras = camera_ring(spec)
    clean, depth, images = [], [], []
    for cam in cameras:
        J, D, A = render_clean(truth, cam)
        z = np.where(A < 0.5, spec.far_distance, D)
        # depth is stored as float32; simulate with exactly what is stored
        z = z.astype(np.float32).astype(np.float64)
        clean.append(J)
        depth.append(z)
        images.append(underwater_formation(J, z, spec.beta_D, spec.beta_B, spec.B_inf))
    init = perturb_cloud(truth, rng, spec.position_noise, spec.color_noise)
    ds = Dataset(
        cameras=cameras,
        images=np.stack(images),
        depth_maps=np.stack(depth),
        clean_images=np.stack(clean),
        medium_truth={
            "beta_D": list(spec.beta_D),
            "beta_B": list(spec.beta_B),
            "B_inf": list(spec.B_inf),
            "far_distance": spec.far_distance,
        },
        init_cloud=init,
        meta={"kind": spec.kind, "seed": spec.seed, "true_cloud": truth},
    )
    return ds, init


# ---------------------------------------------------------------------------
# Disk layout
# ---------------------------------------------------------------------------


def quantize(images: np.ndarray) -> np.ndarray:
    """What an 8-bit PNG round trip yields."""
    return np.round(np.clip(images, 0.0, 1.0) * 255.0) / 255.0


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_ascii_ply(path: str | Path, xyz: np.ndarray, rgb: np.ndarray) -> None:
    rgb8 = np.round(np.clip(rgb, 0, 1) * 255).astype(int)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(xyz)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    lines += [
        f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]} {c[1]} {c[2]}" for p, c in zip(xyz, rgb8)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def save_dataset(ds: Dataset, path: str | Path) -> None:
    root = Path(path)
    for sub in ("images", "depth") + (("clean",) if ds.clean_images is not None else ()):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "cameras.json").write_text(json.dumps([c.to_dict() for c in ds.cameras], indent=1))
    files = ["cameras.json"]
    for i in range(len(ds)):
        save_png(root / "images" / f"{i:03d}.png", ds.images[i])
        save_f32(root / "depth" / f"{i:03d}.f32", ds.depth_maps[i])
        files += [f"images/{i:03d}.png", f"depth/{i:03d}.f32"]
        if ds.clean_images is not None:
            save_png(root / "clean" / f"{i:03d}.png", ds.clean_images[i])
            files.append(f"clean/{i:03d}.png")
    if ds.medium_truth is not None:
        (root / "medium.json").write_text(json.dumps(ds.medium_truth, indent=1))
        files.append("medium.json")
    if ds.init_cloud is not None:
        buf = io.BytesIO()
        write_cloud(buf, ds.init_cloud)
        (root / "init_cloud.bin").write_bytes(buf.getvalue())
        write_ascii_ply(
            root / "points.ply", ds.init_cloud.positions, sh_dc_to_rgb(ds.init_cloud.base_color[:, 0])
        )
        files += ["init_cloud.bin", "points.ply"]
    sums = {f: _sha256(root / f) for f in files}
    (root / "checksums.json").write_text(json.dumps(sums, indent=1, sort_keys=True))


def _parse_cameras(path: Path) -> list[Camera]:
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedCameraError(f"{path}: {exc}") from exc
    if not isinstance(records, list) or not records:
        raise MalformedCameraError(f"{path}: expected a non-empty array of cameras")
    cams = []
    for i, rec in enumerate(records):
        try:
            if len(rec["R"]) != 9 or len(rec["t"]) != 3:
                raise ValueError("R needs 9 values and t needs 3")
            cams.append(Camera.from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCameraError(f"camera {i}: {exc}") from exc
    return cams


def load_dataset(path: str | Path, verify: bool = True) -> Dataset:
    root = Path(path)
    cam_file = root / "cameras.json"
    if not cam_file.is_file():
        raise MissingFileError(f"{root}: cameras.json not found")
    sums = {}
    if verify and (root / "checksums.json").is_file():
        sums = json.loads((root / "checksums.json").read_text())
        for rel, digest in sums.items():
            f = root / rel
            if f.is_file() and _sha256(f) != digest:
                raise ChecksumError(f"{rel}: checksum mismatch")
    cameras = _parse_cameras(cam_file)

    images, depths, cleans = [], [], []
    has_clean = (root / "clean").is_dir()
    for i, cam in enumerate(cameras):
        img_f = root / "images" / f"{i:03d}.png"
        dep_f = root / "depth" / f"{i:03d}.f32"
        if not img_f.is_file():
            raise MissingFileError(f"view {i}: image {img_f.name} missing")
        if not dep_f.is_file():
            raise MissingFileError(f"view {i}: depth {dep_f.name} missing")
        img = load_png(img_f)
        if img.shape[:2] != (cam.height, cam.width):
            raise SizeMismatchError(f"view {i}: image is {img.shape[:2]}, camera says "
                                    f"{(cam.height, cam.width)}")
        try:
            dep = load_f32(dep_f, (cam.height, cam.width))
        except ValueError as exc:
            raise SizeMismatchError(f"view {i}: {exc}") from exc
        images.append(img)
        depths.append(dep)
        if has_clean:
            clean_f = root / "clean" / f"{i:03d}.png"
            if not clean_f.is_file():
                raise MissingFileError(f"view {i}: clean image {clean_f.name} missing")
            cleans.append(load_png(clean_f))

    medium = None
    if (root / "medium.json").is_file():
        medium = json.loads((root / "medium.json").read_text())
    init = None
    if (root / "init_cloud.bin").is_file():
        with open(root / "init_cloud.bin", "rb") as fh:
            init = read_cloud(fh)
    elif (root / "points.ply").is_file():
        init = cloud_from_ply(root / "points.ply")
    return Dataset(
        cameras=cameras,
        images=np.stack(images),
        depth_maps=np.stack(depths),
        clean_images=np.stack(cleans) if has_clean else None,
        medium_truth=medium,
        init_cloud=init,
    )


def split_views(n_views: int, holdout_every: int = 8) -> tuple[list[int], list[int]]:
    """Every ``holdout_every``-th view (starting at 0) is held out."""
    if holdout_every <= 0:
        return list(range(n_views)), []
    test = [i for i in range(n_views) if i % holdout_every == 0]
    train = [i for i in range(n_views) if i % holdout_every != 0]
    return train, test


__all__ = [
    "Dataset",
    "SyntheticSceneSpec",
    "generate_scene",
    "invert_formation",
    "load_dataset",
    "preset",
    "save_dataset",
    "split_views",
    "underwater_formation",
    "replace",
]
