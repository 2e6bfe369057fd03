"""Training loop, adaptive density control and run configuration."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import Dataset, split_views
from .losses import LossWeights, inverse_depth, loss_depth, loss_recon, loss_scale
from .metrics import psnr
from .model import GAUSSIAN_PARAMS, SceneModel, ViewState
from .optim import Adam, exponential_decay
from .scene import Camera, GaussianCloud, fourier_feature, quaternion_to_matrix

log = logging.getLogger(__name__)

METRICS_HEADER = (
    "iteration",
    "loss_recon",
    "loss_depth",
    "loss_scale",
    "loss_total",
    "psnr_train",
    "psnr_heldout",
    "num_gaussians",
)


class TrainingDivergedError(RuntimeError):
    """Raised when a loss turns non-finite; the offending buffers are dumped."""


@dataclass
class TrainConfig:
    iterations: int = 2000
    seed: int = 0
    # Gaussian learning rates; position is scaled by the camera extent
    lr_position_init: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_color: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_network: float = 1e-3
    # loss weights
    lambda_dssim: float = 0.2
    lambda_depth: float = 0.1
    lambda_smooth: float = 0.01
    lambda_tv: float = 0.1
    lambda_scale: float = 100.0
    grad_floor: float = 1e-3
    # density control
    densify_from: int = 500
    densify_until_fraction: float = 0.5
    densify_every: int = 100
    densify_grad_threshold: float = 2e-4
    prune_opacity: float = 0.005
    split_factor: float = 1.6
    percent_dense: float = 0.01
    max_gaussians: int = 800
    # switches
    use_medium: bool = True
    use_depth_loss: bool = True
    use_scale_loss: bool = True
    align_depth: bool = True
    holdout_every: int = 8
    eval_every: int = 100
    checkpoint_every: int = 0

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            recon_dssim=self.lambda_dssim,
            depth_l1=self.lambda_depth,
            depth_smooth=self.lambda_smooth,
            depth_tv=self.lambda_tv,
            scale=self.lambda_scale,
            grad_floor=self.grad_floor,
        )

    @property
    def densify_until(self) -> int:
        return int(self.iterations * self.densify_until_fraction)

    def with_overrides(self, values: dict[str, str]) -> "TrainConfig":
        """Apply string overrides (as read from a config file or CLI)."""
        types = {f.name: f.type for f in dataclasses.fields(self)}
        parsed = {}
        for key, raw in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = types[key]
            if kind in ("bool", bool):
                low = raw.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"{key}: cannot parse {raw!r} as a boolean")
                parsed[key] = low in ("true", "1", "yes")
            elif kind in ("int", int):
                parsed[key] = int(raw)
            else:
                parsed[key] = float(raw)
        return dataclasses.replace(self, **parsed)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "TrainConfig":
        values = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        return dataclasses.replace(cls().with_overrides(values), **overrides)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(self).items())


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


@dataclass
class StepResult:
    losses: dict[str, float]
    grads: dict[str, np.ndarray]
    state: ViewState
    mean2d_norm: np.ndarray
    visible: np.ndarray


def view_objective(
    model: SceneModel,
    camera: Camera,
    target: np.ndarray,
    depth: np.ndarray | None,
    weights: LossWeights,
    use_depth_loss: bool = True,
    use_scale_loss: bool = True,
    align_depth: bool = True,
) -> StepResult:
    """Total loss of one view and the gradient of every model parameter.

    ``depth`` is the supervising (pseudo) depth in scene units; both it and
    the rendered depth are compared in inverse form ``1 / (z + 1)``.
    """
    state = model.forward(camera)
    l_recon, d_image = loss_recon(state.image, target, weights)
    l_depth = 0.0
    d_depth = None
    if use_depth_loss and depth is not None:
        terms, dD = loss_depth(
            inverse_depth(state.depth), inverse_depth(depth), target, weights, align=align_depth
        )
        l_depth = sum(terms.values())
        d_depth = -dD / (state.depth + 1.0) ** 2
    grads, geom = model.backward(state, d_image, d_depth)
    l_scale = 0.0
    if use_scale_loss:
        l_scale, d_ls = loss_scale(model.cloud.log_scales, weights)
        grads["gaussians.log_scales"] = grads["gaussians.log_scales"] + d_ls
    losses = {
        "recon": float(l_recon),
        "depth": float(l_depth),
        "scale": float(l_scale),
        "total": float(l_recon + l_depth + l_scale),
    }
    return StepResult(losses, grads, state, geom.mean2d_norm, geom.visible)


# ---------------------------------------------------------------------------
# Density control
# ---------------------------------------------------------------------------


@dataclass
class GradStats:
    """Running screen-space gradient norms, reset after each densification."""

    accum: np.ndarray
    count: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "GradStats":
        return cls(np.zeros(n), np.zeros(n))

    def add(self, norm: np.ndarray, visible: np.ndarray) -> None:
        self.accum += np.where(visible, norm, 0.0)
        self.count += visible

    def mean(self) -> np.ndarray:
        return np.divide(self.accum, self.count, out=np.zeros_like(self.accum), where=self.count > 0)


def densify_and_prune(
    cloud: GaussianCloud,
    grad_stats: GradStats,
    extent: float,
    rng: np.random.Generator,
    grad_threshold: float = 2e-4,
    prune_opacity: float = 0.005,
    split_factor: float = 1.6,
    percent_dense: float = 0.01,
    max_gaussians: int | None = None,
) -> tuple[GaussianCloud, np.ndarray]:
    """Clone small and split large high-gradient Gaussians, then prune.

    Returns the new cloud and ``source``, where ``source[i]`` is the row of
    the input cloud that new row ``i`` continues (``-1`` for newly created
    Gaussians, whose optimizer moments start at zero).
    """
    n = len(cloud)
    hot = grad_stats.mean() >= grad_threshold
    if max_gaussians is not None:
        room = max(max_gaussians - n, 0)
        if hot.sum() > room:
            # keep only the strongest candidates
            order = np.argsort(-grad_stats.mean(), kind="stable")
            hot = np.zeros(n, dtype=bool)
            hot[order[:room]] = True
    large = cloud.scales.max(axis=1) > percent_dense * extent
    clone = hot & ~large
    split = hot & large

    parts = [cloud]
    sources = [np.arange(n)]
    if clone.any():
        parts.append(cloud.select(clone))
        sources.append(np.full(int(clone.sum()), -1))
    if split.any():
        parent = cloud.select(split)
        rot = quaternion_to_matrix(parent.rotations)
        bound = cloud.normalization_bound
        for _ in range(2):
            child = parent.copy()
            offset = rng.normal(size=parent.positions.shape) * parent.scales
            child.positions = parent.positions + np.einsum("nij,nj->ni", rot, offset)
            child.log_scales = parent.log_scales - np.log(split_factor)
            child.features = fourier_feature(child.positions, bound)
            parts.append(child)
            sources.append(np.full(len(child), -1))
    merged = parts[0]
    for p in parts[1:]:
        merged = GaussianCloud.concat(merged, p)
    source = np.concatenate(sources)

    keep = np.ones(len(merged), dtype=bool)
    keep[:n][split] = False
    keep &= merged.opacities >= prune_opacity
    return merged.select(keep), source[keep]


# ---------------------------------------------------------------------------
# Loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: SceneModel
    metrics: list[dict]
    train_views: list[int]
    heldout_views: list[int]
    initial_cloud: GaussianCloud = field(repr=False, default=None)


def camera_extent(cameras: list[Camera]) -> float:
    centers = np.stack([c.center for c in cameras])
    return 1.1 * float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()) or 1.0


def make_optimizer(model: SceneModel, config: TrainConfig, extent: float) -> Adam:
    lr = {
        "gaussians.positions": exponential_decay(
            config.lr_position_init * extent, config.lr_position_final * extent, config.iterations
        ),
        "gaussians.base_color": config.lr_color,
        "gaussians.opacity_logits": config.lr_opacity,
        "gaussians.log_scales": config.lr_scale,
        "gaussians.rotations": config.lr_rotation,
    }
    return Adam(lr, default_lr=config.lr_network, unit_rows=("gaussians.rotations",))


def evaluate_views(model: SceneModel, dataset: Dataset, views: list[int]) -> float:
    """Mean PSNR of the composed render against the observations."""
    if not views:
        return float("nan")
    scores = [psnr(model.render_image(dataset.cameras[i]).image, dataset.images[i]) for i in views]
    return float(np.mean(scores))


def _dump(path: Path | None, step: StepResult, target: np.ndarray, iteration: int) -> str:
    if path is None:
        return "no output directory; buffers not dumped"
    path.mkdir(parents=True, exist_ok=True)
    dump = path / f"nan_dump_{iteration:06d}.npz"
    arrays = {"image": step.state.image, "depth": step.state.depth, "target": target}
    arrays.update({f"grad.{k}": v for k, v in step.grads.items()})
    np.savez(dump, **arrays)
    return f"buffers written to {dump}"


def _write_metrics(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in METRICS_HEADER})


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return str(v)


def train(
    dataset: Dataset,
    config: TrainConfig = TrainConfig(),
    out_dir: str | Path | None = None,
    init_cloud: GaussianCloud | None = None,
) -> TrainResult:
    """Fit the scene model to a dataset.

    One randomly ordered training view per iteration. Writes
    ``checkpoint.bin``, ``metrics.csv`` and ``config.txt`` into ``out_dir``
    when given.
    """
    cloud = init_cloud if init_cloud is not None else dataset.init_cloud
    if cloud is None:
        raise ValueError("dataset carries no initial cloud and none was given")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text())

    rng = np.random.default_rng(config.seed)
    model = SceneModel(cloud.copy(), seed=config.seed, use_medium=config.use_medium)
    initial = cloud.copy()
    weights = config.loss_weights()
    train_views, held = split_views(len(dataset), config.holdout_every)
    if not train_views:
        raise ValueError("no training views left after the holdout split")
    extent = camera_extent([dataset.cameras[i] for i in train_views])
    opt = make_optimizer(model, config, extent)
    stats = GradStats.zeros(len(model.cloud))
    rows: list[dict] = []
    queue: list[int] = []

    for it in range(1, config.iterations + 1):
        if not queue:
            queue = list(rng.permutation(train_views))
        v = int(queue.pop())
        target = dataset.images[v]
        step = view_objective(
            model, dataset.cameras[v], target, dataset.depth_maps[v], weights,
            use_depth_loss=config.use_depth_loss,
            use_scale_loss=config.use_scale_loss,
            align_depth=config.align_depth,
        )
        bad = [k for k, val in step.losses.items() if not np.isfinite(val)]
        bad += [k for k, g in step.grads.items() if not np.all(np.isfinite(g))]
        if bad:
            where = _dump(out, step, target, it)
            raise TrainingDivergedError(f"non-finite values at iteration {it} in {bad}; {where}")
        opt.step(model.named_params(), step.grads)
        stats.add(step.mean2d_norm, step.visible)

        if (
            config.densify_every > 0
            and config.densify_from <= it <= config.densify_until
            and it % config.densify_every == 0
        ):
            # screen-space gradients in normalized device units
            scale = 0.5 * max(dataset.cameras[v].width, dataset.cameras[v].height)
            stats.accum *= scale
            new_cloud, source = densify_and_prune(
                model.cloud, stats, extent, rng,
                grad_threshold=config.densify_grad_threshold,
                prune_opacity=config.prune_opacity,
                split_factor=config.split_factor,
                percent_dense=config.percent_dense,
                max_gaussians=config.max_gaussians,
            )
            model.cloud = new_cloud
            opt.remap_rows([f"gaussians.{k}" for k in GAUSSIAN_PARAMS], source)
            stats = GradStats.zeros(len(new_cloud))

        evaluate = it == config.iterations or (config.eval_every > 0 and it % config.eval_every == 0)
        rows.append(
            {
                "iteration": it,
                "loss_recon": step.losses["recon"],
                "loss_depth": step.losses["depth"],
                "loss_scale": step.losses["scale"],
                "loss_total": step.losses["total"],
                "psnr_train": psnr(step.state.image, target),
                "psnr_heldout": evaluate_views(model, dataset, held) if evaluate else float("nan"),
                "num_gaussians": len(model.cloud),
            }
        )
        if out is not None and config.checkpoint_every > 0 and it % config.checkpoint_every == 0:
            save_checkpoint(out / f"checkpoint_{it:06d}.bin", model)
        if evaluate:
            log.info("iter %d loss %.5f heldout %.2f dB", it, step.losses["total"],
                     rows[-1]["psnr_heldout"])

    if out is not None:
        save_checkpoint(out / "checkpoint.bin", model)
        _write_metrics(out / "metrics.csv", rows)
    return TrainResult(model, rows, train_views, held, initial)
