"""Differentiable Gaussian splatting for underwater scenes.

The object branch (Gaussians plus an appearance network) renders the
water-free scene; two small convolutional heads turn rendered depth into
backscatter and attenuation, and the composite is fitted to degraded
observations. Every gradient is written by hand in numpy.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, SyntheticSceneSpec, generate_scene, load_dataset, preset, save_dataset
from .losses import LossWeights, loss_depth, loss_recon, loss_scale, total_loss
from .metrics import psnr, ssim
from .model import SceneModel
from .rasterizer import blend, project, render, render_backward
from .restoration import acs_white_balance, restore_view
from .scene import Camera, GaussianCloud, GaussianPrimitive
from .training import TrainConfig, densify_and_prune, train

__all__ = [
    "Camera",
    "Dataset",
    "GaussianCloud",
    "GaussianPrimitive",
    "LossWeights",
    "SceneModel",
    "SyntheticSceneSpec",
    "TrainConfig",
    "acs_white_balance",
    "blend",
    "densify_and_prune",
    "generate_scene",
    "load_checkpoint",
    "load_dataset",
    "loss_depth",
    "loss_recon",
    "loss_scale",
    "preset",
    "project",
    "psnr",
    "render",
    "render_backward",
    "restore_view",
    "save_checkpoint",
    "save_dataset",
    "ssim",
    "total_loss",
    "train",
]
