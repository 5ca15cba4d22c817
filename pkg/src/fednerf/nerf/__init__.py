"""Desk-scale NeRF: encoding, MLP, volume rendering, training and metrics."""

from .camera import CameraPose, PosedImage, camera_rays, look_at
from .encoding import EncodingConfig, positional_encode
from .mlp import mlp_backward, mlp_forward
from .params import ModelParams, chain_dims, init_params, load_params, save_params
from .render import RayBatch, RenderConfig, composite, composite_backward, sample_along_ray, volume_render
from .train import (OptimizerState, PSNR_CAP, adam_step, local_train, loss_and_gradient, psnr,
                    ray_pool, render_image)

__all__ = [
    "CameraPose", "PosedImage", "camera_rays", "look_at",
    "EncodingConfig", "positional_encode",
    "mlp_forward", "mlp_backward",
    "ModelParams", "chain_dims", "init_params", "load_params", "save_params",
    "RayBatch", "RenderConfig", "composite", "composite_backward", "sample_along_ray", "volume_render",
    "OptimizerState", "PSNR_CAP", "adam_step", "local_train", "loss_and_gradient", "psnr",
    "ray_pool", "render_image",
]
