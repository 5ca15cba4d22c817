from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import ContractError, TrainingDivergenceError
from .camera import CameraPose, PosedImage, camera_rays
from .encoding import EncodingConfig, positional_encode
from .mlp import mlp_backward, mlp_forward
from .params import ModelParams
from .render import RayBatch, RenderConfig, composite, composite_backward, sample_depths

RENDER_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class OptimizerState:
    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if np.shape(self.first_moment) != np.shape(self.second_moment):
            raise ContractError("moment vectors differ in size", "moments")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("betas must lie in [0, 1)", "beta1/beta2")
        if self.learning_rate < 0:
            raise ContractError("learning rate must be non-negative", "learning_rate")

    @classmethod
    def fresh(cls, n_params: int, **hyper) -> "OptimizerState":
        return cls(0, np.zeros(n_params), np.zeros(n_params), **hyper)


def adam_step(values: np.ndarray, grad: np.ndarray, opt: OptimizerState):
    t = opt.step_count + 1
    m = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * grad * grad
    m_hat = m / (1.0 - opt.beta1 ** t)
    v_hat = v / (1.0 - opt.beta2 ** t)
    new_values = values - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.epsilon)
    return new_values, replace(opt, step_count=t, first_moment=m, second_moment=v)


def _render_rays(params, origins, directions, ts, cfg, enc):
    points = origins[:, None, :] + ts[..., None] * directions[:, None, :]
    r, s = ts.shape
    sigma, rgb, mlp_cache = mlp_forward(params, positional_encode(points.reshape(-1, 3), enc))
    pixels, weights, cache = composite(sigma.reshape(r, s), rgb.reshape(r, s, 3), ts, cfg)
    return pixels, mlp_cache, cache


def loss_and_gradient(params: ModelParams, batch: RayBatch, cfg: RenderConfig, enc: EncodingConfig,
                      rng: np.random.Generator | None = None):
    """Mean squared color error over the batch and its exact parameter gradient."""
    n = len(batch)
    if n == 0:
        raise ContractError("ray batch is empty", "batch")
    ts = sample_depths(n, cfg, rng)
    pixels, mlp_cache, cache = _render_rays(params, batch.origins, batch.directions, ts, cfg, enc)
    resid = pixels - batch.target_rgb
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise TrainingDivergenceError(loss, iteration=0)
    d_pixels = 2.0 * resid / resid.size
    d_sigmas, d_rgbs = composite_backward(cache, d_pixels)
    grad = mlp_backward(params, mlp_cache, d_sigmas.reshape(-1), d_rgbs.reshape(-1, 3))
    return loss, grad


def ray_pool(images: Sequence[PosedImage]) -> RayBatch:
    """Every pixel of every image as one ray batch."""
    origins, dirs, colors = [], [], []
    for img in images:
        o, d = camera_rays(img.pose)
        origins.append(o)
        dirs.append(d)
        colors.append(img.pixels.reshape(-1, 3))
    return RayBatch(np.concatenate(origins), np.concatenate(dirs), np.concatenate(colors))


def local_train(params: ModelParams, images: Sequence[PosedImage] | RayBatch, iters: int,
                opt: OptimizerState, cfg: RenderConfig, enc: EncodingConfig,
                rng: np.random.Generator, rays_per_batch: int = 256,
                round_index: int | None = None):
    """Run ``iters`` Adam steps on rays drawn uniformly from the client's pixels.

    Returns ``(params, opt, final_loss)`` where ``final_loss`` is the batch
    loss observed at the last step.
    """
    if iters < 1:
        raise ContractError("iters must be >= 1", "iters")
    pool = images if isinstance(images, RayBatch) else ray_pool(images)
    if len(pool) == 0:
        raise ContractError("client holds no images", "images")
    values = params.values
    loss = float("nan")
    for it in range(iters):
        idx = rng.integers(0, len(pool), size=rays_per_batch)
        batch = RayBatch(pool.origins[idx], pool.directions[idx], pool.target_rgb[idx])
        try:
            loss, grad = loss_and_gradient(params.with_values(values), batch, cfg, enc, rng)
        except TrainingDivergenceError as exc:
            raise TrainingDivergenceError(exc.loss, it, round_index) from None
        new_values, opt = adam_step(values, grad, opt)
        if not np.all(np.isfinite(new_values)):
            raise TrainingDivergenceError(float("nan"), it, round_index)
        values = new_values
    return params.with_values(values), opt, loss


def render_image(params: ModelParams, pose: CameraPose, cfg: RenderConfig, enc: EncodingConfig) -> PosedImage:
    cfg = replace(cfg, stratified=False)
    origins, dirs = camera_rays(pose)
    out = np.empty_like(origins)
    per_chunk = max(1, RENDER_CHUNK // cfg.samples_per_ray)
    for start in range(0, len(origins), per_chunk):
        sl = slice(start, start + per_chunk)
        ts = sample_depths(origins[sl].shape[0], cfg)
        out[sl], _, _ = _render_rays(params, origins[sl], dirs[sl], ts, cfg, enc)
    return PosedImage(pose, np.clip(out, 0.0, 1.0).reshape(pose.height, pose.width, 3))


PSNR_CAP = 100.0


def psnr(a: PosedImage, b: PosedImage) -> float:
    pa = a.pixels if isinstance(a, PosedImage) else np.asarray(a, dtype=np.float64)
    pb = b.pixels if isinstance(b, PosedImage) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ContractError(f"image shapes differ: {pa.shape} vs {pb.shape}", "dimensions")
    mse = float(np.mean((pa - pb) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))
