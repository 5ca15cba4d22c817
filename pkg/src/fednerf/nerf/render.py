"""Ray sampling and emission-absorption compositing (forward and backward)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class RenderConfig:
    near: float = 2.0
    far: float = 6.0
    samples_per_ray: int = 32
    background_rgb: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ContractError("require 0 < near < far", "near/far")
        if self.samples_per_ray < 1:
            raise ContractError("samples_per_ray must be >= 1", "samples_per_ray")
        bg = tuple(float(c) for c in self.background_rgb)
        if len(bg) != 3 or min(bg) < 0 or max(bg) > 1:
            raise ContractError("background_rgb must be 3 values in [0, 1]", "background_rgb")
        object.__setattr__(self, "background_rgb", bg)


@dataclass(frozen=True, eq=False)
class RayBatch:
    origins: np.ndarray
    directions: np.ndarray
    target_rgb: np.ndarray

    def __post_init__(self):
        n = np.shape(self.origins)[0]
        if not (np.shape(self.origins) == np.shape(self.directions) == np.shape(self.target_rgb) == (n, 3)):
            raise ContractError("origins, directions and target_rgb must all be (N, 3)", "batch")
        norms = np.linalg.norm(self.directions, axis=-1)
        if n and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ContractError("ray directions must be unit length", "directions")

    def __len__(self):
        return self.origins.shape[0]


def sample_depths(n_rays: int, cfg: RenderConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """``(n_rays, samples_per_ray)`` depths, one per equal-width bin.

    Without stratification every depth is its bin midpoint; with it, depths are
    uniform within their bin.
    """
    n = cfg.samples_per_ray
    width = (cfg.far - cfg.near) / n
    lower = cfg.near + width * np.arange(n)
    if cfg.stratified:
        if rng is None:
            raise ContractError("stratified sampling needs a random stream", "rng")
        u = rng.random((n_rays, n))
    else:
        u = np.full((n_rays, n), 0.5)
    return lower + width * u


def sample_along_ray(origin, direction, cfg: RenderConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    return sample_depths(1, cfg, rng)[0]


def _deltas(ts: np.ndarray, far: float) -> np.ndarray:
    return np.concatenate([np.diff(ts, axis=-1), far - ts[..., -1:]], axis=-1)


@dataclass
class RenderCache:
    deltas: np.ndarray
    alphas: np.ndarray
    trans: np.ndarray  # transmittance before each sample
    weights: np.ndarray
    rgbs: np.ndarray
    background: np.ndarray = field(repr=False)


def composite(sigmas: np.ndarray, rgbs: np.ndarray, ts: np.ndarray, cfg: RenderConfig):
    """Batched compositing over ``(R, S)`` samples; returns ``(pixels, weights, cache)``."""
    deltas = _deltas(ts, cfg.far)
    tau = sigmas * deltas
    alphas = -np.expm1(-tau)
    # Transmittance from the exclusive cumulative optical depth.
    cum = np.cumsum(tau, axis=-1)
    trans = np.exp(-np.concatenate([np.zeros_like(cum[..., :1]), cum[..., :-1]], axis=-1))
    weights = trans * alphas
    bg = np.asarray(cfg.background_rgb)
    pixels = np.einsum("...s,...sc->...c", weights, rgbs) + (1.0 - weights.sum(-1))[..., None] * bg
    return pixels, weights, RenderCache(deltas, alphas, trans, weights, rgbs, bg)


def composite_backward(cache: RenderCache, d_pixels: np.ndarray):
    """Derivatives of a loss w.r.t. per-sample densities and colors.

    With ``A_i = rgb_i - background``:
    ``dC/drgb_i = w_i`` and
    ``dC/dsigma_i = delta_i * (T_{i+1} A_i - sum_{k>i} w_k A_k)``.
    """
    d_rgbs = cache.weights[..., None] * d_pixels[..., None, :]
    a = cache.rgbs - cache.background
    wa = np.einsum("...s,...sc,...c->...s", cache.weights, a, d_pixels)
    ta = np.einsum("...sc,...c->...s", a, d_pixels) * cache.trans * (1.0 - cache.alphas)
    # exclusive reverse cumulative sum of w_k A_k over k > i
    after = np.cumsum(wa[..., ::-1], axis=-1)[..., ::-1] - wa
    d_sigmas = cache.deltas * (ta - after)
    return d_sigmas, d_rgbs


def volume_render(sigmas, rgbs, ts, cfg: RenderConfig):
    """Composite a single ray: ``(N,)`` densities, ``(N, 3)`` colors, ``(N,)`` depths."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    rgbs = np.asarray(rgbs, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    if sigmas.ndim != 1 or sigmas.size < 1 or rgbs.shape != (sigmas.size, 3) or ts.shape != sigmas.shape:
        raise ContractError("expected (N,), (N, 3), (N,) arrays with N >= 1", "samples")
    pixel, weights, _ = composite(sigmas, rgbs, ts, cfg)
    return pixel, weights
