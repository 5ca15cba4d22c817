"""ReLU MLP emitting (density, color) with a hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .params import ModelParams


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    # tanh form is stable for large |x| and exact at 0
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    pre_activations: list  # x @ W + b for each layer
    sigma_raw: np.ndarray
    rgb: np.ndarray


def mlp_forward(params: ModelParams, encoded: np.ndarray):
    """Evaluate the network on one encoded point or a ``(B, D)`` batch.

    Returns ``(sigma, rgb, cache)``; ``sigma = softplus(raw[0])`` and
    ``rgb = sigmoid(raw[1:4])``.
    """
    x = np.asarray(encoded, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    in_dim = params.layer_dims[0][0]
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise ContractError(f"encoded input has shape {np.shape(encoded)}, network expects {in_dim}", "encoded")
    if params.layer_dims[-1][1] != 4:
        raise ContractError("final layer must emit 4 values", "layer_dims")

    inputs, pres = [], []
    h = x
    layers = list(params.layers())
    for i, (w, b) in enumerate(layers):
        inputs.append(h)
        z = h @ w + b
        pres.append(z)
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    sigma = softplus(h[:, 0])
    rgb = sigmoid(h[:, 1:4])
    cache = ForwardCache(inputs, pres, h[:, 0], rgb)
    if single:
        return float(sigma[0]), rgb[0], cache
    return sigma, rgb, cache


def mlp_backward(params: ModelParams, cache: ForwardCache, d_sigma: np.ndarray, d_rgb: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat parameter vector.

    ``d_sigma`` is ``(B,)`` and ``d_rgb`` is ``(B, 3)``: the loss derivatives
    with respect to the network outputs.
    """
    d_sigma = np.reshape(d_sigma, (-1,))
    d_rgb = np.reshape(d_rgb, (-1, 3))
    d_out = np.empty((d_sigma.shape[0], 4))
    d_out[:, 0] = d_sigma * sigmoid(cache.sigma_raw)
    d_out[:, 1:] = d_rgb * cache.rgb * (1.0 - cache.rgb)

    layers = list(params.layers())
    grads = [None] * len(layers)
    g = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:
            g = g * (cache.pre_activations[i] > 0)
        grads[i] = (cache.inputs[i].T @ g, g.sum(axis=0))
        if i > 0:
            g = g @ w.T
    return np.concatenate([part.ravel() for gw, gb in grads for part in (gw, gb)])
