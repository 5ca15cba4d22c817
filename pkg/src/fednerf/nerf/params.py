"""Flat MLP parameter vectors and their on-disk format.

Layout: for each layer in order, the ``in_dim x out_dim`` weight matrix in
row-major order followed by the ``out_dim`` bias vector. A layer computes
``x @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..errors import ContractError

MODEL_MAGIC = b"FNRFPRM1"


@dataclass(frozen=True, eq=False)
class ModelParams:
    layer_dims: tuple[tuple[int, int], ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple((int(a), int(b)) for a, b in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if not dims:
            raise ContractError("at least one layer is required", "layer_dims")
        for (_, out_dim), (in_dim, _) in zip(dims[:-1], dims[1:]):
            if out_dim != in_dim:
                raise ContractError(f"layer chain broken: {out_dim} -> {in_dim}", "layer_dims")
        if values.ndim != 1 or values.size != param_count(dims):
            raise ContractError(
                f"expected {param_count(dims)} values, got {values.size}", "values"
            )
        if not np.all(np.isfinite(values)):
            raise ContractError("parameters must be finite", "values")

    @property
    def size(self) -> int:
        return self.values.size

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(self.layer_dims, values)

    def layers(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(W, b)`` views into ``values`` for each layer."""
        offset = 0
        for in_dim, out_dim in self.layer_dims:
            w = self.values[offset:offset + in_dim * out_dim].reshape(in_dim, out_dim)
            offset += in_dim * out_dim
            b = self.values[offset:offset + out_dim]
            offset += out_dim
            yield w, b

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.layer_dims == other.layer_dims and np.array_equal(self.values, other.values)


def param_count(layer_dims: Sequence[tuple[int, int]]) -> int:
    return sum(i * o + o for i, o in layer_dims)


def chain_dims(widths: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """``[39, 64, 64, 4]`` -> ``((39, 64), (64, 64), (64, 4))``."""
    return tuple(zip(widths[:-1], widths[1:]))


def init_params(layer_dims: Sequence[tuple[int, int]], rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    for in_dim, out_dim in layer_dims:
        s = np.sqrt(6.0 / (in_dim + out_dim))
        chunks.append(rng.uniform(-s, s, size=in_dim * out_dim))
        chunks.append(np.zeros(out_dim))
    return ModelParams(tuple(layer_dims), np.concatenate(chunks))


def zeros_like_dims(layer_dims: Sequence[tuple[int, int]]) -> ModelParams:
    return ModelParams(tuple(layer_dims), np.zeros(param_count(layer_dims)))


def to_wire(values: np.ndarray) -> np.ndarray:
    """Round values through float32, the precision used on the wire and on disk."""
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def save_params(params: ModelParams, path: str | Path) -> None:
    parts = [MODEL_MAGIC, struct.pack("<I", len(params.layer_dims))]
    for in_dim, out_dim in params.layer_dims:
        parts.append(struct.pack("<II", in_dim, out_dim))
    parts.append(params.values.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path: str | Path) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise ContractError(f"{path}: bad magic {data[:8]!r}", "magic")
    if len(data) < 12:
        raise ContractError(f"{path}: truncated header", "layer_count")
    (n_layers,) = struct.unpack_from("<I", data, 8)
    offset = 12
    if len(data) < offset + 8 * n_layers:
        raise ContractError(f"{path}: truncated layer table", "layer_dims")
    dims = []
    for _ in range(n_layers):
        dims.append(struct.unpack_from("<II", data, offset))
        offset += 8
    expected = param_count(dims)
    body = data[offset:]
    if len(body) != 4 * expected:
        raise ContractError(
            f"{path}: expected {expected} float32 values, found {len(body) / 4:g}", "values"
        )
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return ModelParams(tuple(dims), values)
