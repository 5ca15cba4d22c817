from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class EncodingConfig:
    l_pos: int = 6
    include_input: bool = True

    def __post_init__(self):
        if self.l_pos < 0:
            raise ContractError("l_pos must be non-negative", "l_pos")

    @property
    def dim(self) -> int:
        return 3 * int(self.include_input) + 6 * self.l_pos


def positional_encode(x: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    """Frequency-encode 3D points.

    Works on a single 3-vector or any ``(..., 3)`` array. Output order is the
    raw input (optional), then for each octave ``k`` and axis ``d`` the pair
    ``sin(2^k pi x_d), cos(2^k pi x_d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 3:
        raise ContractError(f"expected trailing dimension 3, got {x.shape}", "x")
    parts = [x] if cfg.include_input else []
    if cfg.l_pos:
        freqs = (2.0 ** np.arange(cfg.l_pos)) * np.pi
        angles = x[..., None, :] * freqs[:, None]  # (..., L, 3)
        pairs = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # (..., L, 3, 2)
        parts.append(pairs.reshape(*x.shape[:-1], 6 * cfg.l_pos))
    if not parts:
        return np.zeros((*x.shape[:-1], 0))
    return np.concatenate(parts, axis=-1)
