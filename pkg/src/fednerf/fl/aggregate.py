from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..channel import ChannelReport
from ..errors import ContractError
from ..nerf.params import ModelParams


@dataclass(frozen=True)
class GlobalModel:
    round: int
    params: ModelParams


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    device_id: int
    round: int
    params: ModelParams
    num_samples: int
    report: ChannelReport | None = None


def aggregate(updates: Sequence[ClientUpdate]) -> ModelParams:
    """Sample-count-weighted mean of client parameters.

    Accumulates in ascending device id order so the result does not depend on
    the order updates arrived in.
    """
    if not updates:
        raise ContractError("no updates to aggregate", "updates")
    dims = updates[0].params.layer_dims
    rnd = updates[0].round
    for u in updates:
        if u.params.layer_dims != dims:
            raise ContractError(f"device {u.device_id} sent dims {u.params.layer_dims}, expected {dims}", "params")
        if u.round != rnd:
            raise ContractError(f"device {u.device_id} answered round {u.round}, expected {rnd}", "round")
        if u.num_samples < 1:
            raise ContractError(f"device {u.device_id} reports no samples", "num_samples")
    ordered = sorted(updates, key=lambda u: u.device_id)
    total = np.zeros(ordered[0].params.size)
    weight = 0
    for u in ordered:
        total += u.num_samples * u.params.values
        weight += u.num_samples
    return ModelParams(dims, total / weight)
