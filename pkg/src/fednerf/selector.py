"""Channel-aware partial client selection with waiting-time queues.

Each round a client scores ``q * r_hat + wait`` where ``r_hat`` is its
normalized rate and ``wait`` counts rounds since it was last chosen; the top-k
scores win. ``q = 0`` gives round-robin over all clients, and a large ``q``
favors the fastest links.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .channel import ChannelReport
from .errors import ContractError


class RateMode(str, enum.Enum):
    MEASURED_RATE = "measured_rate"
    QUALITY_LEVEL = "quality_level"


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    q: float = 0.0
    rate_mode: RateMode = RateMode.MEASURED_RATE

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1", "k")
        if self.q < 0:
            raise ContractError("q must be non-negative", "q")
        object.__setattr__(self, "rate_mode", RateMode(self.rate_mode))


def normalized_rate(report: ChannelReport, all_reports: Sequence[ChannelReport], cfg: SelectionConfig) -> float:
    if not all_reports:
        raise ContractError("no channel reports", "reports")
    if cfg.rate_mode is RateMode.QUALITY_LEVEL:
        return report.z / 4
    return report.rate / max(r.rate for r in all_reports)


def scores(reports: Sequence[ChannelReport], queues: Mapping[int, int], cfg: SelectionConfig) -> dict[int, float]:
    return {r.device_id: cfg.q * normalized_rate(r, reports, cfg) + queues.get(r.device_id, 0) for r in reports}


def select(reports: Sequence[ChannelReport], queues: Mapping[int, int], cfg: SelectionConfig) -> tuple[int, ...]:
    """Top-k clients by score, ties broken toward lower device ids.

    Returns the chosen ids in ascending order.
    """
    if len(reports) < cfg.k:
        raise ContractError(f"cannot select {cfg.k} of {len(reports)} clients", "k")
    s = scores(reports, queues, cfg)
    ranked = sorted(s, key=lambda i: (-s[i], i))
    return tuple(sorted(ranked[:cfg.k]))


def update_queues(queues: Mapping[int, int], selected) -> dict[int, int]:
    chosen = set(selected)
    return {i: 0 if i in chosen else q + 1 for i, q in queues.items()}


def initial_queues(device_ids) -> dict[int, int]:
    return {i: 0 for i in sorted(device_ids)}
