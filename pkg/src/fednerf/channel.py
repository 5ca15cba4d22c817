"""Simulated wireless links between the server and its clients.

Defaults mirror the four-client testbed: base RSSIs (50, 41, 66, 73) and
downlink rates (217.48, 197.18, 270.43, 305.81) Mbit/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import seeding
from .errors import ContractError

DEFAULT_BASE_RSSI = (50, 41, 66, 73)
DEFAULT_BASE_RATES = (217.48, 197.18, 270.43, 305.81)
DEFAULT_RSSI_JITTER = 3
DEFAULT_RATE_JITTER_FRAC = 0.05
DEFAULT_SMOOTHING_WINDOW = 10


def rssi_to_quality(rssi: int) -> int:
    """Map an RSSI reading (0-100) to channel quality level 1-4."""
    if not 0 <= rssi <= 100:
        raise ContractError(f"RSSI {rssi} outside [0, 100]", "rssi")
    if rssi <= 50:
        return 1
    if rssi <= 60:
        return 2
    if rssi <= 70:
        return 3
    return 4


@dataclass(frozen=True)
class LinkProfile:
    device_id: int
    base_rssi: int
    base_rate: float
    rssi_jitter: int = DEFAULT_RSSI_JITTER
    rate_jitter_frac: float = DEFAULT_RATE_JITTER_FRAC

    def __post_init__(self):
        if self.device_id < 1:
            raise ContractError("client device ids start at 1", "device_id")
        if not 0 <= self.base_rssi <= 100:
            raise ContractError("base_rssi must be in [0, 100]", "base_rssi")
        if not self.base_rate > 0:
            raise ContractError("base_rate must be positive", "base_rate")
        if self.rssi_jitter < 0:
            raise ContractError("rssi_jitter must be non-negative", "rssi_jitter")
        if not 0 <= self.rate_jitter_frac < 1:
            raise ContractError("rate_jitter_frac must be in [0, 1)", "rate_jitter_frac")

    def to_json(self) -> dict:
        return {
            "device_id": self.device_id,
            "base_rssi": self.base_rssi,
            "base_rate_mbps": self.base_rate,
            "rssi_jitter": self.rssi_jitter,
            "rate_jitter_frac": self.rate_jitter_frac,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "LinkProfile":
        return cls(
            device_id=int(d["device_id"]),
            base_rssi=int(d["base_rssi"]),
            base_rate=float(d["base_rate_mbps"]),
            rssi_jitter=int(d.get("rssi_jitter", DEFAULT_RSSI_JITTER)),
            rate_jitter_frac=float(d.get("rate_jitter_frac", DEFAULT_RATE_JITTER_FRAC)),
        )


def default_links(n_clients: int = 4, jitter: bool = True) -> list[LinkProfile]:
    """Testbed link profiles, cycled if more than four clients are requested."""
    return [
        LinkProfile(
            device_id=i + 1,
            base_rssi=DEFAULT_BASE_RSSI[i % 4],
            base_rate=DEFAULT_BASE_RATES[i % 4],
            rssi_jitter=DEFAULT_RSSI_JITTER if jitter else 0,
            rate_jitter_frac=DEFAULT_RATE_JITTER_FRAC if jitter else 0.0,
        )
        for i in range(n_clients)
    ]


@dataclass(frozen=True)
class ChannelReport:
    device_id: int
    rssi: int
    z: int
    rate: float

    def __post_init__(self):
        if self.z != rssi_to_quality(self.rssi):
            raise ContractError(f"quality level {self.z} does not match RSSI {self.rssi}", "z")
        if not self.rate > 0:
            raise ContractError("rate must be positive", "rate")


def sample_report(profile: LinkProfile, round_index: int, rng: np.random.Generator) -> ChannelReport:
    """Draw one RSSI/rate measurement around the profile's base values."""
    u = int(rng.integers(-profile.rssi_jitter, profile.rssi_jitter + 1)) if profile.rssi_jitter else 0
    v = rng.uniform(-profile.rate_jitter_frac, profile.rate_jitter_frac) if profile.rate_jitter_frac else 0.0
    rssi = min(100, max(0, profile.base_rssi + u))
    return ChannelReport(profile.device_id, rssi, rssi_to_quality(rssi), profile.base_rate * (1.0 + v))


def round_reports(links: Sequence[LinkProfile], round_index: int, master_seed: int) -> list[ChannelReport]:
    """Reports for every client in a round, each from its own derived stream."""
    return [
        sample_report(p, round_index, seeding.stream(master_seed, seeding.CHANNEL, p.device_id, round_index))
        for p in sorted(links, key=lambda p: p.device_id)
    ]


def transfer_seconds(payload_bytes: int, rate_mbps: float) -> float:
    if not rate_mbps > 0:
        raise ContractError("rate must be positive", "rate")
    return payload_bytes * 8 / (rate_mbps * 1e6)


def selected_rate_ratio(selected: Iterable[int], reports: Sequence[ChannelReport]) -> float:
    """Share of the round's total rate carried by the selected clients."""
    if not reports:
        raise ContractError("no channel reports", "reports")
    rates = {r.device_id: r.rate for r in reports}
    chosen = set(selected)
    missing = chosen - rates.keys()
    if missing:
        raise ContractError(f"selected ids {sorted(missing)} have no report", "selected")
    total = math.fsum(rates.values())
    return math.fsum(rates[i] for i in sorted(chosen)) / total


def smooth_ratio_series(series: Sequence[float], window: int = DEFAULT_SMOOTHING_WINDOW) -> list[float]:
    """Centered moving average truncated at the series edges.

    Point ``t`` averages indices ``t - window//2`` through
    ``t + ceil(window/2) - 1``, clipped to the valid range.
    """
    if window < 1:
        raise ContractError("window must be >= 1", "window")
    values = list(series)
    n = len(values)
    before, after = window // 2, (window + 1) // 2 - 1
    out = []
    for t in range(n):
        lo, hi = max(0, t - before), min(n - 1, t + after)
        chunk = values[lo:hi + 1]
        # offset form keeps constant windows exact
        ref = chunk[0]
        out.append(ref + math.fsum(v - ref for v in chunk) / len(chunk))
    return out
