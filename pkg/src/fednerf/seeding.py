"""Deterministic sub-stream derivation.

Every random draw in an experiment comes from a stream keyed by
``(master_seed, purpose, device, round)``. Keys are mixed with splitmix64 so
that streams for different clients or rounds never share state, which is what
lets the single-process simulation and the distributed run agree exactly.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# Stream purposes; part of the seed key so e.g. channel jitter and ray
# sampling for the same (device, round) are independent.
INIT = 1
TRAIN = 2
CHANNEL = 3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *keys: int) -> int:
    h = splitmix64(master_seed & _MASK)
    for k in keys:
        h = splitmix64(h ^ (k & _MASK))
    return h


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *keys)))
