"""Seeded counter-based random streams.

Every consumer draws from its own Philox stream keyed by ``(seed, stream)``,
so adding draws in one stage never shifts the numbers another stage sees.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "data": 0,
    "stage1": 1,
    "stage2": 2,
    "oracle": 3,
    "baseline": 4,
    "scm": 5,
    "embedding": 6,
    "split": 7,
}


def make_rng(seed: int, stream: str = "data", sub: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed), STREAMS[stream], int(sub)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
