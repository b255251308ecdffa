"""Seeded random streams.

All randomness flows through Philox, a counter-based generator. Substreams
are derived with ``SeedSequence.spawn``, so draws for block b never depend on
how many blocks were generated before it or on scheduling order: generating
in parallel and generating sequentially produce identical bytes.
"""

from __future__ import annotations

import numpy as np

BLOCK_SIZE = 8192


def root_stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def substreams(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child streams of the given seed, in fixed order."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def block_count(n: int, block: int = BLOCK_SIZE) -> int:
    return max(1, (n + block - 1) // block)
