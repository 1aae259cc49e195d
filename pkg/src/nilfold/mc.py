"""Deterministic block-structured Monte Carlo helpers.

Work is cut into fixed-size blocks; block b draws from
``default_rng(SeedSequence(seed, spawn_key=(b,)))``.  Results therefore depend
on the seed and the block size only, never on how blocks are spread over
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

BLOCK = 1 << 16


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, block)))


def block_sizes(total: int, block: int = BLOCK) -> list[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn: Callable[[int, int], object], total: int, workers: int = 1, block: int = BLOCK):
    """[fn(block_index, block_size) for each block] in block order."""
    sizes = block_sizes(total, block)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(b, m) for b, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(len(sizes)), sizes))


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    hits: int = 0
    samples: int = 0

    def __str__(self):
        return f"{self.value:.6g} ± {self.se:.2g}"


def binomial_estimate(hits: int, samples: int, scale: float = 1.0) -> Estimate:
    p = hits / samples
    se = math.sqrt(max(p * (1 - p), 0.0) / samples)
    return Estimate(scale * p, scale * se, hits, samples)


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))
