"""Per-episode seed derivation.

Episode seeds are drawn from a :class:`numpy.random.SeedSequence` keyed by
``(base_seed, tag, index)`` so training, demonstration and evaluation streams
never share episodes for the same base seed.
"""

from __future__ import annotations

import zlib

import numpy as np

TRAIN = "train"
DEMO = "demo"
EVAL = "eval"


def episode_seed(base_seed: int, index: int, tag: str = TRAIN) -> int:
    if base_seed < 0 or index < 0:
        raise ValueError("seeds and episode indices must be nonnegative")
    ss = np.random.SeedSequence([int(base_seed), zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_rng(base_seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), zlib.crc32(tag.encode())]))
