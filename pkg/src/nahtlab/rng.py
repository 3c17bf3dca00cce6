"""Splittable, counter-based random streams.

Every source of randomness in a run is a named substream of one master seed,
derived through ``SeedSequence.spawn_key`` and driven by the counter-based
Philox generator.  Streams depend only on their labels, never on how many
other streams exist or in which order they are drawn from, so adding rollout
workers or reordering vectorized episodes can never shift results.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream"]


def _label_to_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"stream labels must be non-negative, got {label}")
        return int(label)
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


def substream(master_seed: int, *path) -> np.random.Generator:
    """Return the generator for the substream named by ``path``.

    ``path`` components may be strings (hashed with crc32) or non-negative
    integers (used verbatim, e.g. episode indices).
    """
    key = tuple(_label_to_key(p) for p in path)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
