"""Named random streams derived from a single 64-bit seed.

Each consumer asks for a stream by name, so adding a new consumer never
shifts the numbers another one sees.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *names)``.

    >>> a = stream(7, "stockgen", "layers").integers(100)
    >>> b = stream(7, "stockgen", "layers").integers(100)
    >>> a == b
    True
    """
    spawn_key = tuple(n if isinstance(n, int) else _key(str(n)) for n in names)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))
