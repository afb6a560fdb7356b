"""Keyed random streams.

Every stream is derived from ``(master_seed, *keys)`` so that adding new keys
(more modes, more realizations) never perturbs existing streams.
"""

import zlib

import numpy as np


def _key_int(key):
    if isinstance(key, (int, np.integer)):
        k = int(key)
        # spawn keys must be non-negative
        return 2 * k if k >= 0 else -2 * k - 1
    return zlib.crc32(str(key).encode("utf-8"))


def stream(seed, *keys):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.default_rng(ss)
