"""Deterministic random substreams derived from one 64-bit seed.

Every stream is ``np.random.default_rng(SeedSequence(seed, spawn_key=key))``
where ``key`` is a tuple of small integers naming the stream, e.g.
``(sim, STREAM_TRANSITIONS, episode)``.  Text labels (policy names) are
mapped to integers with CRC32 so keys do not depend on list order.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAM_INSTANCE = 0
STREAM_INITIAL = 1
STREAM_TRANSITIONS = 2
STREAM_POLICY = 3


def label(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(x) for x in key))
    return np.random.default_rng(ss)


def child_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed for a named substream."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(x) for x in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
