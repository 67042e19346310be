"""Counter-based random substreams.

Each replication draws from its own Philox stream. The key is a hash of the
master seed and a tuple of labels; the replication index occupies the high
word of the 256-bit counter, so streams never overlap and a replication's
draws do not depend on how work is split across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_key", "replication_rng", "partition"]


def stream_key(seed: int, *labels) -> np.ndarray:
    """128-bit Philox key derived from ``seed`` and ``labels``."""
    if seed is None:
        raise ValueError("a seed is required")
    text = repr((int(seed),) + tuple(str(x) for x in labels)).encode()
    digest = hashlib.blake2b(text, digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def replication_rng(key: np.ndarray, index: int) -> np.random.Generator:
    """Generator for replication ``index`` of the stream identified by ``key``."""
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def partition(n: int, chunk: int) -> list[range]:
    """Split ``range(n)`` into consecutive blocks of at most ``chunk`` indices."""
    return [range(i, min(i + chunk, n)) for i in range(0, n, chunk)]
