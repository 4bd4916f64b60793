"""Counter-based random streams keyed by (seed, purpose, index).

Every stochastic step in the package draws from its own stream so results
are independent of evaluation order and reproducible across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


def stream(seed: int, *key) -> np.random.Generator:
    """A generator for one purpose; identical (seed, key) gives identical draws."""
    entropy = [int(seed) & _MASK64] + [_key_word(part) for part in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))
