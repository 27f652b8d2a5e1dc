"""Named random substreams derived from one seed.

A stream is keyed by ``(seed, *names)``, so adding a subject or a purpose
never shifts the draws of any other stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(part).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *names) -> np.random.Generator:
    """Return a generator for the stream ``names`` under ``seed``."""
    entropy = [_key(seed)] + [_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *names) -> int:
    return int(substream(seed, *names).integers(0, 2**31 - 1))
