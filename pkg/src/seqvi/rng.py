"""Named, reproducible random substreams.

Every random draw in the toolkit flows from a single user seed through
substreams keyed by (seed, label, indices...).  Labels are hashed with
BLAKE2b so stream identities are stable across platforms and runs, and a
stream can be re-derived from its tags alone (no generator state needs to
be serialized for resumable training).
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "tag_bytes"]


def tag_bytes(data: bytes) -> int:
    """Stable 64-bit digest of raw bytes, for content-keyed streams."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def _as_entropy(tag) -> int:
    if isinstance(tag, str):
        return tag_bytes(tag.encode("utf-8"))
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    raise TypeError(f"substream tags must be str or int, got {type(tag)!r}")


def substream(*tags) -> np.random.Generator:
    """Generator for the substream named by `tags` (ints and strings)."""
    if not tags:
        raise ValueError("substream requires at least one tag")
    entropy = [_as_entropy(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
