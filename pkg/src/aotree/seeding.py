"""Deterministic per-node randomness.

Every random draw made while building a tree comes from a generator keyed
by ``(master seed, purpose, node path)``. Two runs that visit the same node
therefore see the same numbers regardless of visiting order, which is what
makes subtree reuse and common-random-number comparisons possible.
"""

import hashlib
import struct

import numpy as np


def _digest(seed, tag, path):
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<q", int(seed)))
    h.update(tag.encode())
    h.update(struct.pack(f"<{len(path)}q", *path))
    return h.digest()


def node_rng(seed, path, tag):
    """Generator for the node at ``path`` used for ``tag``-purpose draws."""
    key = int.from_bytes(_digest(seed, tag, path), "little")
    return np.random.Generator(np.random.PCG64(key))


def unit_hash(seed, path, tag="beta"):
    """Deterministic pseudo-uniform number in [0, 1) for ``path``."""
    word = int.from_bytes(_digest(seed, tag, path)[:8], "little")
    return word / 2.0**64
