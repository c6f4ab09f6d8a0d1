"""Deterministic random streams.

All randomness in a run flows from a single 64-bit root seed, through two
mechanisms:

* ``derive_seed`` produces named sub-seeds via a keyed hash (blake2b keyed
  with the root seed over ``"label:index"``), so independent components
  never share a stream by accident.
* ``stream`` opens a counter-based generator for one ``(seed, index)``
  pair.  The index is part of the Philox key, so the i-th stream is
  reproducible without generating any of its predecessors, and generation
  order (or worker count) cannot change the result.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Sub-seed for a named component, stable across platforms and runs."""
    key = (seed & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(f"{label}:{index}".encode(), key=key, digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for stream ``index`` under ``seed`` (Philox, key=(seed, index))."""
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
