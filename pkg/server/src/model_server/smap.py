"""Writer for the SMAP saliency-map interchange format.

Layout (all little-endian): magic ``SMAP``, u16 version=1, u32 height,
u32 width, u32 class_id, u8 method code, u64 config digest, then
height*width row-major f32 scores.  Maps exported by this server always
carry the "external" method code (3).
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
METHOD_EXTERNAL = 3

_HEADER = struct.Struct("<4sH3IBQ")


def config_digest(text: str) -> int:
    """64-bit digest of a provenance string (architecture, variant, weights)."""
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def write_smap(scores: np.ndarray, class_id: int, digest: int, path) -> None:
    scores = np.asarray(scores, dtype=np.float32)
    if scores.ndim != 2:
        raise ValueError(f"scores must be 2-D, got shape {scores.shape}")
    h, w = scores.shape
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                SMAP_MAGIC, SMAP_VERSION, h, w, int(class_id), METHOD_EXTERNAL,
                digest & 0xFFFFFFFFFFFFFFFF,
            )
        )
        fh.write(np.ascontiguousarray(scores, dtype="<f4").tobytes())
