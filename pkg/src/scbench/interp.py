"""Bilinear resampling with half-pixel-centered sampling.

Output pixel (i, j) samples the source at

    sy = (i + 0.5) * (src_h / out_h) - 0.5
    sx = (j + 0.5) * (src_w / out_w) - 0.5

clamped to the source bounds, then blends the four surrounding texels
with convex weights.  Convexity keeps values of a [0, 1] input inside
[0, 1].  The same routine resizes mask grids and decoded images so the
two paths cross-check each other.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _sample_coords(n_src: int, n_out: int) -> np.ndarray:
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_src / n_out) - 0.5
    return np.clip(c, 0.0, float(n_src - 1))


def bilinear_resize(src: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Resize a 2-D array to ``out_shape`` = (H, W).  Returns float64."""
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 2:
        raise ValidationError(f"expected a 2-D array, got shape {src.shape}")
    out_h, out_w = int(out_shape[0]), int(out_shape[1])
    if out_h <= 0 or out_w <= 0:
        raise ValidationError(f"output shape must be positive, got {out_shape}")

    sy = _sample_coords(src.shape[0], out_h)
    sx = _sample_coords(src.shape[1], out_w)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, src.shape[0] - 1)
    x1 = np.minimum(x0 + 1, src.shape[1] - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]

    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bottom * fy
