"""Saliency estimators and the exact enumeration oracle.

Two complementary per-pixel weightings over the same pool of masked-image
scores:

* necessity ("shape"): the average drop in class probability over masks,
  weighted by how strongly each mask removed the pixel, i.e.
  ``sum_i shift_i * (1 - M_i) / sum_i (1 - M_i)``.  A pixel scores high
  when hiding it tends to hurt the class.
* sufficiency ("rise"): the average masked-image probability weighted by
  mask presence, ``sum_i p_i * M_i / sum_i M_i``.  A pixel scores high
  when keeping it tends to preserve the class.

``exact_necessity`` evaluates the necessity definition by enumerating all
binary grids with their exact probabilities; it bounds the Monte Carlo
estimator in tests.

SMAP file format (emitted and consumed): magic ``SMAP``, little-endian
u16 version=1, u32 (h, w, class_id), u8 method code, u64 config digest,
then h*w row-major little-endian f32 scores.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EnumerationBoundError, FormatError, ValidationError
from .masks import MaskConfig, MaskSet, enumerate_binary_grids, grid_probabilities
from .scorers import Scorer

SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
_SMAP_HEADER = struct.Struct("<4sH3IBQ")

METHOD_CODES = {"shape": 1, "rise": 2, "external": 3, "exact": 4}
_CODE_METHODS = {v: k for k, v in METHOD_CODES.items()}

DEFAULT_BATCH_SIZE = 64


@dataclass
class SaliencyMap:
    """Per-pixel scores for one (image, class, method) triple."""

    scores: np.ndarray  # (H, W) float64, all finite
    class_id: int
    method: str
    image_id: str = ""
    config_digest: int = 0
    degenerate_pixels: int = 0  # pixels whose weight pool was empty, scored 0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise ValidationError(f"scores must be 2-D, got shape {self.scores.shape}")
        if not np.isfinite(self.scores).all():
            raise ValidationError("saliency scores contain non-finite values")
        if self.method not in METHOD_CODES:
            raise ValidationError(f"unknown method {self.method!r}")


def config_digest(mask_config: MaskConfig, scorer_identity: str) -> int:
    """64-bit digest binding a mask configuration to a scorer identity."""
    text = mask_config.canonical_string() + "|" + scorer_identity
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def prediction_shift(p_orig: float, p_masked: float) -> float:
    """Signed change in class probability when the mask is applied.

    Positive when masking hurts the class; masking can also raise a
    class's probability, in which case the shift is negative.
    """
    return float(p_orig) - float(p_masked)


class MaskEvaluations(NamedTuple):
    """Scorer outputs for one (image, class) over a whole mask set."""

    p_orig: float
    p_masked: np.ndarray  # (N,) float64


def _check_dims(image: np.ndarray, mask_set: MaskSet, scorer: Scorer, class_id: int) -> None:
    if image.ndim != 3 or image.shape != tuple(scorer.input_shape):
        raise ValidationError(
            f"image shape {image.shape} does not match scorer input {scorer.input_shape}"
        )
    cfg = mask_set.config
    if (cfg.target_h, cfg.target_w) != image.shape[1:]:
        raise ValidationError(
            f"mask size {(cfg.target_h, cfg.target_w)} does not match image {image.shape[1:]}"
        )
    if not 0 <= class_id < scorer.n_classes:
        raise ValidationError(f"class_id {class_id} out of range [0, {scorer.n_classes})")


def evaluate_masks(
    image: np.ndarray,
    mask_set: MaskSet,
    scorer: Scorer,
    class_id: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    workers: int = 1,
) -> MaskEvaluations:
    """Score image * mask for every mask in the set.

    The batch partition depends only on ``batch_size``; results land in a
    preallocated array slot per batch, so worker count cannot change the
    output.
    """
    image = np.asarray(image, dtype=np.float32)
    _check_dims(image, mask_set, scorer, class_id)
    if batch_size <= 0:
        raise ValidationError(f"batch_size must be positive, got {batch_size}")

    p_orig = float(scorer.score_one(image)[class_id])
    n = len(mask_set)
    p_masked = np.empty(n, dtype=np.float64)
    ranges = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]

    def run(bounds: tuple[int, int]) -> None:
        start, stop = bounds
        vals = mask_set.values_batch(start, stop)
        masked = image[None, :, :, :] * vals[:, None, :, :]
        p_masked[start:stop] = scorer.score(masked)[:, class_id]

    if workers <= 1:
        for bounds in ranges:
            run(bounds)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, ranges))
    return MaskEvaluations(p_orig=p_orig, p_masked=p_masked)


def _pixel_weighted_sums(
    mask_set: MaskSet,
    coefficients: np.ndarray,
    weights: np.ndarray,
    complement: bool,
    batch_size: int,
) -> tuple[np.ndarray, np.ndarray]:
    """num(p) = sum_i c_i * w_i(p) and den(p) = sum_i weight_i * w_i(p).

    ``w_i`` is ``1 - M_i`` when ``complement`` else ``M_i``.  Batches are
    accumulated in mask-index order into float64, which keeps the result
    bit-identical at any parallelism level upstream.
    """
    cfg = mask_set.config
    hw = cfg.target_h * cfg.target_w
    num = np.zeros(hw, dtype=np.float64)
    den = np.zeros(hw, dtype=np.float64)
    for start in range(0, len(mask_set), batch_size):
        stop = min(start + batch_size, len(mask_set))
        vals = mask_set.values_batch(start, stop).reshape(stop - start, hw).astype(np.float64)
        w = (1.0 - vals) if complement else vals
        num += (coefficients[start:stop, None] * w).sum(axis=0)
        den += (weights[start:stop, None] * w).sum(axis=0)
    shape = (cfg.target_h, cfg.target_w)
    return num.reshape(shape), den.reshape(shape)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, int]:
    scores = np.zeros_like(num)
    good = den != 0.0
    np.divide(num, den, out=scores, where=good)
    return scores, int(num.size - np.count_nonzero(good))


def _prepare_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,):
        raise ValidationError(f"weights shape {weights.shape} does not match {n} masks")
    return weights


def shape_scores(
    image: np.ndarray,
    mask_set: MaskSet,
    scorer: Scorer,
    class_id: int,
    weights: np.ndarray | None = None,
    normalization: str = "empirical",
    batch_size: int = DEFAULT_BATCH_SIZE,
    workers: int = 1,
    image_id: str = "",
    evaluations: MaskEvaluations | None = None,
) -> SaliencyMap:
    """Necessity map: weighted average probability drop given pixel masked out.

    ``weights`` (default uniform) multiply each mask's contribution; passing
    each enumerated mask's exact probability reproduces the closed-form
    definition.  ``normalization`` is "empirical" (per-pixel sum of mask
    complements, the default) or "analytic" ((1 - keep_prob) * total weight).
    """
    image = np.asarray(image, dtype=np.float32)
    if evaluations is None:
        evaluations = evaluate_masks(image, mask_set, scorer, class_id, batch_size, workers)
    else:
        _check_dims(image, mask_set, scorer, class_id)
    if normalization not in ("empirical", "analytic"):
        raise ValidationError(f"unknown normalization {normalization!r}")

    w = _prepare_weights(weights, len(mask_set))
    shifts = evaluations.p_orig - evaluations.p_masked
    num, den = _pixel_weighted_sums(mask_set, w * shifts, w, complement=True, batch_size=batch_size)
    if normalization == "analytic":
        den = np.full_like(den, (1.0 - float(mask_set.config.keep_prob)) * float(w.sum()))
    scores, degenerate = _safe_ratio(num, den)
    return SaliencyMap(
        scores=scores,
        class_id=class_id,
        method="shape",
        image_id=image_id,
        config_digest=config_digest(mask_set.config, scorer.identity),
        degenerate_pixels=degenerate,
    )


def rise_scores(
    image: np.ndarray,
    mask_set: MaskSet,
    scorer: Scorer,
    class_id: int,
    weights: np.ndarray | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    workers: int = 1,
    image_id: str = "",
    evaluations: MaskEvaluations | None = None,
) -> SaliencyMap:
    """Sufficiency map: weighted average masked-image probability given pixel kept."""
    image = np.asarray(image, dtype=np.float32)
    if evaluations is None:
        evaluations = evaluate_masks(image, mask_set, scorer, class_id, batch_size, workers)
    else:
        _check_dims(image, mask_set, scorer, class_id)

    w = _prepare_weights(weights, len(mask_set))
    num, den = _pixel_weighted_sums(
        mask_set, w * evaluations.p_masked, w, complement=False, batch_size=batch_size
    )
    scores, degenerate = _safe_ratio(num, den)
    return SaliencyMap(
        scores=scores,
        class_id=class_id,
        method="rise",
        image_id=image_id,
        config_digest=config_digest(mask_set.config, scorer.identity),
        degenerate_pixels=degenerate,
    )


def exact_necessity(
    image: np.ndarray,
    config: MaskConfig,
    scorer: Scorer,
    class_id: int,
    batch_size: int = 512,
    image_id: str = "",
) -> SaliencyMap:
    """Exact necessity by enumerating every binary grid with its probability.

    score(p) = sum_m shift(m) * (1 - m(p)) * P[M=m] / (1 - keep_prob), with
    P[M=m] = keep_prob^ones * (1-keep_prob)^zeros.  Requires upsample=False
    and at most 2^20 grids.
    """
    if config.upsample:
        raise ValidationError("exact_necessity requires upsample=False")
    cells = config.grid_h * config.grid_w
    if cells > 20:
        raise EnumerationBoundError(
            f"{config.grid_h}x{config.grid_w} grid has {cells} cells; "
            "exact enumeration is capped at 2^20 masks"
        )
    image = np.asarray(image, dtype=np.float32)
    grids = enumerate_binary_grids(config.grid_h, config.grid_w)
    probs = grid_probabilities(grids, config.keep_prob)
    enum_config = MaskConfig(
        grid_h=config.grid_h,
        grid_w=config.grid_w,
        keep_prob=config.keep_prob,
        count=len(grids),
        target_h=config.target_h,
        target_w=config.target_w,
        seed=config.seed,
        upsample=False,
    )
    mask_set = MaskSet.from_arrays(grids.astype(np.float32), enum_config)
    evaluations = evaluate_masks(image, mask_set, scorer, class_id, batch_size)
    shifts = evaluations.p_orig - evaluations.p_masked
    num, _ = _pixel_weighted_sums(
        mask_set, probs * shifts, probs, complement=True, batch_size=batch_size
    )
    scores = num / (1.0 - float(config.keep_prob))
    return SaliencyMap(
        scores=scores,
        class_id=class_id,
        method="exact",
        image_id=image_id,
        config_digest=config_digest(config, scorer.identity),
    )


def save_map(smap: SaliencyMap, path) -> None:
    """Write a map in SMAP format (see module docstring)."""
    h, w = smap.scores.shape
    header = _SMAP_HEADER.pack(
        SMAP_MAGIC,
        SMAP_VERSION,
        h,
        w,
        smap.class_id,
        METHOD_CODES[smap.method],
        smap.config_digest & 0xFFFFFFFFFFFFFFFF,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(smap.scores, dtype="<f4").tobytes())


def load_map(path) -> SaliencyMap:
    """Read an SMAP file, validating magic, version, method and length."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != SMAP_MAGIC:
        raise FormatError(f"bad magic in {path!r}, expected SMAP", offset=0)
    if len(data) < _SMAP_HEADER.size:
        raise FormatError(f"truncated SMAP header in {path!r}", offset=len(data))
    magic, version, h, w, class_id, method_code, digest = _SMAP_HEADER.unpack(
        data[: _SMAP_HEADER.size]
    )
    if version != SMAP_VERSION:
        raise FormatError(f"unsupported SMAP version {version} in {path!r}", offset=4)
    if method_code not in _CODE_METHODS:
        raise FormatError(f"unknown SMAP method code {method_code} in {path!r}", offset=18)
    expected = _SMAP_HEADER.size + 4 * h * w
    if len(data) < expected:
        raise FormatError(
            f"truncated SMAP payload in {path!r}: expected {expected} bytes", offset=len(data)
        )
    scores = np.frombuffer(data[_SMAP_HEADER.size : expected], dtype="<f4").reshape(h, w)
    return SaliencyMap(
        scores=scores.astype(np.float64),
        class_id=int(class_id),
        method=_CODE_METHODS[method_code],
        config_digest=int(digest),
    )


def load_external_map(path) -> SaliencyMap:
    """Load a map produced elsewhere; the result always carries method 'external'."""
    smap = load_map(path)
    smap.method = "external"
    return smap
