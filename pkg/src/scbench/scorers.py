"""Black-box scorer adapters.

A scorer maps a batch of images (N, C, H, W) with values in [0, 1] to one
class-probability row per image.  Synthetic scorers come with analytically
known per-pixel importance, which makes desk-scale verification of the
estimators possible; the remote adapter bridges to a model server over
HTTP.

Wire protocol of the remote adapter:

* ``GET /v1/meta`` -> ``{"n_classes": int, "input_shape": [C, H, W],
  "labels": [...]?}``
* ``POST /v1/score`` with ``{"shape": [N, C, H, W], "dtype": "f32le",
  "data": "<base64 row-major little-endian f32>"}`` ->
  ``{"probs": [[...] x N]}``
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import requests

from .errors import ContractViolationError, ProtocolError, TransportError, ValidationError

# Slack allowed on sum-to-one for rows that crossed the f32 wire.
REMOTE_SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class Scorer:
    """A black-box class-probability function over image batches."""

    n_classes: int
    input_shape: tuple[int, int, int]  # (C, H, W)
    identity: str
    score_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def score(self, batch: np.ndarray) -> np.ndarray:
        """Score a batch (N, C, H, W) -> (N, n_classes) float64 rows."""
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 4 or batch.shape[1:] != tuple(self.input_shape):
            raise ValidationError(
                f"batch shape {batch.shape} does not match (N, {self.input_shape})"
            )
        out = np.asarray(self.score_fn(batch), dtype=np.float64)
        if out.shape != (batch.shape[0], self.n_classes):
            raise ValidationError(
                f"scorer returned shape {out.shape}, expected {(batch.shape[0], self.n_classes)}"
            )
        return out

    def score_one(self, image: np.ndarray) -> np.ndarray:
        """Score a single (C, H, W) image -> one probability row."""
        return self.score(np.asarray(image)[None])[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Definition of a synthetic scorer.

    kind "linear_softmax": ``weights`` is (n_classes, H, W); class logits
    are sums of weight * pixel intensity (intensity = channel mean) and
    probabilities are their softmax.  Ground-truth importance of pixel
    (y, x) for class c is ``weights[c, y, x] * intensity(y, x)``.

    kind "region_mean": ``regions`` holds one half-open rectangle
    (y0, x0, y1, x1) per class; the class score is the mean intensity
    inside its rectangle, rows normalized to sum 1 (uniform if all zero).
    """

    kind: str
    weights: np.ndarray | None = None
    regions: tuple[tuple[int, int, int, int], ...] | None = None
    channels: int = 1


def _intensity(batch: np.ndarray) -> np.ndarray:
    # Per-pixel intensity: mean over channels, float64 for stable sums.
    return batch.astype(np.float64).mean(axis=1)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _array_digest(arr: np.ndarray) -> str:
    h = hashlib.blake2b(np.ascontiguousarray(arr, dtype="<f8").tobytes(), digest_size=8)
    return h.hexdigest()


def _check_linear_spec(spec: SyntheticSpec) -> np.ndarray:
    if spec.weights is None:
        raise ValidationError("linear scorer spec has no weights")
    weights = np.asarray(spec.weights, dtype=np.float64)
    if weights.ndim != 3:
        raise ValidationError(f"weights must be (n_classes, H, W), got shape {weights.shape}")
    if not np.isfinite(weights).all():
        raise ValidationError("weights contain non-finite values")
    if spec.channels not in (1, 3):
        raise ValidationError(f"channels must be 1 or 3, got {spec.channels}")
    return weights


def linear_softmax_scorer(spec: SyntheticSpec) -> Scorer:
    """Linear logits through a softmax; closed-form importance w * I."""
    if spec.kind != "linear_softmax":
        raise ValidationError(f"expected kind 'linear_softmax', got {spec.kind!r}")
    weights = _check_linear_spec(spec)
    n_classes, h, w = weights.shape
    flat = weights.reshape(n_classes, -1)

    def score_fn(batch: np.ndarray) -> np.ndarray:
        pixels = _intensity(batch).reshape(batch.shape[0], -1)
        return _softmax_rows(pixels @ flat.T)

    return Scorer(
        n_classes=n_classes,
        input_shape=(spec.channels, h, w),
        identity=f"linear_softmax:{_array_digest(weights)}",
        score_fn=score_fn,
    )


def linear_logit_scorer(spec: SyntheticSpec) -> Scorer:
    """Identity-link variant of the linear scorer: rows are raw logits.

    Output rows are not probability distributions.  This scorer exists as
    a verification instrument: with independent Bernoulli masks the exact
    necessity of pixel L has the closed form

        w_L * I(L) + (1 - keep_prob) * sum_{u != L} w_u * I(u)

    which the oracle tests pin down to 1e-9.  Do not use it for the
    insertion/deletion games.
    """
    if spec.kind not in ("linear_softmax", "linear_logit"):
        raise ValidationError(f"expected a linear kind, got {spec.kind!r}")
    weights = _check_linear_spec(spec)
    n_classes, h, w = weights.shape
    flat = weights.reshape(n_classes, -1)

    def score_fn(batch: np.ndarray) -> np.ndarray:
        pixels = _intensity(batch).reshape(batch.shape[0], -1)
        return pixels @ flat.T

    return Scorer(
        n_classes=n_classes,
        input_shape=(spec.channels, h, w),
        identity=f"linear_logit:{_array_digest(weights)}",
        score_fn=score_fn,
    )


def linear_ground_truth(spec: SyntheticSpec, image: np.ndarray, class_id: int) -> np.ndarray:
    """Per-pixel importance w[class] * intensity for a linear scorer."""
    weights = _check_linear_spec(spec)
    return weights[class_id] * _intensity(np.asarray(image)[None])[0]


def _check_regions(
    regions: Sequence[Sequence[int]] | None, h: int, w: int
) -> tuple[tuple[int, int, int, int], ...]:
    if not regions:
        raise ValidationError("region scorer spec has no regions")
    checked = []
    for k, rect in enumerate(regions):
        y0, x0, y1, x1 = (int(v) for v in rect)
        if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
            raise ValidationError(
                f"region {k} = {(y0, x0, y1, x1)} is degenerate or outside {h}x{w}"
            )
        checked.append((y0, x0, y1, x1))
    return tuple(checked)


def region_mean_scorer(spec: SyntheticSpec, height: int, width: int) -> Scorer:
    """Class score = mean intensity in the class rectangle, rows normalized."""
    if spec.kind != "region_mean":
        raise ValidationError(f"expected kind 'region_mean', got {spec.kind!r}")
    if spec.channels not in (1, 3):
        raise ValidationError(f"channels must be 1 or 3, got {spec.channels}")
    regions = _check_regions(spec.regions, height, width)
    n_classes = len(regions)

    def score_fn(batch: np.ndarray) -> np.ndarray:
        pixels = _intensity(batch)
        scores = np.empty((batch.shape[0], n_classes), dtype=np.float64)
        for k, (y0, x0, y1, x1) in enumerate(regions):
            scores[:, k] = pixels[:, y0:y1, x0:x1].mean(axis=(1, 2))
        totals = scores.sum(axis=1, keepdims=True)
        out = np.full_like(scores, 1.0 / n_classes)
        np.divide(scores, totals, out=out, where=totals > 0)
        return out

    ident = ";".join(",".join(str(v) for v in r) for r in regions)
    return Scorer(
        n_classes=n_classes,
        input_shape=(spec.channels, height, width),
        identity=f"region_mean:{height}x{width}:{ident}",
        score_fn=score_fn,
    )


def region_indicator(
    spec: SyntheticSpec, height: int, width: int, class_id: int
) -> np.ndarray:
    """Ground-truth importance map of a region scorer: 1 inside, 0 outside."""
    regions = _check_regions(spec.regions, height, width)
    y0, x0, y1, x1 = regions[class_id]
    out = np.zeros((height, width), dtype=np.float64)
    out[y0:y1, x0:x1] = 1.0
    return out


def _http_error(kind: str, endpoint: str, exc: Exception) -> TransportError:
    return TransportError(f"{kind} talking to scorer at {endpoint}: {exc}")


def remote_scorer(endpoint: str, timeout: float = 30.0, batch_size: int = 32) -> Scorer:
    """Scorer backed by a model server speaking the /v1 wire protocol.

    Requests are chunked into batches of at most ``batch_size`` and the
    probability rows are concatenated in request order.
    """
    if batch_size <= 0:
        raise ValidationError(f"batch_size must be positive, got {batch_size}")
    endpoint = endpoint.rstrip("/")
    try:
        resp = requests.get(endpoint + "/v1/meta", timeout=timeout)
    except requests.RequestException as exc:
        raise _http_error("connection failure", endpoint, exc) from exc
    if resp.status_code != 200:
        raise TransportError(f"scorer at {endpoint} returned HTTP {resp.status_code} for /v1/meta")
    try:
        meta = resp.json()
        n_classes = int(meta["n_classes"])
        input_shape = tuple(int(v) for v in meta["input_shape"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed /v1/meta response from {endpoint}: {exc}") from exc
    if n_classes <= 0 or len(input_shape) != 3:
        raise ProtocolError(
            f"implausible /v1/meta values from {endpoint}: "
            f"n_classes={n_classes}, input_shape={input_shape}"
        )

    def score_chunk(chunk: np.ndarray) -> np.ndarray:
        payload = {
            "shape": [int(v) for v in chunk.shape],
            "dtype": "f32le",
            "data": base64.b64encode(np.ascontiguousarray(chunk, dtype="<f4").tobytes()).decode(
                "ascii"
            ),
        }
        try:
            resp = requests.post(endpoint + "/v1/score", json=payload, timeout=timeout)
        except requests.RequestException as exc:
            raise _http_error("connection failure", endpoint, exc) from exc
        if resp.status_code != 200:
            raise TransportError(
                f"scorer at {endpoint} returned HTTP {resp.status_code} for /v1/score"
            )
        try:
            rows = np.asarray(resp.json()["probs"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed /v1/score response from {endpoint}: {exc}") from exc
        if rows.shape != (chunk.shape[0], n_classes):
            raise ProtocolError(
                f"scorer at {endpoint} returned probs shape {rows.shape}, "
                f"expected {(chunk.shape[0], n_classes)}"
            )
        return rows

    def score_fn(batch: np.ndarray) -> np.ndarray:
        pieces = []
        for start in range(0, batch.shape[0], batch_size):
            pieces.append(score_chunk(batch[start : start + batch_size]))
        rows = np.concatenate(pieces, axis=0) if pieces else np.zeros((0, n_classes))
        sums = rows.sum(axis=1)
        bad = np.nonzero(
            (np.abs(sums - 1.0) > REMOTE_SUM_TOLERANCE) | (rows < -1e-9).any(axis=1)
        )[0]
        if bad.size:
            raise ContractViolationError(
                f"scorer at {endpoint} returned an invalid probability row "
                f"{int(bad[0])} (sum={sums[bad[0]]:.6f})"
            )
        return rows

    return Scorer(
        n_classes=n_classes,
        input_shape=input_shape,  # type: ignore[arg-type]
        identity=f"remote:{endpoint}",
        score_fn=score_fn,
    )
