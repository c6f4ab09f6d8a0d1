"""Deletion and insertion games and their AUC scores.

Both games consume only the pixel ranking of a saliency map.  Deletion
replaces pixels with a baseline in rank order and records the class
probability as a function of the fraction perturbed; a steep drop (low
AUC) means the necessary pixels were found early.  Insertion restores
pixels into a degraded start image; an early rise (high AUC) means the
sufficient pixels were found early.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rng as rng_mod
from .errors import ValidationError
from .images import DatasetHandle, ImageTensor, load_image
from .masks import MaskConfig, generate_mask_set
from .saliency import (
    SaliencyMap,
    evaluate_masks,
    load_external_map,
    rise_scores,
    shape_scores,
)
from .scorers import Scorer

# Ranking ties are always broken by ascending row then column, so AUCs
# reproduce across platforms.
TIE_BREAK = "score desc, row asc, col asc"

DELETION_BASELINES = ("black", "channel_mean")
INSERTION_STARTS = ("blur", "black")


@dataclass(frozen=True)
class GameConfig:
    """Knobs of one insertion/deletion run.

    steps: curve points beyond the start; step k perturbs the top
        ceil(k * H * W / steps) ranked pixels.
    deletion_baseline: replacement for deleted pixels.
    insertion_start: degraded image the insertion game starts from.
    blur_sigma: Gaussian sigma (pixels) when insertion_start is "blur".
    """

    steps: int = 224
    deletion_baseline: str = "black"
    insertion_start: str = "blur"
    blur_sigma: float = 5.0

    def __post_init__(self):
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps!r}")
        if self.deletion_baseline not in DELETION_BASELINES:
            raise ValidationError(f"unknown deletion_baseline {self.deletion_baseline!r}")
        if self.insertion_start not in INSERTION_STARTS:
            raise ValidationError(f"unknown insertion_start {self.insertion_start!r}")
        if self.insertion_start == "blur" and not self.blur_sigma > 0:
            raise ValidationError(f"blur_sigma must be positive, got {self.blur_sigma!r}")

    def to_dict(self) -> dict:
        return {
            "steps": int(self.steps),
            "deletion_baseline": self.deletion_baseline,
            "insertion_start": self.insertion_start,
            "blur_sigma": float(self.blur_sigma),
            "tie_break": TIE_BREAK,
        }


@dataclass
class ProbabilityCurve:
    """(fraction perturbed, class probability) points of one game."""

    fractions: np.ndarray
    probabilities: np.ndarray
    game: str  # "deletion" | "insertion"
    class_id: int

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.fractions.shape != self.probabilities.shape or self.fractions.ndim != 1:
            raise ValidationError("fractions and probabilities must be matching 1-D arrays")
        if self.game not in ("deletion", "insertion"):
            raise ValidationError(f"unknown game {self.game!r}")
        if len(self.fractions) >= 1:
            if self.fractions[0] != 0.0 or self.fractions[-1] != 1.0:
                raise ValidationError("curve fractions must start at 0 and end at 1")
            if len(self.fractions) > 1 and not np.all(np.diff(self.fractions) > 0):
                raise ValidationError("curve fractions must be strictly increasing")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fractions.tolist(), self.probabilities.tolist()))


def write_curve_csv(curve: ProbabilityCurve, path) -> None:
    """CSV with header ``fraction,probability``, 9 significant digits."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("fraction,probability\n")
        for f, p in curve.points:
            fh.write(f"{f:.9g},{p:.9g}\n")


def rank_pixels(smap: SaliencyMap) -> np.ndarray:
    """Row-major flat pixel indices sorted by descending score.

    Ties keep row-major order (ascending row, then column), making the
    permutation a deterministic total order.
    """
    scores = smap.scores
    flat = scores.ravel()
    bad = np.nonzero(~np.isfinite(flat))[0]
    if bad.size:
        y, x = divmod(int(bad[0]), scores.shape[1])
        raise ValidationError(f"non-finite saliency score at pixel ({y}, {x})")
    return np.argsort(-flat, kind="stable")


def auc(curve: ProbabilityCurve) -> float:
    """Trapezoidal integral of the curve over fraction in [0, 1]."""
    if len(curve.fractions) < 2:
        raise ValidationError("AUC needs at least 2 curve points")
    x = curve.fractions
    y = curve.probabilities
    return float(np.sum(np.diff(x) * (y[:-1] + y[1:]) / 2.0))


def _deletion_target(image: ImageTensor, config: GameConfig) -> np.ndarray:
    if config.deletion_baseline == "black":
        return np.zeros_like(image.data)
    means = image.data.mean(axis=(1, 2), keepdims=True, dtype=np.float64)
    return np.broadcast_to(means.astype(np.float32), image.data.shape).copy()


def _insertion_start(image: ImageTensor, config: GameConfig) -> np.ndarray:
    if config.insertion_start == "black":
        return np.zeros_like(image.data)
    sigma = (0.0, float(config.blur_sigma), float(config.blur_sigma))
    return ndimage.gaussian_filter(image.data, sigma=sigma).astype(np.float32)


def _play_game(
    image: ImageTensor,
    smap: SaliencyMap,
    scorer: Scorer,
    class_id: int,
    config: GameConfig,
    start: np.ndarray,
    target: np.ndarray,
    game: str,
    score_chunk: int = 64,
) -> ProbabilityCurve:
    if image.data.shape != tuple(scorer.input_shape):
        raise ValidationError(
            f"image shape {image.data.shape} does not match scorer input {scorer.input_shape}"
        )
    if smap.scores.shape != image.data.shape[1:]:
        raise ValidationError(
            f"map shape {smap.scores.shape} does not match image {image.data.shape[1:]}"
        )
    order = rank_pixels(smap)
    h, w = smap.scores.shape
    hw = h * w
    steps = int(config.steps)
    counts = [math.ceil(k * hw / steps) for k in range(steps + 1)]

    work = start.copy()
    probabilities = np.empty(steps + 1, dtype=np.float64)
    pending: list[np.ndarray] = [work.copy()]
    pending_base = 0

    def flush():
        nonlocal pending, pending_base
        if not pending:
            return
        rows = scorer.score(np.stack(pending))
        probabilities[pending_base : pending_base + len(pending)] = rows[:, class_id]
        pending_base += len(pending)
        pending = []

    for k in range(1, steps + 1):
        sel = order[counts[k - 1] : counts[k]]
        ys, xs = np.divmod(sel, w)
        work[:, ys, xs] = target[:, ys, xs]
        pending.append(work.copy())
        if len(pending) >= score_chunk:
            flush()
    flush()

    fractions = np.arange(steps + 1, dtype=np.float64) / steps
    fractions[-1] = 1.0
    return ProbabilityCurve(
        fractions=fractions, probabilities=probabilities, game=game, class_id=class_id
    )


def deletion_curve(
    image: ImageTensor,
    smap: SaliencyMap,
    scorer: Scorer,
    class_id: int,
    config: GameConfig,
) -> ProbabilityCurve:
    """Probability curve as top-ranked pixels are replaced by the baseline."""
    target = _deletion_target(image, config)
    return _play_game(
        image, smap, scorer, class_id, config, image.data, target, game="deletion"
    )


def insertion_curve(
    image: ImageTensor,
    smap: SaliencyMap,
    scorer: Scorer,
    class_id: int,
    config: GameConfig,
) -> ProbabilityCurve:
    """Probability curve as top-ranked pixels are restored into the start image."""
    start = _insertion_start(image, config)
    return _play_game(
        image, smap, scorer, class_id, config, start, image.data, game="insertion"
    )


@dataclass
class PerImageResult:
    image_id: str
    method: str
    class_id: int
    insertion_auc: float
    deletion_auc: float


@dataclass
class MethodAggregate:
    method: str
    mean_insertion: float
    mean_deletion: float
    n_images: int
    n_excluded: int


@dataclass
class EvalReport:
    """Per-image and aggregate game results with full provenance."""

    per_image: list[PerImageResult]
    aggregates: list[MethodAggregate]
    exclusions: list[dict]
    mask_config: MaskConfig
    game_config: GameConfig
    scorer_identity: str
    seed: int
    reuse_masks: bool
    artifact_version: str = ""

    def to_dict(self) -> dict:
        return {
            "artifact_version": self.artifact_version,
            "seed": int(self.seed),
            "scorer": self.scorer_identity,
            "mask_config": {
                "grid_h": self.mask_config.grid_h,
                "grid_w": self.mask_config.grid_w,
                "keep_prob": float(self.mask_config.keep_prob),
                "count": self.mask_config.count,
                "target_h": self.mask_config.target_h,
                "target_w": self.mask_config.target_w,
                "seed": self.mask_config.seed,
                "upsample": self.mask_config.upsample,
            },
            "game_config": self.game_config.to_dict(),
            "reuse_masks": self.reuse_masks,
            "aggregates": [
                {
                    "method": a.method,
                    "mean_insertion": a.mean_insertion,
                    "mean_deletion": a.mean_deletion,
                    "n_images": a.n_images,
                    "n_excluded": a.n_excluded,
                }
                for a in self.aggregates
            ],
            "per_image": [
                {
                    "image_id": r.image_id,
                    "method": r.method,
                    "class_id": r.class_id,
                    "insertion_auc": r.insertion_auc,
                    "deletion_auc": r.deletion_auc,
                }
                for r in self.per_image
            ],
            "exclusions": self.exclusions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        """Aligned text table: one row per method, insertion and deletion means."""
        lines = [f"{'Method':<12} {'Insertion':>10} {'Deletion':>10} {'Images':>7}"]
        for a in self.aggregates:
            ins = f"{a.mean_insertion:.4f}" if a.n_images else "-"
            dele = f"{a.mean_deletion:.4f}" if a.n_images else "-"
            lines.append(f"{a.method:<12} {ins:>10} {dele:>10} {a.n_images:>7}")
        return "\n".join(lines) + "\n"


def run_benchmark(
    dataset: DatasetHandle,
    methods: list[str],
    scorer: Scorer,
    mask_config: MaskConfig,
    game_config: GameConfig,
    reuse_masks: bool = True,
    workers: int = 1,
    batch_size: int = 64,
    artifact_version: str = "",
) -> EvalReport:
    """Insertion/deletion AUCs for every (image, method) pair.

    The evaluated class is the scorer's top-1 on the unperturbed image.
    With ``reuse_masks`` (default) one mask set serves every image;
    otherwise each image gets a fresh set under a derived sub-seed.
    Missing external maps exclude that image from the method's mean and
    are reported.
    """
    if not dataset.entries:
        raise ValidationError("dataset has no images")
    known = {"shape", "rise", "external"}
    bad = [m for m in methods if m not in known]
    if bad:
        raise ValidationError(f"unknown methods {bad}; choose from {sorted(known)}")

    c, h, w = scorer.input_shape
    needs_masks = any(m in ("shape", "rise") for m in methods)
    shared_masks = generate_mask_set(mask_config) if needs_masks and reuse_masks else None

    per_image: list[PerImageResult] = []
    exclusions: list[dict] = []

    for index, (image_id, path) in enumerate(dataset.entries):
        image = load_image(path, target=(h, w))
        if image.data.shape[0] != c:
            raise ValidationError(
                f"image {image_id!r} has {image.data.shape[0]} channels, scorer expects {c}"
            )
        class_id = int(np.argmax(scorer.score_one(image.data)))

        mask_set = shared_masks
        if needs_masks and not reuse_masks:
            fresh = MaskConfig(
                grid_h=mask_config.grid_h,
                grid_w=mask_config.grid_w,
                keep_prob=mask_config.keep_prob,
                count=mask_config.count,
                target_h=mask_config.target_h,
                target_w=mask_config.target_w,
                seed=rng_mod.derive_seed(mask_config.seed, "mask-set", index),
                upsample=mask_config.upsample,
            )
            mask_set = generate_mask_set(fresh)

        evaluations = None
        if mask_set is not None and {"shape", "rise"} & set(methods):
            evaluations = evaluate_masks(
                image.data, mask_set, scorer, class_id, batch_size, workers
            )

        for method in methods:
            if method == "shape":
                smap = shape_scores(
                    image.data, mask_set, scorer, class_id,
                    image_id=image_id, evaluations=evaluations,
                )
            elif method == "rise":
                smap = rise_scores(
                    image.data, mask_set, scorer, class_id,
                    image_id=image_id, evaluations=evaluations,
                )
            else:
                map_path = dataset.maps.get(image_id)
                if map_path is None:
                    exclusions.append(
                        {"image_id": image_id, "method": method, "reason": "missing external map"}
                    )
                    continue
                smap = load_external_map(map_path)
                if smap.scores.shape != (h, w):
                    exclusions.append(
                        {
                            "image_id": image_id,
                            "method": method,
                            "reason": f"map shape {smap.scores.shape} != {(h, w)}",
                        }
                    )
                    continue

            ins = auc(insertion_curve(image, smap, scorer, class_id, game_config))
            dele = auc(deletion_curve(image, smap, scorer, class_id, game_config))
            per_image.append(
                PerImageResult(
                    image_id=image_id,
                    method=method,
                    class_id=class_id,
                    insertion_auc=ins,
                    deletion_auc=dele,
                )
            )

    aggregates = []
    for method in methods:
        rows = [r for r in per_image if r.method == method]
        excluded = sum(1 for e in exclusions if e["method"] == method)
        if rows:
            mean_ins = float(np.mean([r.insertion_auc for r in rows]))
            mean_del = float(np.mean([r.deletion_auc for r in rows]))
        else:
            mean_ins = mean_del = float("nan")
        aggregates.append(
            MethodAggregate(
                method=method,
                mean_insertion=mean_ins,
                mean_deletion=mean_del,
                n_images=len(rows),
                n_excluded=excluded,
            )
        )

    return EvalReport(
        per_image=per_image,
        aggregates=aggregates,
        exclusions=exclusions,
        mask_config=mask_config,
        game_config=game_config,
        scorer_identity=scorer.identity,
        seed=mask_config.seed,
        reuse_masks=reuse_masks,
        artifact_version=artifact_version,
    )
