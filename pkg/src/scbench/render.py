"""Heatmap overlays and curve plots.

The heatmap color ramp is fixed so outputs reproduce byte-for-byte:
linear interpolation through five anchors

    0.00 -> (0, 0, 255)    blue
    0.25 -> (0, 255, 255)  cyan
    0.50 -> (0, 255, 0)    green
    0.75 -> (255, 255, 0)  yellow
    1.00 -> (255, 0, 0)    red

applied to the min-max normalized map and alpha-blended at 0.5 over the
grayscale image.  Curve plots are hand-written SVG: deterministic text,
diffable in tests.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ValidationError
from .images import ImageTensor, save_image
from .metrics import ProbabilityCurve, auc
from .saliency import SaliencyMap

log = logging.getLogger(__name__)

RAMP_POSITIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
RAMP_COLORS = ((0, 0, 255), (0, 255, 255), (0, 255, 0), (255, 255, 0), (255, 0, 0))

PLOT_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def colorize(t: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] through the ramp -> (..., 3) float64 in [0, 1]."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    channels = [
        np.interp(t, RAMP_POSITIONS, [c[i] / 255.0 for c in RAMP_COLORS]) for i in range(3)
    ]
    return np.stack(channels, axis=-1)


def render_heatmap(image: ImageTensor, smap: SaliencyMap, out_path) -> None:
    """Overlay the normalized map on the grayscale image and write a PNG."""
    if smap.scores.shape != image.data.shape[1:]:
        raise ValidationError(
            f"map shape {smap.scores.shape} does not match image {image.data.shape[1:]}"
        )
    scores = smap.scores
    lo = float(scores.min())
    hi = float(scores.max())
    if hi == lo:
        log.warning("constant saliency map; rendering uniform mid-ramp")
        t = np.full(scores.shape, 0.5)
    else:
        t = (scores - lo) / (hi - lo)
    rgb = colorize(t)
    gray = image.data.astype(np.float64).mean(axis=0)
    blended = 0.5 * rgb + 0.5 * gray[:, :, None]
    save_image(blended.transpose(2, 0, 1).astype(np.float32), out_path)


def _svg_line(x1, y1, x2, y2, stroke, width="1") -> str:
    return (
        f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
        f'stroke="{stroke}" stroke-width="{width}"/>'
    )


def export_curve_plot(
    curves: list[ProbabilityCurve], out_path, labels: list[str] | None = None
) -> None:
    """Write an SVG line plot of probability curves with AUC annotations."""
    if not curves:
        raise ValidationError("no curves to plot")
    if labels is None:
        labels = [f"{c.game} #{i}" for i, c in enumerate(curves)]
    if len(labels) != len(curves):
        raise ValidationError(f"{len(labels)} labels for {len(curves)} curves")

    width, height = 640, 440
    x0, y0, x1, y1 = 70.0, 20.0, 610.0, 380.0  # plot rectangle

    def px(f: float) -> float:
        return x0 + f * (x1 - x0)

    def py(p: float) -> float:
        return y1 - p * (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(_svg_line(px(tick), y1, px(tick), y1 + 5, "#000000"))
        parts.append(
            f'<text x="{px(tick):.2f}" y="{y1 + 20:.2f}" font-size="12" '
            f'text-anchor="middle">{tick:g}</text>'
        )
        parts.append(_svg_line(x0 - 5, py(tick), x0, py(tick), "#000000"))
        parts.append(
            f'<text x="{x0 - 10:.2f}" y="{py(tick) + 4:.2f}" font-size="12" '
            f'text-anchor="end">{tick:g}</text>'
        )
    parts.append(_svg_line(x0, y1, x1, y1, "#000000"))
    parts.append(_svg_line(x0, y0, x0, y1, "#000000"))
    parts.append(
        f'<text x="{(x0 + x1) / 2:.2f}" y="{y1 + 40:.2f}" font-size="13" '
        f'text-anchor="middle">fraction of pixels perturbed</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">class probability</text>'
    )

    for i, (curve, label) in enumerate(zip(curves, labels)):
        color = PLOT_PALETTE[i % len(PLOT_PALETTE)]
        pts = " ".join(
            f"{px(f):.2f},{py(min(max(p, 0.0), 1.0)):.2f}" for f, p in curve.points
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = y0 + 16 + 18 * i
        parts.append(_svg_line(x1 - 150, ly - 4, x1 - 130, ly - 4, color, width="2"))
        parts.append(
            f'<text x="{x1 - 125:.2f}" y="{ly:.2f}" font-size="12">'
            f"{label} (AUC={auc(curve):.3f})</text>"
        )
    parts.append("</svg>")
    with open(out_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
