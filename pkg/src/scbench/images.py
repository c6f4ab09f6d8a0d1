"""Image decoding, encoding and dataset handling.

Images are (C, H, W) float32 tensors in [0, 1], C in {1, 3}.  PNG and
8-bit PPM/PGM files are supported; resizing reuses the same bilinear
kernel as mask upsampling so the two paths stay numerically consistent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ValidationError
from .interp import bilinear_resize

_SUPPORTED_FORMATS = {"PNG", "PPM"}
_IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


@dataclass
class ImageTensor:
    """One decoded image."""

    data: np.ndarray  # (C, H, W) float32 in [0, 1]
    image_id: str = ""
    source_path: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] not in (1, 3):
            raise ValidationError(
                f"image data must be (C, H, W) with C in {{1, 3}}, got shape {self.data.shape}"
            )
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"image values must lie in [0, 1], got [{lo}, {hi}]")


def load_image(path, target: tuple[int, int] | None = None) -> ImageTensor:
    """Decode a PNG or 8-bit PPM and optionally resize to (H, W)."""
    path = os.fspath(path)
    try:
        with Image.open(path) as im:
            if im.format not in _SUPPORTED_FORMATS:
                raise FormatError(f"unsupported image format {im.format!r} in {path!r}")
            if im.mode in ("1", "L", "I;16", "I"):
                im = im.convert("L")
            else:
                im = im.convert("RGB")
            pixels = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot identify image file {path!r}: {exc}") from exc

    data = pixels.astype(np.float32) / 255.0
    if data.ndim == 2:
        data = data[None, :, :]
    else:
        data = data.transpose(2, 0, 1)

    if target is not None and tuple(target) != data.shape[1:]:
        th, tw = int(target[0]), int(target[1])
        resized = np.stack([bilinear_resize(ch, (th, tw)) for ch in data])
        data = resized.astype(np.float32)

    stem = Path(path).stem
    return ImageTensor(data=data, image_id=stem, source_path=path)


def save_image(image: ImageTensor | np.ndarray, path) -> None:
    """Write a tensor as an 8-bit PNG (values rounded to the nearest level)."""
    data = image.data if isinstance(image, ImageTensor) else np.asarray(image)
    if data.ndim != 3 or data.shape[0] not in (1, 3):
        raise ValidationError(f"expected (C, H, W) data with C in {{1, 3}}, got {data.shape}")
    levels = np.clip(np.rint(data.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    if levels.shape[0] == 1:
        Image.fromarray(levels[0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(levels.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


@dataclass
class DatasetHandle:
    """A list of (image_id, path) entries plus optional per-image map paths."""

    entries: list[tuple[str, str]]
    maps: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [image_id for image_id, _ in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate image ids in dataset: {dupes}")


def scan_dataset(root) -> DatasetHandle:
    """Build a DatasetHandle from a directory.

    Every *.png / *.ppm / *.pgm file becomes an entry keyed by its stem; a
    sibling ``<stem>.smap`` file registers as that image's external map.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"dataset directory {str(root)!r} does not exist")
    entries = []
    maps = {}
    for path in sorted(root.iterdir()):
        if path.suffix.lower() in _IMAGE_SUFFIXES:
            entries.append((path.stem, str(path)))
            smap = path.with_suffix(".smap")
            if smap.exists():
                maps[path.stem] = str(smap)
    return DatasetHandle(entries=entries, maps=maps)
