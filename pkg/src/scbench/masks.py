"""Random mask generation.

Small binary grids are drawn cell-wise Bernoulli(keep_prob), bilinearly
upsampled to image resolution and cropped at a random integer shift, one
independent counter-based stream per mask index.  Upsampled masks are
fractional and all downstream estimators consume them as real weights;
nothing is re-binarized.

The MSK1 file format freezes a generated set for cross-run comparison:
magic ``MSK1``, little-endian u32 (count, grid_h, grid_w, target_h,
target_w), u64 seed, f32 keep_prob, u8 upsample flag, then ``count``
masks as row-major little-endian f32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import EnumerationBoundError, FormatError, ResourceError, ValidationError
from .interp import bilinear_resize

DEFAULT_GRID = (7, 7)
DEFAULT_KEEP_PROB = 0.1
DEFAULT_COUNT = 6000

ENUMERATION_CELL_LIMIT = 20

MSK1_MAGIC = b"MSK1"
_MSK1_HEADER = struct.Struct("<5IQfB")

# Materialization cap; a set whose values exceed it streams on demand.
DEFAULT_BUDGET_BYTES = 2 << 30


@dataclass(frozen=True)
class MaskConfig:
    """Parameters of one mask set.

    grid_h, grid_w: small binary grid size (cells).
    keep_prob: probability a grid cell is 1, i.e. the pixel stays visible.
    count: number of masks in the set.
    target_h, target_w: full image resolution the masks are used at.
    seed: 64-bit root seed for the per-index streams.
    upsample: when False the grid is used at image resolution directly
        (grid size must equal target size); exact-oracle test mode.
    """

    grid_h: int
    grid_w: int
    keep_prob: float
    count: int
    target_h: int
    target_w: int
    seed: int
    upsample: bool = True

    def __post_init__(self):
        for name in ("grid_h", "grid_w", "count", "target_h", "target_w"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 < float(self.keep_prob) < 1.0:
            raise ValidationError(f"keep_prob must lie in (0, 1), got {self.keep_prob!r}")
        if not self.upsample and (self.grid_h, self.grid_w) != (self.target_h, self.target_w):
            raise ValidationError(
                "upsample=False requires grid size == target size, got "
                f"{(self.grid_h, self.grid_w)} vs {(self.target_h, self.target_w)}"
            )

    @property
    def cell_h(self) -> int:
        """Upsampling factor along rows, ceil(target_h / grid_h)."""
        return -(-self.target_h // self.grid_h)

    @property
    def cell_w(self) -> int:
        return -(-self.target_w // self.grid_w)

    def mask_bytes(self) -> int:
        """Bytes needed to materialize every mask as f32."""
        return 4 * self.count * self.target_h * self.target_w

    def canonical_string(self) -> str:
        """Stable textual form, hashed into map digests.

        keep_prob is canonicalized at f32 resolution, the precision the MSK1
        format stores, so a frozen-and-reloaded set digests like its source.
        """
        return (
            f"grid={self.grid_h}x{self.grid_w};keep={np.float32(self.keep_prob):.9g};"
            f"count={self.count};target={self.target_h}x{self.target_w};"
            f"seed={self.seed};upsample={int(self.upsample)}"
        )


@dataclass
class Mask:
    """One full-resolution mask plus the grid and shift it came from."""

    values: np.ndarray  # (target_h, target_w) float32 in [0, 1]
    source_grid: np.ndarray | None  # (grid_h, grid_w) uint8, None for imported sets
    shift: tuple[int, int]  # (dy, dx) crop offset


def _grid_and_shift(config: MaskConfig, index: int) -> tuple[np.ndarray, tuple[int, int]]:
    # One stream per (seed, index): grid cells first, then the crop shift,
    # so generate_grid(config, i) always matches the set's i-th source grid.
    gen = rng.stream(config.seed, index)
    uniforms = gen.random((config.grid_h, config.grid_w))
    grid = (uniforms < config.keep_prob).astype(np.uint8)
    dy = int(gen.integers(0, config.cell_h))
    dx = int(gen.integers(0, config.cell_w))
    return grid, (dy, dx)


def generate_grid(config: MaskConfig, index: int) -> np.ndarray:
    """The index-th small binary grid, independent of all other indices."""
    if not 0 <= index < config.count:
        raise ValidationError(f"mask index {index} out of range [0, {config.count})")
    grid, _ = _grid_and_shift(config, index)
    return grid


def upsample_mask(grid: np.ndarray, config: MaskConfig, shift: tuple[int, int]) -> Mask:
    """Bilinearly upsample a grid and crop a target-size window at ``shift``.

    The grid is interpolated to (grid_h+1)*cell_h x (grid_w+1)*cell_w and the
    window starts at (dy, dx) with 0 <= dy < cell_h, 0 <= dx < cell_w.
    """
    grid = np.asarray(grid)
    if grid.shape != (config.grid_h, config.grid_w):
        raise ValidationError(
            f"grid shape {grid.shape} does not match config {(config.grid_h, config.grid_w)}"
        )
    dy, dx = int(shift[0]), int(shift[1])
    if not (0 <= dy < config.cell_h and 0 <= dx < config.cell_w):
        raise ValidationError(
            f"shift {(dy, dx)} out of range [0, {config.cell_h}) x [0, {config.cell_w})"
        )
    up_h = (config.grid_h + 1) * config.cell_h
    up_w = (config.grid_w + 1) * config.cell_w
    big = bilinear_resize(grid, (up_h, up_w))
    window = big[dy : dy + config.target_h, dx : dx + config.target_w]
    values = np.ascontiguousarray(window, dtype=np.float32)
    return Mask(values=values, source_grid=grid.astype(np.uint8), shift=(dy, dx))


def build_mask(config: MaskConfig, index: int) -> Mask:
    """Mask ``index`` of the set implied by ``config`` (grid + upsample)."""
    if not 0 <= index < config.count:
        raise ValidationError(f"mask index {index} out of range [0, {config.count})")
    grid, shift = _grid_and_shift(config, index)
    if config.upsample:
        return upsample_mask(grid, config, shift)
    return Mask(values=grid.astype(np.float32), source_grid=grid, shift=(0, 0))


class MaskSet:
    """A sequence of masks, either materialized or regenerated on demand.

    Both storage modes produce identical values for any index; downstream
    code indexes or iterates without knowing which mode it got.
    """

    def __init__(self, config: MaskConfig, masks: list[Mask] | None = None):
        if masks is not None and len(masks) != config.count:
            raise ValidationError(
                f"mask list length {len(masks)} does not match config count {config.count}"
            )
        self.config = config
        self._masks = masks

    @classmethod
    def from_arrays(cls, values: np.ndarray, config: MaskConfig) -> "MaskSet":
        """Wrap explicit mask values (N, target_h, target_w), e.g. an enumeration."""
        values = np.asarray(values, dtype=np.float32)
        if values.shape != (config.count, config.target_h, config.target_w):
            raise ValidationError(
                f"values shape {values.shape} does not match config "
                f"{(config.count, config.target_h, config.target_w)}"
            )
        masks = []
        for i in range(config.count):
            v = values[i]
            binary = not config.upsample
            masks.append(
                Mask(
                    values=v,
                    source_grid=v.astype(np.uint8) if binary else None,
                    shift=(0, 0),
                )
            )
        return cls(config, masks)

    @property
    def materialized(self) -> bool:
        return self._masks is not None

    def __len__(self) -> int:
        return self.config.count

    def __getitem__(self, index: int) -> Mask:
        if not 0 <= index < len(self):
            raise ValidationError(f"mask index {index} out of range [0, {len(self)})")
        if self._masks is not None:
            return self._masks[index]
        return build_mask(self.config, index)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def values_batch(self, start: int, stop: int) -> np.ndarray:
        """Mask values for indices [start, stop) as one (n, H, W) f32 array."""
        if not (0 <= start <= stop <= len(self)):
            raise ValidationError(f"batch range [{start}, {stop}) invalid for {len(self)} masks")
        if self._masks is not None:
            return np.stack([m.values for m in self._masks[start:stop]])
        return np.stack([build_mask(self.config, i).values for i in range(start, stop)])


def generate_mask_set(
    config: MaskConfig,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    materialize: bool | None = None,
) -> MaskSet:
    """Generate the full set for ``config``, bit-identical across runs.

    When the materialized size exceeds ``budget_bytes`` the set is returned
    in on-demand mode; forcing ``materialize=True`` past the budget raises
    ResourceError with the computed requirement.
    """
    need = config.mask_bytes()
    if materialize is None:
        materialize = need <= budget_bytes
    if materialize and need > budget_bytes:
        raise ResourceError(
            f"materializing {config.count} masks at {config.target_h}x{config.target_w} "
            f"needs {need} bytes, over the {budget_bytes}-byte budget"
        )
    if not materialize:
        return MaskSet(config, None)
    return MaskSet(config, [build_mask(config, i) for i in range(config.count)])


def empirical_zero_rate(mask_set: MaskSet, coord: tuple[int, int]) -> float:
    """Mean of (1 - M_i(coord)) over the set: the empirical masked-out rate."""
    if len(mask_set) == 0:
        raise ValidationError("empty mask set")
    y, x = int(coord[0]), int(coord[1])
    cfg = mask_set.config
    if not (0 <= y < cfg.target_h and 0 <= x < cfg.target_w):
        raise ValidationError(f"coordinate {(y, x)} outside {cfg.target_h}x{cfg.target_w}")
    total = 0.0
    for start in range(0, len(mask_set), 1024):
        vals = mask_set.values_batch(start, min(start + 1024, len(mask_set)))
        total += float(np.sum(1.0 - vals[:, y, x].astype(np.float64)))
    return total / len(mask_set)


def enumerate_binary_grids(grid_h: int, grid_w: int) -> np.ndarray:
    """All 2^(grid_h*grid_w) binary grids, cell (r, c) = bit r*grid_w + c."""
    cells = grid_h * grid_w
    if cells > ENUMERATION_CELL_LIMIT:
        raise EnumerationBoundError(
            f"{grid_h}x{grid_w} grid has {cells} cells; enumeration is capped at "
            f"2^{ENUMERATION_CELL_LIMIT}"
        )
    index = np.arange(2**cells, dtype=np.int64)
    bits = (index[:, None] >> np.arange(cells, dtype=np.int64)) & 1
    return bits.reshape(-1, grid_h, grid_w).astype(np.uint8)


def grid_probabilities(grids: np.ndarray, keep_prob: float) -> np.ndarray:
    """P[M = m] = p^ones * (1-p)^zeros for each binary grid, as float64."""
    grids = np.asarray(grids)
    cells = grids.shape[1] * grids.shape[2]
    ones = grids.reshape(len(grids), -1).sum(axis=1, dtype=np.int64)
    p = float(keep_prob)
    return (p**ones) * ((1.0 - p) ** (cells - ones))


def save_mask_set(mask_set: MaskSet, path) -> None:
    """Write the set in MSK1 format (see module docstring)."""
    cfg = mask_set.config
    with open(path, "wb") as fh:
        fh.write(MSK1_MAGIC)
        fh.write(
            _MSK1_HEADER.pack(
                cfg.count,
                cfg.grid_h,
                cfg.grid_w,
                cfg.target_h,
                cfg.target_w,
                cfg.seed & 0xFFFFFFFFFFFFFFFF,
                float(cfg.keep_prob),
                1 if cfg.upsample else 0,
            )
        )
        for start in range(0, len(mask_set), 256):
            vals = mask_set.values_batch(start, min(start + 256, len(mask_set)))
            fh.write(np.ascontiguousarray(vals, dtype="<f4").tobytes())


def load_mask_set(path) -> MaskSet:
    """Read an MSK1 file back into a materialized MaskSet."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MSK1_MAGIC:
        raise FormatError(f"bad magic in {path!r}, expected MSK1", offset=0)
    header_end = 4 + _MSK1_HEADER.size
    if len(data) < header_end:
        raise FormatError(f"truncated MSK1 header in {path!r}", offset=len(data))
    count, grid_h, grid_w, target_h, target_w, seed, keep_prob, upsample = _MSK1_HEADER.unpack(
        data[4:header_end]
    )
    expected = header_end + 4 * count * target_h * target_w
    if len(data) < expected:
        raise FormatError(
            f"truncated MSK1 payload in {path!r}: expected {expected} bytes", offset=len(data)
        )
    config = MaskConfig(
        grid_h=int(grid_h),
        grid_w=int(grid_w),
        keep_prob=float(keep_prob),
        count=int(count),
        target_h=int(target_h),
        target_w=int(target_w),
        seed=int(seed),
        upsample=bool(upsample),
    )
    values = np.frombuffer(data[header_end:expected], dtype="<f4").reshape(
        count, target_h, target_w
    )
    return MaskSet.from_arrays(values, config)
