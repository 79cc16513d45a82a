"""Binary-mask raster math: run-length codec, overlay compositing, spatial summaries.

A mask raster never leaves this process; what travels outward is a MaskSummary,
a coarse text-safe description (centroid, bbox, occupancy grid, region label).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

REGION_ROWS = ("upper", "center", "lower")
REGION_COLS = ("left", "center", "right")


class MaskCodecError(ValueError):
    """Raised on non-binary input to the encoder or inconsistent runs in the decoder."""


class EmptyMaskError(ValueError):
    """Raised when a summary is requested for a mask with zero foreground pixels."""


@dataclass(frozen=True)
class BinaryMask:
    """Run-length encoded 0/1 raster, row-major, runs alternating starting with a 0-run.

    The leading run may be 0 (mask starts with foreground); no other zero-length
    runs are permitted and the run lengths always sum to width * height.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise MaskCodecError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        if not self.runs:
            raise MaskCodecError("runs must be non-empty")
        if any(r < 0 for r in self.runs):
            raise MaskCodecError("run lengths must be non-negative")
        if any(r == 0 for r in self.runs[1:]):
            raise MaskCodecError("only the leading run may have length 0")
        if sum(self.runs) != self.width * self.height:
            raise MaskCodecError(
                f"run lengths sum to {sum(self.runs)}, expected {self.width * self.height}"
            )

    @property
    def foreground_count(self) -> int:
        return sum(self.runs[1::2])


@dataclass(frozen=True)
class MaskSummary:
    """Text-safe spatial description of a mask, normalized to [0,1] coordinates."""

    centroid: tuple[float, float]
    bbox: tuple[float, float, float, float]
    area_fraction: float
    grid: tuple[tuple[int, ...], ...]
    region_label: str

    def to_payload_dict(self) -> dict:
        return {
            "centroid": list(self.centroid),
            "bbox": list(self.bbox),
            "area_fraction": self.area_fraction,
            "grid": [list(row) for row in self.grid],
            "region_label": self.region_label,
        }


@dataclass(frozen=True)
class CompositeImage:
    """Frame with the semi-transparent mask overlay burned in at target resolution."""

    frame_id: str
    raster: np.ndarray = field(repr=False)
    overlay_params: tuple[tuple[int, int, int], float]


def rle_encode(mask: np.ndarray) -> BinaryMask:
    """Encode a 0/1 grid row-major; decode(encode(m)) == m exactly."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskCodecError(f"expected a 2-D grid, got ndim={arr.ndim}")
    flat = arr.ravel()
    if not np.isin(flat, (0, 1)).all():
        raise MaskCodecError("mask contains values outside {0, 1}")
    height, width = arr.shape
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return BinaryMask(width=width, height=height, runs=tuple(int(r) for r in runs))


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Exact inverse of rle_encode; returns a (height, width) uint8 grid."""
    values = np.arange(len(mask.runs)) % 2
    flat = np.repeat(values.astype(np.uint8), mask.runs)
    if flat.size != mask.width * mask.height:
        raise MaskCodecError("run lengths do not cover the full raster")
    return flat.reshape(mask.height, mask.width)


def _resize_nearest(grid: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    h, w = grid.shape
    rows = np.minimum((((np.arange(target_h) + 0.5) * h) / target_h).astype(int), h - 1)
    cols = np.minimum((((np.arange(target_w) + 0.5) * w) / target_w).astype(int), w - 1)
    return grid[rows][:, cols]


def compose_overlay(
    frame: np.ndarray,
    mask: BinaryMask,
    color: tuple[int, int, int],
    alpha: float,
    target_resolution: tuple[int, int],
    frame_id: str = "",
) -> CompositeImage:
    """Blend a semi-transparent color onto mask=1 pixels at target resolution.

    The frame is resized bilinearly, the mask by nearest-neighbor (preserving
    binarity). mask=0 pixels stay bit-identical to the resized frame; mask=1
    channels become round-half-away((1-alpha)*frame + alpha*color).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected an RGB raster, got shape {frame.shape}")
    if (frame.shape[1], frame.shape[0]) != (mask.width, mask.height):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match frame "
            f"{frame.shape[1]}x{frame.shape[0]}"
        )
    target_w, target_h = target_resolution
    resized = np.asarray(
        Image.fromarray(frame.astype(np.uint8), "RGB").resize((target_w, target_h), Image.BILINEAR)
    )
    mask_resized = _resize_nearest(rle_decode(mask), target_w, target_h)
    blended = np.floor(
        (1.0 - alpha) * resized.astype(np.float64) + alpha * np.asarray(color, dtype=np.float64) + 0.5
    )
    out = resized.copy()
    sel = mask_resized == 1
    out[sel] = np.clip(blended, 0, 255).astype(np.uint8)[sel]
    return CompositeImage(frame_id=frame_id, raster=out, overlay_params=(tuple(color), alpha))


def summarize_mask(
    mask: BinaryMask,
    grid_size: tuple[int, int] = (32, 18),
    cell_threshold: float = 0.5,
) -> MaskSummary:
    """Centroid, tight bbox, area fraction, occupancy grid, and 3x3 region label.

    Centroid uses pixel centers (x+0.5, y+0.5) normalized by the raster size;
    a grid cell is 1 iff >= cell_threshold of its source pixels are foreground.
    """
    grid_w, grid_h = grid_size
    if grid_w < 1 or grid_h < 1:
        raise ValueError(f"grid size must be positive, got {grid_size}")
    raster = rle_decode(mask)
    ys, xs = np.nonzero(raster)
    if xs.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    w, h = mask.width, mask.height
    cx = float((xs + 0.5).mean() / w)
    cy = float((ys + 0.5).mean() / h)
    bbox = (
        float(xs.min() / w),
        float(ys.min() / h),
        float((xs.max() + 1) / w),
        float((ys.max() + 1) / h),
    )
    occupancy = np.zeros((grid_h, grid_w), dtype=np.uint8)
    for gy in range(grid_h):
        y0, y1 = (gy * h) // grid_h, ((gy + 1) * h) // grid_h
        for gx in range(grid_w):
            x0, x1 = (gx * w) // grid_w, ((gx + 1) * w) // grid_w
            cell = raster[y0:y1, x0:x1]
            if cell.size and float(cell.mean()) >= cell_threshold:
                occupancy[gy, gx] = 1
    row = min(int(cy * 3), 2)
    col = min(int(cx * 3), 2)
    if row == 1 and col == 1:
        label = "center"
    else:
        label = f"{REGION_ROWS[row]} {REGION_COLS[col]}"
    return MaskSummary(
        centroid=(cx, cy),
        bbox=bbox,
        area_fraction=float(xs.size / (w * h)),
        grid=tuple(tuple(int(v) for v in r) for r in occupancy),
        region_label=label,
    )


def load_mask_raster(path: str | Path) -> BinaryMask:
    """Load a single-channel 0/255 raster from disk as a BinaryMask."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    values = np.unique(arr)
    if not np.isin(values, (0, 255)).all():
        raise MaskCodecError(f"mask raster {path} contains values outside {{0, 255}}")
    return rle_encode((arr == 255).astype(np.uint8))


def save_mask_raster(mask: BinaryMask, path: str | Path) -> None:
    arr = (rle_decode(mask) * 255).astype(np.uint8)
    Image.fromarray(arr, "L").save(path)


def composite_filename(frame_id: str, anatomy_class: str, ext: str = "png") -> str:
    return f"{frame_id}__{anatomy_class}__composite.{ext}"


def save_composite(image: CompositeImage, directory: str | Path, anatomy_class: str) -> Path:
    """Write the composite as a lossless RGB raster; returns the written path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / composite_filename(image.frame_id, anatomy_class)
    Image.fromarray(image.raster, "RGB").save(path)
    return path
