"""Bundled synthetic mini corpus: 4 procedures, 12 frames, 12 annotations.

The clinical corpus is private; this deterministic stand-in exercises every
pipeline stage. Frame rasters are seeded gradients with noise, masks are
simple shapes placed in varying regions. Rebuilding into the same directory
always produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import AnatomyClass, Side

FRAME_SIZE = (128, 72)  # keeps the fixture tiny; the pipeline upsamples to target

_PROCEDURES = (
    ("proc_a", Side.LEFT),
    ("proc_b", Side.RIGHT),
    ("proc_c", Side.LEFT),
    ("proc_d", Side.UNSPECIFIED),
)

# One annotation per frame; 3/3/2/2/2 over the five classes.
_CLASS_SEQUENCE = (
    AnatomyClass.PREPARATION_PLANE,
    AnatomyClass.ANGELS_HAIR,
    AnatomyClass.VENA_MESENTERICA_INFERIOR,
    AnatomyClass.DUODENUM,
    AnatomyClass.PANCREAS,
    AnatomyClass.PREPARATION_PLANE,
    AnatomyClass.ANGELS_HAIR,
    AnatomyClass.VENA_MESENTERICA_INFERIOR,
    AnatomyClass.DUODENUM,
    AnatomyClass.PANCREAS,
    AnatomyClass.PREPARATION_PLANE,
    AnatomyClass.ANGELS_HAIR,
)

PHASE_LABEL = "CME dissection"


def _frame_raster(index: int) -> np.ndarray:
    w, h = FRAME_SIZE
    rng = np.random.default_rng(1000 + index)
    ys, xs = np.mgrid[0:h, 0:w]
    base = np.stack(
        [
            (xs / w * 120 + 40 + 10 * index) % 256,
            (ys / h * 90 + 60) % 256,
            ((xs + ys) / (w + h) * 100 + 30) % 256,
        ],
        axis=-1,
    )
    noise = rng.integers(0, 25, size=(h, w, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def _mask_raster(index: int) -> np.ndarray:
    """Ellipse or rectangle whose placement cycles through image regions."""
    w, h = FRAME_SIZE
    centers = (
        (0.2, 0.2), (0.5, 0.5), (0.8, 0.8), (0.8, 0.2), (0.2, 0.8), (0.5, 0.25),
        (0.25, 0.5), (0.75, 0.5), (0.5, 0.75), (0.35, 0.35), (0.65, 0.65), (0.5, 0.5),
    )
    cx, cy = centers[index % len(centers)]
    cx, cy = cx * w, cy * h
    rx, ry = 8 + (index % 3) * 4, 6 + (index % 4) * 3
    ys, xs = np.mgrid[0:h, 0:w]
    if index % 2 == 0:
        mask = (((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2) <= 1.0
    else:
        mask = (np.abs(xs - cx) <= rx) & (np.abs(ys - cy) <= ry)
    return mask.astype(np.uint8)


def build_mini_corpus(out_dir: str | Path) -> Path:
    """Write frames, masks, and manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    w, h = FRAME_SIZE

    procedures = [
        {"procedure_id": pid, "cme_side": side.value, "phase_label": PHASE_LABEL}
        for pid, side in _PROCEDURES
    ]
    frames, annotations = [], []
    for index in range(12):
        pid = _PROCEDURES[index // 3][0]
        frame_id = f"{pid}_f{index % 3:02d}"
        image_rel = f"frames/{frame_id}.png"
        Image.fromarray(_frame_raster(index), "RGB").save(out_dir / image_rel)
        frames.append(
            {
                "frame_id": frame_id,
                "procedure_id": pid,
                "image_path": image_rel,
                "width": w,
                "height": h,
            }
        )
        mask_rel = f"masks/{frame_id}_m.png"
        Image.fromarray(_mask_raster(index) * 255, "L").save(out_dir / mask_rel)
        annotations.append(
            {
                "annotation_id": f"ann_{index:03d}",
                "frame_id": frame_id,
                "anatomy_class": _CLASS_SEQUENCE[index].value,
                "mask_path": mask_rel,
            }
        )

    declared = {}
    for cls in _CLASS_SEQUENCE:
        declared[cls.value] = declared.get(cls.value, 0) + 1
    manifest = {
        "procedures": procedures,
        "frames": frames,
        "annotations": annotations,
        "declared_class_counts": declared,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path
