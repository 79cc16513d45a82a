"""Annotated frame corpus: manifest loading, validation, and procedure-grouped splits.

The manifest is a JSON document; image and mask paths inside it are resolved
relative to the manifest's directory. All invariants are checked eagerly at
load time so downstream stages can trust the records.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from PIL import Image

from .imaging import MaskCodecError, load_mask_raster


class ManifestParseError(ValueError):
    """Malformed manifest document."""


class ManifestReferenceError(ValueError):
    """Dangling or duplicate id inside a manifest."""


class DimensionMismatchError(ValueError):
    """Mask raster dimensions disagree with the frame they annotate."""


class SplitError(ValueError):
    """Corpus cannot be split as requested."""


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNSPECIFIED = "unspecified"


class AnatomyClass(str, Enum):
    PREPARATION_PLANE = "preparation_plane"
    ANGELS_HAIR = "angels_hair"
    VENA_MESENTERICA_INFERIOR = "vena_mesenterica_inferior"
    DUODENUM = "duodenum"
    PANCREAS = "pancreas"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    AnatomyClass.PREPARATION_PLANE: "preparation plane",
    AnatomyClass.ANGELS_HAIR: "angel's hair",
    AnatomyClass.VENA_MESENTERICA_INFERIOR: "vena mesenterica inferior",
    AnatomyClass.DUODENUM: "duodenum",
    AnatomyClass.PANCREAS: "pancreas",
}


@dataclass(frozen=True)
class ProcedureMeta:
    procedure_id: str
    cme_side: Side
    phase_label: str


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    procedure_id: str
    image_path: Path
    width: int
    height: int


@dataclass(frozen=True)
class AnnotationRecord:
    annotation_id: str
    frame_id: str
    anatomy_class: AnatomyClass
    mask_path: Path


@dataclass(frozen=True)
class CorpusManifest:
    procedures: tuple[ProcedureMeta, ...]
    frames: tuple[FrameRecord, ...]
    annotations: tuple[AnnotationRecord, ...]
    declared_class_counts: dict[AnatomyClass, int]
    root: Path

    def procedure(self, procedure_id: str) -> ProcedureMeta:
        return self._procedures_by_id[procedure_id]

    def frame(self, frame_id: str) -> FrameRecord:
        return self._frames_by_id[frame_id]

    @property
    def _procedures_by_id(self) -> dict[str, ProcedureMeta]:
        return {p.procedure_id: p for p in self.procedures}

    @property
    def _frames_by_id(self) -> dict[str, FrameRecord]:
        return {f.frame_id: f for f in self.frames}


@dataclass(frozen=True)
class ClassCount:
    declared: int
    actual: int

    @property
    def delta(self) -> int:
        return self.actual - self.declared

    @property
    def mismatch(self) -> bool:
        return self.delta != 0


@dataclass(frozen=True)
class CorpusValidationReport:
    class_counts: dict[AnatomyClass, ClassCount]
    orphan_frames: tuple[str, ...]
    orphan_procedures: tuple[str, ...]

    @property
    def mismatches(self) -> dict[AnatomyClass, ClassCount]:
        return {cls: cc for cls, cc in self.class_counts.items() if cc.mismatch}


def _require(condition: bool, error: type[Exception], message: str) -> None:
    if not condition:
        raise error(message)


def load_manifest(path: str | Path, check_masks: bool = True) -> CorpusManifest:
    """Parse and eagerly validate a corpus manifest.

    check_masks additionally decodes every mask raster to verify strict
    binarity and dimensions; disable only for already-trusted corpora.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestParseError(f"cannot parse manifest {path}: {exc}") from exc
    for key in ("procedures", "frames", "annotations", "declared_class_counts"):
        _require(key in raw, ManifestParseError, f"manifest missing key {key!r}")

    root = path.parent
    try:
        procedures = tuple(
            ProcedureMeta(p["procedure_id"], Side(p["cme_side"]), p["phase_label"])
            for p in raw["procedures"]
        )
        frames = tuple(
            FrameRecord(
                f["frame_id"], f["procedure_id"], root / f["image_path"], int(f["width"]), int(f["height"])
            )
            for f in raw["frames"]
        )
        annotations = tuple(
            AnnotationRecord(
                a["annotation_id"], a["frame_id"], AnatomyClass(a["anatomy_class"]), root / a["mask_path"]
            )
            for a in raw["annotations"]
        )
        declared = {AnatomyClass(k): int(v) for k, v in raw["declared_class_counts"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(f"malformed manifest record: {exc}") from exc

    proc_ids = [p.procedure_id for p in procedures]
    _require(all(proc_ids), ManifestReferenceError, "empty procedure_id")
    _require(len(set(proc_ids)) == len(proc_ids), ManifestReferenceError, "duplicate procedure_id")
    frame_ids = [f.frame_id for f in frames]
    _require(len(set(frame_ids)) == len(frame_ids), ManifestReferenceError, "duplicate frame_id")
    ann_ids = [a.annotation_id for a in annotations]
    _require(len(set(ann_ids)) == len(ann_ids), ManifestReferenceError, "duplicate annotation_id")

    proc_set, frame_set = set(proc_ids), set(frame_ids)
    for frame in frames:
        _require(
            frame.procedure_id in proc_set,
            ManifestReferenceError,
            f"frame {frame.frame_id} references unknown procedure {frame.procedure_id}",
        )
        _require(
            frame.width >= 1 and frame.height >= 1,
            ManifestParseError,
            f"frame {frame.frame_id} has non-positive dimensions",
        )
        _require(
            frame.image_path.is_file(),
            ManifestReferenceError,
            f"frame image missing: {frame.image_path}",
        )
    frames_by_id = {f.frame_id: f for f in frames}
    for ann in annotations:
        _require(
            ann.frame_id in frame_set,
            ManifestReferenceError,
            f"annotation {ann.annotation_id} references unknown frame {ann.frame_id}",
        )
        _require(
            ann.mask_path.is_file(),
            ManifestReferenceError,
            f"mask raster missing: {ann.mask_path}",
        )
        frame = frames_by_id[ann.frame_id]
        if check_masks:
            try:
                mask = load_mask_raster(ann.mask_path)
            except MaskCodecError as exc:
                raise ManifestParseError(str(exc)) from exc
            _require(
                (mask.width, mask.height) == (frame.width, frame.height),
                DimensionMismatchError,
                f"annotation {ann.annotation_id}: mask {mask.width}x{mask.height} "
                f"vs frame {frame.width}x{frame.height}",
            )
        else:
            with Image.open(ann.mask_path) as img:
                _require(
                    img.size == (frame.width, frame.height),
                    DimensionMismatchError,
                    f"annotation {ann.annotation_id}: mask {img.size} vs frame "
                    f"{(frame.width, frame.height)}",
                )

    return CorpusManifest(
        procedures=procedures,
        frames=frames,
        annotations=annotations,
        declared_class_counts=declared,
        root=root,
    )


def validate_corpus(manifest: CorpusManifest) -> CorpusValidationReport:
    """Per-class actual vs declared counts plus orphan listings; pure, never raises."""
    actual = Counter(a.anatomy_class for a in manifest.annotations)
    class_counts = {
        cls: ClassCount(declared=manifest.declared_class_counts.get(cls, 0), actual=actual.get(cls, 0))
        for cls in set(manifest.declared_class_counts) | set(actual)
    }
    annotated_frames = {a.frame_id for a in manifest.annotations}
    orphan_frames = tuple(sorted(f.frame_id for f in manifest.frames if f.frame_id not in annotated_frames))
    procs_with_frames = {f.procedure_id for f in manifest.frames}
    orphan_procedures = tuple(
        sorted(p.procedure_id for p in manifest.procedures if p.procedure_id not in procs_with_frames)
    )
    return CorpusValidationReport(
        class_counts=class_counts,
        orphan_frames=orphan_frames,
        orphan_procedures=orphan_procedures,
    )


def split_corpus(
    manifest: CorpusManifest, seed: int, test_fraction: float
) -> tuple[list[str], list[str]]:
    """Procedure-grouped train/test partition of frame ids.

    All frames of a procedure land on one side; the achieved test fraction is
    the closest attainable to test_fraction under that grouping (exact
    subset-sum over procedure frame counts; ties prefer the smaller test side).
    Deterministic for a fixed (seed, manifest).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    frames_by_proc: dict[str, list[str]] = defaultdict(list)
    for frame in manifest.frames:
        frames_by_proc[frame.procedure_id].append(frame.frame_id)
    if len(manifest.procedures) < 2:
        raise SplitError(f"need at least 2 procedures to split, got {len(manifest.procedures)}")

    procs = sorted(frames_by_proc)
    random.Random(seed).shuffle(procs)
    counts = [len(frames_by_proc[p]) for p in procs]
    total = sum(counts)
    if total == 0:
        return [], []
    target = test_fraction * total

    # Subset-sum DP: parent[s] records how sum s was first reached.
    parent: dict[int, tuple[int, int] | None] = {0: None}
    for i, count in enumerate(counts):
        additions = {}
        for s in parent:
            t = s + count
            if t not in parent and t not in additions:
                additions[t] = (s, i)
        parent.update(additions)
    best = min(parent, key=lambda s: (abs(s - target), s))

    test_procs = set()
    s = best
    while parent[s] is not None:
        prev, idx = parent[s]
        test_procs.add(procs[idx])
        s = prev

    test_ids = sorted(fid for p in test_procs for fid in frames_by_proc[p])
    test_set = set(test_ids)
    train_ids = sorted(f.frame_id for f in manifest.frames if f.frame_id not in test_set)
    return train_ids, test_ids
