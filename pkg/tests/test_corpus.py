import itertools
import json

import numpy as np
import pytest
from PIL import Image

from surgdistill.corpus import (
    AnatomyClass,
    DimensionMismatchError,
    ManifestParseError,
    ManifestReferenceError,
    Side,
    SplitError,
    load_manifest,
    split_corpus,
    validate_corpus,
)


def write_manifest_files(tmp_path, procedures, frames, annotations, declared):
    """Write a manifest plus dummy rasters so eager validation passes."""
    (tmp_path / "frames").mkdir(exist_ok=True)
    (tmp_path / "masks").mkdir(exist_ok=True)
    for frame in frames:
        Image.fromarray(
            np.zeros((frame["height"], frame["width"], 3), dtype=np.uint8), "RGB"
        ).save(tmp_path / frame["image_path"])
    for ann in annotations:
        frame = next(f for f in frames if f["frame_id"] == ann["frame_id"])
        grid = np.zeros((frame["height"], frame["width"]), dtype=np.uint8)
        grid[0, 0] = 1
        Image.fromarray(grid * 255, "L").save(tmp_path / ann["mask_path"])
    manifest = {
        "procedures": procedures,
        "frames": frames,
        "annotations": annotations,
        "declared_class_counts": declared,
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


def simple_manifest(tmp_path, n_procs=2, frames_per_proc=2, cls="duodenum"):
    procedures = [
        {"procedure_id": f"p{i}", "cme_side": "left", "phase_label": "CME dissection"}
        for i in range(n_procs)
    ]
    frames, annotations = [], []
    for i in range(n_procs):
        for j in range(frames_per_proc):
            fid = f"p{i}_f{j}"
            frames.append(
                {"frame_id": fid, "procedure_id": f"p{i}", "image_path": f"frames/{fid}.png",
                 "width": 8, "height": 6}
            )
            annotations.append(
                {"annotation_id": f"a_{fid}", "frame_id": fid, "anatomy_class": cls,
                 "mask_path": f"masks/{fid}.png"}
            )
    declared = {cls: len(annotations)}
    return write_manifest_files(tmp_path, procedures, frames, annotations, declared)


def test_anatomy_enum_has_exactly_five_members():
    assert len(AnatomyClass) == 5
    assert {c.value for c in AnatomyClass} == {
        "preparation_plane", "angels_hair", "vena_mesenterica_inferior", "duodenum", "pancreas",
    }


def test_mini_corpus_loads_with_expected_shape(mini_manifest):
    assert len(mini_manifest.frames) == 12
    assert len(mini_manifest.annotations) == 12
    assert len(mini_manifest.procedures) == 4
    assert {a.anatomy_class for a in mini_manifest.annotations} == set(AnatomyClass)


def test_mini_corpus_counts_match_independent_scan(mini_corpus_dir, mini_manifest):
    # Oracle: recount classes straight from the manifest document on disk.
    raw = json.loads((mini_corpus_dir / "manifest.json").read_text())
    recount = {}
    for ann in raw["annotations"]:
        recount[ann["anatomy_class"]] = recount.get(ann["anatomy_class"], 0) + 1
    report = validate_corpus(mini_manifest)
    assert not report.mismatches
    for cls, count in report.class_counts.items():
        assert count.actual == recount[cls.value]


def test_dangling_frame_reference_rejected(tmp_path):
    path = simple_manifest(tmp_path)
    raw = json.loads(path.read_text())
    raw["annotations"][0]["frame_id"] = "missing_frame"
    path.write_text(json.dumps(raw))
    with pytest.raises(ManifestReferenceError):
        load_manifest(path)


def test_duplicate_procedure_rejected(tmp_path):
    path = simple_manifest(tmp_path)
    raw = json.loads(path.read_text())
    raw["procedures"].append(raw["procedures"][0])
    path.write_text(json.dumps(raw))
    with pytest.raises(ManifestReferenceError):
        load_manifest(path)


def test_empty_frames_list_is_valid(tmp_path):
    path = write_manifest_files(
        tmp_path,
        [{"procedure_id": "p0", "cme_side": "left", "phase_label": "CME"}],
        [],
        [],
        {},
    )
    manifest = load_manifest(path)
    assert manifest.frames == ()


def test_malformed_document_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ManifestParseError):
        load_manifest(path)


def test_mask_dimension_mismatch_rejected(tmp_path):
    path = simple_manifest(tmp_path)
    raw = json.loads(path.read_text())
    wrong = np.zeros((3, 3), dtype=np.uint8)
    Image.fromarray(wrong, "L").save(tmp_path / raw["annotations"][0]["mask_path"])
    with pytest.raises(DimensionMismatchError):
        load_manifest(path)


def test_validate_counts_no_mismatch_for_exact_declaration(tmp_path):
    # 184 duodenum annotations declared and present -> clean report
    procedures = [{"procedure_id": "p0", "cme_side": "right", "phase_label": "CME"}]
    frames = [
        {"frame_id": f"f{i}", "procedure_id": "p0", "image_path": f"frames/f{i}.png",
         "width": 4, "height": 4}
        for i in range(184)
    ]
    annotations = [
        {"annotation_id": f"a{i}", "frame_id": f"f{i}", "anatomy_class": "duodenum",
         "mask_path": f"masks/a{i}.png"}
        for i in range(184)
    ]
    path = write_manifest_files(tmp_path, procedures, frames, annotations, {"duodenum": 184})
    report = validate_corpus(load_manifest(path, check_masks=False))
    assert not report.mismatches
    assert report.class_counts[AnatomyClass.DUODENUM].actual == 184


def test_validate_flags_declared_count_delta(tmp_path):
    # one fewer annotation than declared -> mismatch with delta -1
    path = simple_manifest(tmp_path)
    raw = json.loads(path.read_text())
    raw["declared_class_counts"]["duodenum"] = 5
    path.write_text(json.dumps(raw))
    report = validate_corpus(load_manifest(path))
    assert report.class_counts[AnatomyClass.DUODENUM].mismatch
    assert report.class_counts[AnatomyClass.DUODENUM].delta == -1


def test_validate_is_pure(mini_manifest):
    first = validate_corpus(mini_manifest)
    second = validate_corpus(mini_manifest)
    assert first == second


def test_split_mini_corpus_single_procedure_in_test(mini_manifest):
    train, test = split_corpus(mini_manifest, seed=7, test_fraction=0.25)
    # Oracle: enumerate all procedure groupings, pick the closest fraction.
    frames_by_proc = {}
    for f in mini_manifest.frames:
        frames_by_proc.setdefault(f.procedure_id, []).append(f.frame_id)
    total = len(mini_manifest.frames)
    best_diff = min(
        abs(sum(len(frames_by_proc[p]) for p in combo) / total - 0.25)
        for r in range(len(frames_by_proc) + 1)
        for combo in itertools.combinations(frames_by_proc, r)
    )
    assert abs(len(test) / total - 0.25) == pytest.approx(best_diff, abs=1e-12)
    test_procs = {fid.rsplit("_", 1)[0] for fid in test}
    assert len(test_procs) == 1
    assert len(test) == 3


def test_split_deterministic(mini_manifest):
    assert split_corpus(mini_manifest, 7, 0.2) == split_corpus(mini_manifest, 7, 0.2)


def test_split_seed_changes_composition(mini_manifest):
    partitions = {tuple(split_corpus(mini_manifest, seed, 0.25)[1]) for seed in range(8)}
    assert len(partitions) > 1


def test_split_disjoint_exhaustive_grouped_100_random_manifests(tmp_path):
    rng = np.random.default_rng(77)
    for trial in range(100):
        n_procs = int(rng.integers(2, 7))
        frames_by_proc = {f"p{i}": int(rng.integers(1, 6)) for i in range(n_procs)}
        procedures = [
            {"procedure_id": p, "cme_side": "left", "phase_label": "CME"} for p in frames_by_proc
        ]
        frames = [
            {"frame_id": f"{p}_f{j}", "procedure_id": p, "image_path": "frames/shared.png",
             "width": 4, "height": 4}
            for p, count in frames_by_proc.items()
            for j in range(count)
        ]
        manifest_dir = tmp_path / f"m{trial}"
        manifest_dir.mkdir()
        path = write_manifest_files(manifest_dir, procedures, [], [], {})
        raw = json.loads(path.read_text())
        (manifest_dir / "frames").mkdir(exist_ok=True)
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), "RGB").save(
            manifest_dir / "frames" / "shared.png"
        )
        raw["frames"] = frames
        path.write_text(json.dumps(raw))
        manifest = load_manifest(path)
        fraction = float(rng.uniform(0.1, 0.9))
        train, test = split_corpus(manifest, int(rng.integers(0, 1000)), fraction)
        assert set(train) | set(test) == {f.frame_id for f in manifest.frames}
        assert not set(train) & set(test)
        train_procs = {fid.rsplit("_", 1)[0] for fid in train}
        test_procs = {fid.rsplit("_", 1)[0] for fid in test}
        assert not train_procs & test_procs


def test_split_requires_two_procedures(tmp_path):
    path = simple_manifest(tmp_path, n_procs=1)
    with pytest.raises(SplitError):
        split_corpus(load_manifest(path), 1, 0.2)


def test_split_fraction_bounds(mini_manifest):
    with pytest.raises(ValueError):
        split_corpus(mini_manifest, 1, 0.0)
    with pytest.raises(ValueError):
        split_corpus(mini_manifest, 1, 1.0)


def test_paper_ratio_documented():
    # The reference protocol's test share: 790 of 3946 pairs.
    assert 790 / 3946 == pytest.approx(0.2002, abs=5e-5)


def test_sides_enum():
    assert {s.value for s in Side} == {"left", "right", "unspecified"}
