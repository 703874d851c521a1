"""Dataset generation: planning, manifests, determinism, splits."""

import hashlib
import json
import os
from collections import Counter

import numpy as np
import pytest

from conftest import TINY_DATASET
from robovid.datagen import (
    MANIFEST_COLUMNS,
    DatasetConfig,
    ManifestRow,
    generate_dataset,
    load_pair,
    make_camera,
    make_scene,
    plan_pairs,
    read_manifest,
    scene_split,
    write_manifest,
)
from robovid.rng import substream
from robovid.video import read_clip


def _tree_digest(root):
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            p = os.path.join(dirpath, name)
            h.update(os.path.relpath(p, root).encode())
            h.update(open(p, "rb").read())
    return h.hexdigest()


def test_desk_defaults():
    cfg = DatasetConfig()
    assert (cfg.scenes, cfg.animations, cfg.cameras) == (14, 6, 3)
    assert cfg.pairs == 72
    assert cfg.val_scenes == 2
    assert (cfg.frames, cfg.fps, cfg.width, cfg.height) == (24, 8, 64, 48)
    assert cfg.seed == 1234


def test_config_validation_and_unknown_key():
    with pytest.raises(ValueError):
        DatasetConfig(scenes=0)
    with pytest.raises(ValueError):
        DatasetConfig(val_scenes=14, scenes=14)
    with pytest.raises(ValueError):
        DatasetConfig(pairs=-1)
    with pytest.raises(ValueError, match="unknown dataset config key: fog"):
        DatasetConfig.from_dict({"fog": True})


def test_config_json_round_trip(tmp_path):
    cfg = DatasetConfig(scenes=5, val_scenes=2, pairs=10, seed=9)
    p = tmp_path / "cfg.json"
    cfg.to_json(p)
    assert DatasetConfig.from_json(p) == cfg


def test_plan_covers_scenes_round_robin_without_combo_repeats():
    cfg = DatasetConfig()
    plan = plan_pairs(cfg)
    assert len(plan) == 72
    scene_counts = Counter(s for s, _, _ in plan)
    # 72 = 5*14 + 2: scenes 0 and 1 get six pairs, the rest five
    assert scene_counts[0] == 6 and scene_counts[1] == 6
    assert all(scene_counts[s] == 5 for s in range(2, 14))
    per_scene = Counter((s, a, c) for s, a, c in plan)
    assert max(per_scene.values()) == 1  # no duplicate combination anywhere
    for s, a, c in plan:
        assert 0 <= a < cfg.animations and 0 <= c < cfg.cameras


def test_plan_full_product_when_pairs_zero():
    cfg = DatasetConfig(scenes=3, animations=4, cameras=2, pairs=0, val_scenes=1)
    plan = plan_pairs(cfg)
    assert len(plan) == 24
    assert len(set(plan)) == 24
    assert plan[0] == (0, 0, 0) and plan[-1] == (2, 3, 1)


def test_scene_split_reserves_last_scenes_for_validation():
    cfg = DatasetConfig()
    splits = [scene_split(cfg, s) for s in range(cfg.scenes)]
    assert splits.count("train") == 12
    assert splits.count("validation") == 2
    assert splits[12] == splits[13] == "validation"


def test_manifest_round_trip(tmp_path):
    rows = [
        ManifestRow("pair0000", "scene00", "walk00", "cam1", "train",
                    "clips/pair0000_human.xhv", "clips/pair0000_humanoid.xhv"),
        ManifestRow("pair0001", "scene02", "wave01", "cam0", "validation",
                    "clips/pair0001_human.xhv", "clips/pair0001_humanoid.xhv"),
    ]
    p = tmp_path / "manifest.tsv"
    write_manifest(rows, p)
    first = p.read_text(encoding="utf-8").splitlines()[0]
    assert first == "\t".join(MANIFEST_COLUMNS)
    assert read_manifest(p) == rows


def test_manifest_header_and_field_errors(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("pair\tscene\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unrecognized manifest header"):
        read_manifest(p)
    p.write_text("\t".join(MANIFEST_COLUMNS) + "\na\tb\tc\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        read_manifest(p)


def test_generated_dataset_contents(tiny_dataset):
    rows = read_manifest(os.path.join(tiny_dataset, "manifest.tsv"))
    assert len(rows) == TINY_DATASET.pairs
    assert [r.pair_id for r in rows] == [f"pair{i:04d}" for i in range(len(rows))]
    for row in rows:
        human, humanoid = load_pair(row, tiny_dataset)
        expect = (TINY_DATASET.frames, TINY_DATASET.height, TINY_DATASET.width, 3)
        assert human.frames.shape == expect
        assert humanoid.frames.shape == expect
        assert human.fps_num == TINY_DATASET.fps
        assert not np.array_equal(human.frames, humanoid.frames)
    # split is a function of the scene: last val_scenes scene ids validate
    val_scene = f"scene{TINY_DATASET.scenes - 1:02d}"
    for row in rows:
        assert row.split == ("validation" if row.scene == val_scene else "train")
    assert any(row.split == "validation" for row in rows)
    # config echo round-trips
    echoed = DatasetConfig.from_json(os.path.join(tiny_dataset, "dataset_config.json"))
    assert echoed == TINY_DATASET


def test_generation_is_deterministic(tiny_dataset, tmp_path):
    again = tmp_path / "again"
    generate_dataset(TINY_DATASET, str(again))
    assert _tree_digest(str(again)) == _tree_digest(tiny_dataset)


def test_overwrite_guard(tiny_dataset):
    with pytest.raises(FileExistsError, match="manifest already exists"):
        generate_dataset(TINY_DATASET, tiny_dataset)


def test_seed_changes_clips(tmp_path):
    import dataclasses

    cfg = dataclasses.replace(TINY_DATASET, pairs=2, seed=TINY_DATASET.seed + 1)
    out = tmp_path / "other"
    generate_dataset(cfg, str(out))
    base_clip = read_clip(os.path.join(tmp_path, "other", "clips", "pair0000_human.xhv"))
    assert base_clip.frames.shape[0] == cfg.frames


def test_make_scene_structure_and_determinism():
    a = make_scene(0, seed=5)
    b = make_scene(0, seed=5)
    assert a.scene_id == "scene00"
    assert np.array_equal(a.palette, b.palette)
    assert a.freqs == b.freqs and a.phases == b.phases
    assert len(a.obstacles) == len(b.obstacles)
    assert a.palette.shape == (4, 3)
    # every third scene carries a foreground occluder
    assert any(ob.in_front for ob in make_scene(0, seed=5).obstacles)
    assert any(ob.in_front for ob in make_scene(3, seed=5).obstacles)
    assert make_scene(1, seed=5).freqs != make_scene(2, seed=5).freqs


def test_camera_styles():
    frames = 10
    path = [(0.1 * f, 0.9) for f in range(frames)]
    locked = make_camera(0, substream(1, "camera", 0), path, frames)
    tracking = make_camera(1, substream(1, "camera", 1), path, frames)
    push = make_camera(2, substream(1, "camera", 2), path, frames)
    assert locked.camera_id == "cam0"
    assert np.all(locked.centers == locked.centers[0])
    assert np.all(locked.zooms == locked.zooms[0])
    assert tracking.camera_id == "cam1"
    assert tracking.centers[-1, 0] > tracking.centers[0, 0]  # follows the walk
    assert np.all(tracking.centers[:, 1] == tracking.centers[0, 1])
    assert push.camera_id == "cam2"
    assert push.zooms[-1] > push.zooms[0]
    assert push.exposures[-1] < push.exposures[0]
    for cam in (locked, tracking, push):
        assert cam.frame_count == frames
