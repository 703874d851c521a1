"""Paired dataset generation: scenes x animations x cameras -> clips on disk.

Every random choice is drawn from a named substream of the dataset seed,
so regeneration is reproducible file-for-file and adding pairs never
perturbs earlier ones.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .kinematics import animation_library, canonical_skeleton
from .rng import DEFAULT_SEED, substream
from .scene import (CameraTrack, Obstacle, SceneSpec, human_embodiment,
                    humanoid_embodiment, render_pair)
from .video import read_clip, write_clip

MANIFEST_COLUMNS = ("pair_id", "scene", "anim", "camera", "split",
                    "human_path", "humanoid_path")


@dataclass
class DatasetConfig:
    scenes: int = 14
    animations: int = 6
    cameras: int = 3
    pairs: int = 72  # 0 means the full scenes x animations x cameras product
    val_scenes: int = 2
    frames: int = 24
    fps: int = 8
    width: int = 64
    height: int = 48
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.scenes < 1 or self.animations < 1 or self.cameras < 1:
            raise ValueError("scenes, animations and cameras must each be >= 1")
        if not (0 < self.val_scenes < self.scenes):
            raise ValueError("val_scenes must be in (0, scenes)")
        if self.frames < 1 or self.fps < 1:
            raise ValueError("frames and fps must be >= 1")
        if self.width < 8 or self.height < 8:
            raise ValueError("resolution too small to draw anything")
        if self.pairs < 0:
            raise ValueError("pairs must be >= 0")

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        known = set(cls.__dataclass_fields__)
        for key in raw:
            if key not in known:
                raise ValueError(f"unknown dataset config key: {key}")
        return cls(**raw)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")


def make_scene(index, seed):
    """Deterministic scene spec for one scene index."""
    rng = substream(seed, "scene", index)
    sky_a = 0.45 + 0.30 * rng.random(3)
    sky_b = np.clip(sky_a + (rng.random(3) - 0.5) * 0.35, 0.05, 0.95)
    ground = 0.12 + 0.30 * rng.random(3)
    accent = 0.10 + 0.80 * rng.random(3)
    palette = np.stack([sky_a, sky_b, ground, accent]).astype(np.float32)
    freqs = tuple(float(v) for v in np.concatenate([
        rng.uniform(0.5, 3.0, 4), rng.uniform(2.0, 8.0, 2)]))
    phases = tuple(float(v) for v in rng.uniform(0.0, 2.0 * math.pi, 3))

    obstacles = []
    for _ in range(int(rng.integers(0, 3))):
        x0 = float(rng.uniform(-2.5, 2.2))
        y0 = float(rng.uniform(0.0, 1.4))
        obstacles.append(Obstacle(
            x0, y0, x0 + float(rng.uniform(0.3, 1.5)), y0 + float(rng.uniform(0.3, 1.0)),
            color=tuple(float(c) for c in np.clip(accent * rng.uniform(0.6, 1.0), 0, 1)),
            in_front=False))
    if index % 3 == 0:
        # every third scene gets a foreground occluder crossing the action
        x0 = float(rng.uniform(0.1, 1.0))
        obstacles.append(Obstacle(
            x0, 0.0, x0 + float(rng.uniform(0.22, 0.5)), float(rng.uniform(0.6, 1.3)),
            color=tuple(float(c) for c in np.clip(accent * 0.85, 0, 1)),
            in_front=True))
    return SceneSpec(f"scene{index:02d}", palette, freqs, phases, obstacles)


def _smooth(values, window=5):
    kernel = np.ones(window) / window
    padded = np.concatenate([np.full(window // 2, values[0]), values,
                             np.full(window // 2, values[-1])])
    return np.convolve(padded, kernel, mode="valid")


def make_camera(style, rng, root_path, frames):
    """Camera track of one of three styles: locked, tracking, push-in.

    `root_path` is the canonical performance's root trajectory, so the same
    track is produced for every embodiment of a pair.
    """
    root_path = np.asarray(root_path, dtype=np.float64)[:frames]
    mean = root_path.mean(axis=0)
    jitter = rng.uniform(-0.2, 0.2, size=2)
    zoom0 = float(rng.uniform(0.9, 1.1))
    expo0 = float(rng.uniform(0.85, 1.15))
    if style % 3 == 0:
        centers = np.tile(mean + jitter, (frames, 1))
        zooms = np.full(frames, zoom0)
        exposures = np.full(frames, expo0)
    elif style % 3 == 1:
        cx = _smooth(root_path[:, 0]) + jitter[0]
        cy = np.full(frames, mean[1] + jitter[1])
        centers = np.stack([cx, cy], axis=1)
        zooms = np.full(frames, zoom0)
        exposures = np.full(frames, expo0)
    else:
        drift = rng.uniform(-0.3, 0.3, size=2)
        tlin = np.linspace(0.0, 1.0, frames)
        centers = (mean + jitter)[None, :] + tlin[:, None] * drift[None, :]
        zooms = zoom0 * (1.0 + 0.18 * tlin)
        exposures = expo0 * (1.0 - 0.08 * tlin)
    return CameraTrack(centers, zooms, exposures, camera_id=f"cam{style % 3}")


def _root_world_path(anim):
    rx, ry = canonical_skeleton().root_position
    return [(rx + dx, ry + dy) for dx, dy in anim.root_motion]


@dataclass(frozen=True)
class ManifestRow:
    pair_id: str
    scene: str
    anim: str
    camera: str
    split: str
    human_path: str
    humanoid_path: str


def write_manifest(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for r in rows:
            f.write("\t".join([r.pair_id, r.scene, r.anim, r.camera, r.split,
                               r.human_path, r.humanoid_path]) + "\n")


def read_manifest(path):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_COLUMNS:
            raise ValueError(f"unrecognized manifest header: {header}")
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(MANIFEST_COLUMNS):
                raise ValueError(f"manifest line {lineno} has {len(parts)} fields")
            rows.append(ManifestRow(*parts))
    return rows


def load_pair(row, base_dir):
    """Read both clips of a manifest row (paths are manifest-relative)."""
    human = read_clip(os.path.join(base_dir, row.human_path))
    humanoid = read_clip(os.path.join(base_dir, row.humanoid_path))
    return human, humanoid


def plan_pairs(config):
    """Assign (scene, anim, camera) to each pair id.

    With `pairs == 0` the full product is emitted. Otherwise pairs are dealt
    round-robin over scenes, and within a scene walk a per-scene shuffled
    (anim, camera) grid so no combination repeats before all are used.
    """
    n_grid = config.animations * config.cameras
    grids = []
    for s in range(config.scenes):
        g = substream(config.seed, "grid", s)
        grids.append(g.permutation(n_grid))
    plan = []
    if config.pairs == 0:
        for s in range(config.scenes):
            for a in range(config.animations):
                for c in range(config.cameras):
                    plan.append((s, a, c))
    else:
        taken = [0] * config.scenes
        for i in range(config.pairs):
            s = i % config.scenes
            combo = int(grids[s][taken[s] % n_grid])
            taken[s] += 1
            plan.append((s, combo // config.cameras, combo % config.cameras))
    return plan


def scene_split(config, scene_index):
    return "validation" if scene_index >= config.scenes - config.val_scenes else "train"


def generate_dataset(config, out_dir, overwrite=False, progress=None, jobs=1):
    """Render every planned pair and write clips plus a TSV manifest.

    Returns the manifest path. Refuses to clobber an existing manifest
    unless `overwrite` is set. Every pair's randomness is keyed by its
    plan index, so the output is byte-identical for any worker count.
    """
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    if os.path.exists(manifest_path) and not overwrite:
        raise FileExistsError(f"manifest already exists: {manifest_path}")
    clips_dir = os.path.join(out_dir, "clips")
    os.makedirs(clips_dir, exist_ok=True)

    anims = animation_library(config.animations, config.frames, config.fps,
                              rng_for=lambda i: substream(config.seed, "anim", i))
    scenes = [make_scene(i, config.seed) for i in range(config.scenes)]
    human = human_embodiment()
    humanoid = humanoid_embodiment()
    plan = plan_pairs(config)

    def render_one(i):
        s, a, c = plan[i]
        anim = anims[a]
        camera = make_camera(c, substream(config.seed, "camera", i),
                             _root_world_path(anim), config.frames)
        pair = render_pair(anim, scenes[s], camera, human, humanoid,
                           config.width, config.height, fps_num=config.fps)
        pid = f"pair{i:04d}"
        hpath = f"clips/{pid}_human.xhv"
        rpath = f"clips/{pid}_humanoid.xhv"
        write_clip(os.path.join(out_dir, hpath), pair.human)
        write_clip(os.path.join(out_dir, rpath), pair.humanoid)
        return ManifestRow(pid, pair.scene_id, pair.anim_id, pair.camera_id,
                           scene_split(config, s), hpath, rpath)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(render_one, range(len(plan))))
        if progress is not None:
            for i, row in enumerate(rows):
                progress(i + 1, row)
    else:
        rows = []
        for i in range(len(plan)):
            rows.append(render_one(i))
            if progress is not None:
                progress(i + 1, rows[-1])

    write_manifest(rows, manifest_path)
    config.to_json(os.path.join(out_dir, "dataset_config.json"))
    return manifest_path
