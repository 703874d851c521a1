"""Video clips and their on-disk container.

A clip is a (T, H, W, C) float32 array in [0, 1] plus a frame rate. The
container layout is fixed project-wide: magic "XHV1", then T, H, W, C,
fps numerator, fps denominator as little-endian u32, then the frame-major
float32 payload. PPM (P6) export exists for eyeballing frames.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"XHV1"


@dataclass
class VideoClip:
    frames: np.ndarray  # (T, H, W, C), float32, values in [0, 1]
    fps_num: int = 8
    fps_den: int = 1

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4:
            raise ValueError(f"clip frames must be (T, H, W, C), got shape {self.frames.shape}")
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise ValueError("frame rate must be positive")

    @property
    def shape(self):
        return self.frames.shape

    @property
    def fps(self):
        return self.fps_num / self.fps_den


def write_clip(path, clip):
    t, h, w, c = clip.frames.shape
    payload = np.clip(clip.frames, 0.0, 1.0).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<6I", t, h, w, c, clip.fps_num, clip.fps_den))
        f.write(payload)


def read_clip(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        t, h, w, c, num, den = struct.unpack("<6I", f.read(24))
        raw = f.read(t * h * w * c * 4)
    if len(raw) != t * h * w * c * 4:
        raise ValueError(f"{path}: truncated payload")
    frames = np.frombuffer(raw, dtype="<f4").reshape(t, h, w, c).astype(np.float32)
    return VideoClip(frames, num, den)


def export_ppm(clip, out_dir, prefix="frame"):
    """Write each frame as a binary PPM (P6); returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(clip.frames):
        img = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
        if img.shape[-1] == 1:
            img = np.repeat(img, 3, axis=-1)
        h, w, _ = img.shape
        p = out_dir / f"{prefix}_{i:04d}.ppm"
        with open(p, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (w, h))
            f.write(img.tobytes())
        paths.append(p)
    return paths
