"""Similarity metrics between clips and dataset-level evaluation.

All three metrics run on the [0, 255] scale (inputs live in [0, 1]).
SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01,
K2=0.03, dynamic range 255, computed on channel-mean grayscale,
per frame, valid windows only, then averaged.
"""

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codec import decode, encode
from .datagen import load_pair, read_manifest
from .flow import sample_edit
from .rng import substream
from .video import VideoClip, read_clip

PSNR_CAP = 100.0
PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _frames_of(x):
    return x.frames if hasattr(x, "frames") else np.asarray(x)


def mse_255(a, b):
    """Mean squared difference on the [0, 255] scale, over every voxel."""
    fa, fb = _frames_of(a), _frames_of(b)
    if fa.shape != fb.shape:
        raise ValueError(f"mse: shapes differ, {fa.shape} vs {fb.shape}")
    diff = (fa.astype(np.float64) - fb.astype(np.float64)) * PEAK
    return float(np.mean(diff * diff))


def psnr(a, b):
    """10*log10(peak^2 / mse), capped at 100 dB (identical inputs hit the cap)."""
    m = mse_255(a, b)
    if m == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(PEAK * PEAK / m)))


def gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _to_gray255(frames):
    return frames.astype(np.float64).mean(axis=-1) * PEAK


def ssim_frame(x, y, kernel=None):
    """SSIM of two grayscale [0,255] frames, mean over valid windows."""
    if kernel is None:
        kernel = gaussian_kernel()
    k = kernel.shape[0]
    if x.shape[0] < k or x.shape[1] < k:
        raise ValueError(f"frame {x.shape} smaller than the {k}x{k} SSIM window")
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    axes = ((2, 3), (0, 1))
    wx = sliding_window_view(x, (k, k))
    wy = sliding_window_view(y, (k, k))
    mu_x = np.tensordot(wx, kernel, axes)
    mu_y = np.tensordot(wy, kernel, axes)
    xx = np.tensordot(wx * wx, kernel, axes)
    yy = np.tensordot(wy * wy, kernel, axes)
    xy = np.tensordot(wx * wy, kernel, axes)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def ssim(a, b):
    """Per-frame SSIM on channel-mean grayscale, averaged over frames."""
    fa, fb = _frames_of(a), _frames_of(b)
    if fa.shape != fb.shape:
        raise ValueError(f"ssim: shapes differ, {fa.shape} vs {fb.shape}")
    ga, gb = _to_gray255(fa), _to_gray255(fb)
    kernel = gaussian_kernel()
    return float(np.mean([ssim_frame(ga[i], gb[i], kernel) for i in range(ga.shape[0])]))


def score_clip(pred, truth):
    return psnr(pred, truth), ssim(pred, truth), mse_255(pred, truth)


@dataclass
class ClipScore:
    clip_id: str
    psnr: float
    ssim: float
    mse: float


@dataclass
class EvalReport:
    """Per-clip and aggregate scores for predictions and the copy-input
    baseline (source clip scored against the target ground truth)."""

    clips: list
    baseline_clips: list
    psnr: float
    ssim: float
    mse: float
    baseline_psnr: float
    baseline_ssim: float
    baseline_mse: float
    frame_count: int
    config: dict
    timestamp: str
    mode: str = ""
    split: str = ""

    @property
    def psnr_delta(self):
        return self.psnr - self.baseline_psnr

    def to_dict(self):
        d = asdict(self)
        d["clips"] = [asdict(c) for c in self.clips]
        d["baseline_clips"] = [asdict(c) for c in self.baseline_clips]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["clips"] = [ClipScore(**c) for c in d.get("clips", [])]
        d["baseline_clips"] = [ClipScore(**c) for c in d.get("baseline_clips", [])]
        known = set(cls.__dataclass_fields__)
        for key in list(d):
            if key not in known:
                raise ValueError(f"unknown report key: {key}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("clip_id,psnr,ssim,mse\n")
            for c in self.clips:
                f.write(f"{c.clip_id},{c.psnr!r},{c.ssim!r},{c.mse!r}\n")


def _metric_config():
    return {
        "window": SSIM_WINDOW, "sigma": SSIM_SIGMA, "k1": SSIM_K1, "k2": SSIM_K2,
        "dynamic_range": PEAK, "psnr_cap": PSNR_CAP,
    }


def assemble_report(entries, mode="", split="", extra_config=None):
    """Build an EvalReport from (clip_id, pred_clip, truth_clip, source_clip)."""
    if not entries:
        raise ValueError("nothing to evaluate: no clips")
    clips, base, frames = [], [], 0
    for clip_id, pred, truth, source in entries:
        clips.append(ClipScore(clip_id, *score_clip(pred, truth)))
        base.append(ClipScore(clip_id, *score_clip(source, truth)))
        frames += _frames_of(pred).shape[0]
    cfg = _metric_config()
    if extra_config:
        cfg.update(extra_config)
    return EvalReport(
        clips=clips, baseline_clips=base,
        psnr=float(np.mean([c.psnr for c in clips])),
        ssim=float(np.mean([c.ssim for c in clips])),
        mse=float(np.mean([c.mse for c in clips])),
        baseline_psnr=float(np.mean([c.psnr for c in base])),
        baseline_ssim=float(np.mean([c.ssim for c in base])),
        baseline_mse=float(np.mean([c.mse for c in base])),
        frame_count=frames,
        config=cfg,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
        mode=mode, split=split,
    )


def _resolve_edited(edited_dir, row):
    candidates = [
        os.path.join(edited_dir, f"{row.pair_id}.xhv"),
        os.path.join(edited_dir, f"{row.pair_id}_human.xhv"),
        os.path.join(edited_dir, os.path.basename(row.human_path)),
    ]
    for c in candidates:
        if os.path.exists(c):
            return c
    raise FileNotFoundError(f"no edited clip for {row.pair_id}; tried {candidates}")


def evaluate_dataset(manifest_path, split="validation", model=None, sampler=None,
                     edited_dir=None, prompt="Humanoid video", jobs=1):
    """Score a model (or a directory of pre-edited clips) against ground truth.

    Model mode runs the sampler per source clip with a per-clip noise
    substream, so results do not depend on worker count or clip order.
    """
    if (model is None) == (edited_dir is None):
        raise ValueError("provide exactly one of model or edited_dir")
    rows = [r for r in read_manifest(manifest_path) if split in ("", None) or r.split == split]
    if not rows:
        raise ValueError(f"no manifest rows in split '{split}'")
    base_dir = os.path.dirname(os.path.abspath(manifest_path))

    def score_row(i):
        row = rows[i]
        human, humanoid = load_pair(row, base_dir)
        if model is not None:
            cond = encode(human, model.config.patch)
            rng = substream(sampler.seed, "sampler", i)
            x0 = rng.standard_normal(cond.tokens.shape).astype(cond.tokens.dtype)
            out = sample_edit(model, cond, sampler, prompt=prompt, x0=x0)
            pred = decode(out, human.fps_num, human.fps_den)
            pred = VideoClip(np.clip(pred.frames, 0.0, 1.0), pred.fps_num, pred.fps_den)
        else:
            pred = read_clip(_resolve_edited(edited_dir, row))
        return (row.pair_id, pred, humanoid, human)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(score_row, range(len(rows))))
    else:
        entries = [score_row(i) for i in range(len(rows))]

    extra = {"manifest": os.path.abspath(manifest_path)}
    if sampler is not None:
        extra.update({"sampler_steps": sampler.steps, "sampler_seed": sampler.seed})
    mode = "model" if model is not None else "edited-dir"
    return assemble_report(entries, mode=mode, split=split or "all", extra_config=extra)
