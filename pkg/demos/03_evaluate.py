"""
Similarity metrics and dataset-level evaluation
================================================

PSNR, SSIM and MSE are the scorecard for edited clips. This walks their
closed-form behavior on toy images, then runs the dataset-level harness in
its two modes: scoring a directory of already-edited clips, and what the
copy-input baseline means.

Run it:  python3 demos/03_evaluate.py
"""

import json
import os
import shutil

import numpy as np

from robovid.datagen import DatasetConfig, generate_dataset, read_manifest
from robovid.metrics import evaluate_dataset, mse_255, psnr, ssim
from robovid.video import VideoClip, read_clip, write_clip

base = os.path.join(os.path.dirname(__file__), "out")

# --- the metrics on known inputs ---------------------------------------
# All three run on the [0, 255] scale even though clips store [0, 1] floats.
zeros = VideoClip(np.zeros((2, 16, 16, 3), dtype=np.float32), 8, 1)
ones = VideoClip(np.ones((2, 16, 16, 3), dtype=np.float32), 8, 1)
half = VideoClip(np.full((2, 16, 16, 3), 0.5, dtype=np.float32), 8, 1)

print("closed forms:")
print(f"  MSE(black, white) = {mse_255(zeros, ones):.1f}  (255^2 = 65025)")
print(f"  PSNR at that MSE  = {psnr(zeros, ones):.3f} dB (the 0 dB anchor)")
print(f"  PSNR(black, gray) = {psnr(zeros, half):.3f} dB "
      f"(+6.021 dB per halved amplitude)")
print(f"  SSIM(x, x)        = {ssim(ones, ones):.1f}")

# PSNR is a log scale: every halving of the error amplitude adds the same
# 20*log10(2) = 6.0206 dB.
quarter = VideoClip(np.full((2, 16, 16, 3), 0.25, dtype=np.float32), 8, 1)
print(f"  PSNR(black, quarter-gray) = {psnr(zeros, quarter):.3f} dB")

# --- dataset-level evaluation -------------------------------------------
data_dir = os.path.join(base, "eval_data")
dcfg = DatasetConfig(scenes=3, animations=2, cameras=1, pairs=6, val_scenes=1,
                     frames=8, width=32, height=24, seed=11)
manifest = generate_dataset(dcfg, data_dir, overwrite=True)
val_rows = [r for r in read_manifest(manifest) if r.split == "validation"]

# "edited-dir" mode scores clips some external process produced. To see the
# scale of the task we fake two editors: a perfect one (copies the ground
# truth) and a lazy one (copies the input). The lazy one IS the copy-input
# baseline every report carries.
perfect_dir = os.path.join(base, "edited_perfect")
lazy_dir = os.path.join(base, "edited_lazy")
for d in (perfect_dir, lazy_dir):
    shutil.rmtree(d, ignore_errors=True)
    os.makedirs(d)
for r in val_rows:
    truth = read_clip(os.path.join(data_dir, r.humanoid_path))
    human = read_clip(os.path.join(data_dir, r.human_path))
    write_clip(os.path.join(perfect_dir, f"{r.pair_id}.xhv"), truth)
    write_clip(os.path.join(lazy_dir, f"{r.pair_id}.xhv"), human)

report = evaluate_dataset(manifest, split="validation", edited_dir=perfect_dir)
print(f"\nperfect editor: PSNR {report.psnr:.1f} dB, SSIM {report.ssim:.4f}, "
      f"MSE {report.mse:.3f}")
print(f"  copy-input baseline: PSNR {report.baseline_psnr:.3f} dB")
print(f"  delta vs baseline: {report.psnr_delta:+.3f} dB")

report = evaluate_dataset(manifest, split="validation", edited_dir=lazy_dir)
print(f"lazy editor (copies its input): delta {report.psnr_delta:+.3f} dB "
      "- indistinguishable from the baseline, as it should be")

# Reports serialize to JSON (aggregates, per-clip rows, run metadata); the
# CLI's --report/--csv flags write the same structure to disk.
blob = json.loads(report.to_json())
print(f"\nreport keys: {sorted(blob)[:6]} ...")
print(f"per-clip rows: {[c['clip_id'] for c in blob['clips']]}")
