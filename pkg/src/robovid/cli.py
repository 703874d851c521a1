"""Command-line surface: gen-data, train, edit, robotize, eval, inspect.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 numerical
failure. Every subcommand is deterministic under a fixed seed; all
randomness flows from the seed through named substreams.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from .checkpoint import MAGIC as CKPT_MAGIC
from .checkpoint import load_tensors, split_meta
from .codec import decode, encode
from .datagen import DatasetConfig, generate_dataset, read_manifest
from .flow import (DEFAULT_PROMPT, SamplerConfig, TrainConfig,
                   load_training_state, read_trace, sample_edit,
                   smoothed_loss, train)
from .lora import attach, load_adapters
from .metrics import EvalReport, evaluate_dataset
from .model import DiT, DiTConfig, count_parameters, init_parameters, load_model
from .rng import DEFAULT_SEED, substream
from .video import MAGIC as VIDEO_MAGIC
from .video import export_ppm, read_clip, write_clip


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def apply_overrides(raw, overrides):
    """Apply repeated `--set dotted.key=value` items onto a config dict.

    Values parse as JSON when possible, else stay strings.
    """
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"override '{item}' is not of the form key=value")
        key, val = item.split("=", 1)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        parts = key.split(".")
        target = raw
        for p in parts[:-1]:
            nxt = target.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise UsageError(f"override '{key}' descends through non-object '{p}'")
            target = nxt
        target[parts[-1]] = parsed
    return raw


def _inference_model(checkpoint, adapter=None):
    config, params, _ = load_model(checkpoint, trainable=False)
    adapters = load_adapters(adapter, params, trainable=False) if adapter else {}
    return DiT(config, params=params, adapters=adapters)


def _guard_output(path, overwrite):
    if os.path.exists(path) and not overwrite:
        raise FileExistsError(f"{path} exists; pass --overwrite to replace it")


# subcommands ---------------------------------------------------------


def cmd_gen_data(args):
    raw = _load_json(args.config) if args.config else {}
    apply_overrides(raw, args.set)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = DatasetConfig.from_dict(raw)
    manifest = generate_dataset(config, args.out, overwrite=args.overwrite,
                                jobs=args.jobs)
    rows = read_manifest(manifest)
    per_split = {}
    scenes = {}
    for r in rows:
        per_split[r.split] = per_split.get(r.split, 0) + 1
        scenes.setdefault(r.split, set()).add(r.scene)
    print(f"wrote {len(rows)} pairs to {manifest}")
    for split in ("train", "validation"):
        print(f"  {split}: {per_split.get(split, 0)} pairs across "
              f"{len(scenes.get(split, ()))} scenes")


def cmd_train(args):
    trace = None
    if args.resume:
        model, opt_state, config, start = load_training_state(args.resume)
        raw = config.to_dict()
        apply_overrides(raw, args.set)
        if args.steps is not None:
            raw["steps"] = args.steps
        config = TrainConfig.from_dict(raw)
        trace_path = os.path.join(args.out, "trace.tsv")
        if os.path.exists(trace_path):
            trace = read_trace(trace_path)
    else:
        raw = _load_json(args.config) if args.config else {}
        apply_overrides(raw, args.set)
        model_raw = raw.pop("model", {})
        if args.steps is not None:
            raw["steps"] = args.steps
        if args.seed is not None:
            raw["seed"] = args.seed
        config = TrainConfig.from_dict(raw)
        model_config = DiTConfig.from_dict(model_raw) if model_raw else DiTConfig()
        params = init_parameters(model_config, config.seed)
        adapters = {}
        if config.lora_rank > 0:
            adapters = attach(params, config.lora_rank, config.lora_alpha, seed=config.seed)
        model = DiT(model_config, params=params, adapters=adapters)
        opt_state, start = None, 0

    n_train = count_parameters({n: p for n, p in model.trainable().items()})
    print(f"training {n_train} of {count_parameters(model.named_parameters())} "
          f"parameters for steps {start}..{config.steps - 1}")
    trace = train(model, args.data, config, args.out, start_step=start,
                  opt_state=opt_state, trace=trace, log=print)
    if trace:
        final = smoothed_loss(trace, trace[-1][0])
        print(f"final smoothed loss {final:.5f} over {len(trace)} steps")
    print(f"checkpoints and trace written to {args.out}")


def cmd_edit(args):
    model = _inference_model(args.checkpoint, args.adapter)
    clip = read_clip(args.input)
    cond = encode(clip, model.config.patch)
    _guard_output(args.output, args.overwrite)
    sampler = SamplerConfig(steps=args.steps, seed=args.seed if args.seed is not None else DEFAULT_SEED)
    t0 = time.perf_counter()
    out = sample_edit(model, cond, sampler, prompt=args.prompt)
    elapsed = time.perf_counter() - t0
    edited = decode(out, clip.fps_num, clip.fps_den)
    write_clip(args.output, edited)
    n_frames = edited.frames.shape[0]
    print(f"edited {args.input} -> {args.output} "
          f"({elapsed / n_frames:.3f} s/frame over {n_frames} frames, N={sampler.steps})")
    if args.ppm:
        paths = export_ppm(edited, args.ppm)
        print(f"exported {len(paths)} PPM frames to {args.ppm}")


def cmd_robotize(args):
    model = _inference_model(args.checkpoint, args.adapter)
    names = sorted(n for n in os.listdir(args.input_dir) if n.endswith(".xhv"))
    if not names:
        raise UsageError(f"no .xhv clips found in {args.input_dir}")
    os.makedirs(args.output_dir, exist_ok=True)
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    sampler = SamplerConfig(steps=args.steps, seed=seed)

    def edit_one(i):
        name = names[i]
        src = os.path.join(args.input_dir, name)
        dst = os.path.join(args.output_dir, name)
        try:
            clip = read_clip(src)
            cond = encode(clip, model.config.patch)
        except ValueError as e:
            return ("skip", name, str(e))
        _guard_output(dst, args.overwrite)
        rng = substream(seed, "sampler", i)
        x0 = rng.standard_normal(cond.tokens.shape).astype(cond.tokens.dtype)
        t0 = time.perf_counter()
        out = sample_edit(model, cond, sampler, prompt=args.prompt, x0=x0)
        spf = (time.perf_counter() - t0) / clip.frames.shape[0]
        write_clip(dst, decode(out, clip.fps_num, clip.fps_den))
        return ("ok", name, clip.frames.shape[0], spf)

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(edit_one, range(len(names))))
    else:
        results = [edit_one(i) for i in range(len(names))]

    edited = skipped = total_frames = 0
    for res in results:
        if res[0] == "ok":
            _, name, frames, spf = res
            print(f"{name}: frames={frames} {spf:.3f} s/frame")
            edited += 1
            total_frames += frames
        else:
            _, name, reason = res
            print(f"skip {name}: {reason}")
            skipped += 1
    print(f"edited {edited} clips ({total_frames} frames); skipped {skipped}")


def cmd_eval(args):
    if bool(args.checkpoint) == bool(args.edited_dir):
        raise UsageError("provide exactly one of --checkpoint or --edited-dir")
    model = sampler = None
    if args.checkpoint:
        model = _inference_model(args.checkpoint, args.adapter)
        seed = args.seed if args.seed is not None else DEFAULT_SEED
        sampler = SamplerConfig(steps=args.steps, seed=seed)
    report = evaluate_dataset(args.manifest, split=args.split, model=model,
                              sampler=sampler, edited_dir=args.edited_dir,
                              prompt=args.prompt, jobs=args.jobs)
    print(f"{report.mode} on split '{report.split}': "
          f"PSNR {report.psnr:.3f} dB | SSIM {report.ssim:.4f} | MSE {report.mse:.1f}")
    print(f"copy-input baseline: PSNR {report.baseline_psnr:.3f} dB | "
          f"SSIM {report.baseline_ssim:.4f} | MSE {report.baseline_mse:.1f}")
    print(f"PSNR delta vs baseline: {report.psnr_delta:+.3f} dB")
    if args.report:
        _guard_output(args.report, args.overwrite)
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(report.to_json())
            f.write("\n")
        print(f"report written to {args.report}")
    if args.csv:
        _guard_output(args.csv, args.overwrite)
        report.write_csv(args.csv)
        print(f"per-clip CSV written to {args.csv}")


def _inspect_checkpoint(path, tensors):
    plain, meta = split_meta(tensors)
    kind = "adapter" if meta.get("adapter") else "model"
    if any(n.startswith("opt.") for n in plain):
        kind = "training state"
    print(f"{path}: XHCKPT1 {kind} checkpoint")
    if "step" in meta:
        print(f"  step: {meta['step']}")
    total = sum(int(np.prod(a.shape)) if a.shape else 1 for a in plain.values())
    print(f"  tensors: {len(plain)} ({total} scalars)")
    for name, arr in list(plain.items())[:40]:
        print(f"    {name}: {tuple(arr.shape)}")
    if len(plain) > 40:
        print(f"    ... and {len(plain) - 40} more")
    if "config" in meta:
        print("  config:")
        for line in json.dumps(meta["config"], indent=2, sort_keys=True).splitlines():
            print(f"    {line}")


def cmd_inspect(args):
    path = args.path
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if path.endswith(".tsv"):
        rows = read_manifest(path)
        splits = {}
        for r in rows:
            splits.setdefault(r.split, []).append(r)
        print(f"{path}: manifest with {len(rows)} pairs")
        for split, group in splits.items():
            print(f"  {split}: {len(group)} pairs, {len({r.scene for r in group})} scenes, "
                  f"{len({r.anim for r in group})} animations, {len({r.camera for r in group})} cameras")
        return
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        try:
            report = EvalReport.from_json(text)
            print(report.to_json())
        except (ValueError, TypeError, KeyError):
            print(json.dumps(json.loads(text), indent=2, sort_keys=True))
        return
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:4] == VIDEO_MAGIC:
        clip = read_clip(path)
        t, h, w, c = clip.frames.shape
        print(f"{path}: XHV1 clip {t} frames of {w}x{h}x{c} at {clip.fps:g} fps")
        print(f"  value range [{clip.frames.min():.4f}, {clip.frames.max():.4f}]")
        if args.ppm:
            paths = export_ppm(clip, args.ppm)
            print(f"  exported {len(paths)} PPM frames to {args.ppm}")
        return
    if head == CKPT_MAGIC:
        _inspect_checkpoint(path, load_tensors(path))
        return
    raise UsageError(f"unrecognized file type: {path}")


# parser --------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="robovid",
                     description="Paired-video editing pipeline: synthetic data, "
                                 "flow-matching training, and clip editing.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--seed", type=int, default=None,
                       help=f"root seed (default {DEFAULT_SEED})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                       help="config override, dotted keys allowed (repeatable)")
        p.add_argument("--overwrite", action="store_true",
                       help="replace existing outputs")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    p = sub.add_parser("gen-data", help="render the paired dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--config", help="dataset config JSON")
    common(p, jobs=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="finetune the editor on a dataset")
    p.add_argument("--data", required=True, help="manifest.tsv path")
    p.add_argument("--out", required=True, help="run directory for checkpoints/trace")
    p.add_argument("--config", help="training config JSON (may embed a 'model' object)")
    p.add_argument("--steps", type=int, default=None, help="override total steps")
    p.add_argument("--resume", help="state.xhckpt to continue from")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("edit", help="edit one clip with a trained model")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.xhckpt)")
    p.add_argument("--adapter", help="adapter checkpoint to attach")
    p.add_argument("--input", required=True, help="input XHV1 clip")
    p.add_argument("--output", required=True, help="output XHV1 clip")
    p.add_argument("--steps", type=int, default=32, help="integration steps N")
    p.add_argument("--prompt", default=DEFAULT_PROMPT)
    p.add_argument("--ppm", help="directory for PPM frame export")
    common(p)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("robotize", help="edit every clip in a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--adapter")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--prompt", default=DEFAULT_PROMPT)
    common(p, jobs=True)
    p.set_defaults(func=cmd_robotize)

    p = sub.add_parser("eval", help="score a model or edited clips against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--adapter")
    p.add_argument("--edited-dir")
    p.add_argument("--split", default="validation")
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--prompt", default=DEFAULT_PROMPT)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--csv", help="write per-clip clip_id,psnr,ssim,mse table here")
    common(p, jobs=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="describe a clip, checkpoint, manifest or report")
    p.add_argument("path")
    p.add_argument("--ppm", help="for clips: export frames as PPM here")
    p.set_defaults(func=cmd_inspect)

    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.func(args)


def main(argv=None):
    try:
        run(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
