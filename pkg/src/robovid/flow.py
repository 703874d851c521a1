"""Flow matching on token grids: linear noise->data paths, velocity
regression, Euler sampling, and the training loop.

The path is x_t = t*x1 + (1-t)*x0 with constant target velocity x1 - x0.
The model sees the clean source tokens as its condition stream and the
noisy state as its generation stream; only generation positions carry
loss. Sampling integrates the learned field from t=0 to 1 with N uniform
Euler steps.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_tensors, pack_meta, save_tensors, split_meta
from .codec import encode
from .datagen import load_pair, read_manifest
from .lora import LoraAdapter, save_adapters
from .model import DiT, DiTConfig, parameter_shapes, save_model
from .optim import OptimizerState, adamw_step, clip_grad_norm, zero_grads
from .rng import DEFAULT_SEED, substream
from .tensor import Tensor, assert_finite

DEFAULT_PROMPT = "Humanoid video"

# Global-norm gradient clip for training. Draws with t near 1 weight the
# squared-velocity loss by up to RATE_CLAMP**2, so their gradients arrive
# orders of magnitude above the typical step; the clip keeps their direction
# but caps the magnitude near an ordinary step's norm.
MAX_GRAD_NORM = 10.0


@dataclass
class FlowSample:
    """One training draw: clean pair, noise, time, and derived path state."""

    x1_con: object  # TokenGrid of the source (human) clip
    x1_gen: object  # TokenGrid of the target (humanoid) clip
    x0: np.ndarray
    t: float
    xt: np.ndarray
    vt: np.ndarray


def make_sample(x1_con, x1_gen, rng, t=None):
    """Draws t (uniform, unless given) then x0 (standard normal)."""
    if not x1_con.same_lattice(x1_gen):
        raise ValueError("paired grids must share patch spec, resolution and positions")
    if t is None:
        t = float(rng.random())
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"path time {t} outside [0, 1]")
    x1 = x1_gen.tokens
    x0 = rng.standard_normal(x1.shape).astype(x1.dtype)
    xt = t * x1 + (1.0 - t) * x0
    vt = x1 - x0
    return FlowSample(x1_con, x1_gen, x0, t, xt, vt)


def fm_loss(model, sample, prompt=DEFAULT_PROMPT):
    """Mean squared velocity error over generation positions (per component)."""
    vel = model(sample.x1_con, sample.x1_gen.with_tokens(sample.xt), sample.t, prompt)
    loss = T.mse(vel, Tensor(sample.vt))
    assert_finite(loss.data, "flow-matching loss")
    return loss


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 32
    seed: int = DEFAULT_SEED
    scheme: str = "euler"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"sampler needs at least 1 step, got {self.steps}")
        if self.scheme != "euler":
            raise ValueError(f"unknown integration scheme '{self.scheme}'")


def sample_edit(model, x1_con, sampler, prompt=DEFAULT_PROMPT, x0=None):
    """Integrate the velocity field from t=0 to 1; returns the final grid.

    Deterministic given the sampler seed (or an explicit x0).
    """
    n = sampler.steps
    if x0 is None:
        rng = substream(sampler.seed, "sampler")
        x0 = rng.standard_normal(x1_con.tokens.shape).astype(x1_con.tokens.dtype)
    x = np.array(x0, copy=True)
    inv_n = 1.0 / n
    for k in range(n):
        vel = model(x1_con, x1_con.with_tokens(x), k / n, prompt)
        if not np.isfinite(vel.data).all():
            raise FloatingPointError(f"non-finite velocity at integration step {k}")
        x = x + inv_n * vel.data
        if not np.isfinite(x).all():
            raise FloatingPointError(f"non-finite state after integration step {k}")
    return x1_con.with_tokens(x)


# training -----------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 2000
    warmup_steps: int = 50
    lr: float = 2e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.95
    batch_size: int = 1
    seed: int = DEFAULT_SEED
    lora_rank: int = 8
    lora_alpha: float = 16.0

    def __post_init__(self):
        if self.steps < 0 or self.warmup_steps < 0:
            raise ValueError("step counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.lora_rank < 0:
            raise ValueError("lora_rank must be >= 0 (0 disables adapters)")

    @classmethod
    def from_dict(cls, raw):
        known = set(cls.__dataclass_fields__)
        for key in raw:
            if key not in known:
                raise ValueError(f"unknown training config key: {key}")
        return cls(**raw)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lr_at(config, step):
    """Linear warmup to lr over warmup_steps, then constant."""
    if step < config.warmup_steps:
        return config.lr * (step + 1) / config.warmup_steps
    return config.lr


def write_trace(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for step, loss, lr in rows:
            f.write(f"{step}\t{loss!r}\t{lr!r}\n")


def read_trace(path):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            step, loss, lr = line.rstrip("\n").split("\t")
            rows.append((int(step), float(loss), float(lr)))
    return rows


def smoothed_loss(trace, step, window=50):
    """Trailing-window mean of the loss column at `step`."""
    vals = [loss for s, loss, _ in trace if s <= step]
    if not vals:
        raise ValueError("no trace rows at or before requested step")
    return float(np.mean(vals[-window:]))


class PairCache:
    """Lazy clip-pair loader: reads and tokenizes each pair once."""

    def __init__(self, rows, base_dir, patch):
        if not rows:
            raise ValueError("empty manifest: nothing to train on")
        self.rows = rows
        self.base_dir = base_dir
        self.patch = patch
        self._cache = {}

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        if i not in self._cache:
            human, humanoid = load_pair(self.rows[i], self.base_dir)
            self._cache[i] = (encode(human, self.patch), encode(humanoid, self.patch))
        return self._cache[i]


def train_step(model, pairs, config, opt_state, step):
    """One optimization step; all randomness comes from the step substream,
    so a resumed run replays the exact same draws."""
    rng = substream(config.seed, "train", step)
    trainable = model.trainable()
    zero_grads(trainable)
    losses = []
    total = None
    for _ in range(config.batch_size):
        cond, gen = pairs[int(rng.integers(len(pairs)))]
        sample = make_sample(cond, gen, rng)
        loss = fm_loss(model, sample)
        total = loss if total is None else T.add(total, loss)
        losses.append(float(loss.data))
    if config.batch_size > 1:
        total = T.scale(total, 1.0 / config.batch_size)
    total.backward()
    clip_grad_norm(trainable, MAX_GRAD_NORM)
    lr = lr_at(config, step)
    adamw_step(trainable, opt_state, lr=lr)
    zero_grads(trainable)
    return float(np.mean(losses)), lr


def train(model, manifest_path, config, out_dir, start_step=0, opt_state=None,
          trace=None, log=None):
    """Run (or continue) training; writes checkpoints and the loss trace.

    Returns the full trace as a list of (step, loss, lr). Training draws
    only on manifest rows with split == "train".
    """
    rows = [r for r in read_manifest(manifest_path) if r.split == "train"]
    pairs = PairCache(rows, os.path.dirname(os.path.abspath(manifest_path)),
                      model.config.patch)
    if opt_state is None:
        opt_state = OptimizerState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                                   weight_decay=config.weight_decay, step=start_step)
    trace = [row for row in (trace or []) if row[0] < start_step]
    os.makedirs(out_dir, exist_ok=True)
    t_begin = time.perf_counter()
    for step in range(start_step, config.steps):
        loss, lr = train_step(model, pairs, config, opt_state, step)
        trace.append((step, loss, lr))
        if log is not None and (step % 100 == 0 or step == config.steps - 1):
            rate = (time.perf_counter() - t_begin) / max(1, step - start_step + 1)
            log(f"step {step}: loss {loss:.5f} lr {lr:.2e} ({rate:.2f} s/step)")
    write_trace(os.path.join(out_dir, "trace.tsv"), trace)
    save_checkpoints(out_dir, model, opt_state, config)
    return trace


def save_checkpoints(out_dir, model, opt_state, config):
    """Write base, adapter, merged, and resumable-state checkpoints."""
    from .lora import merge

    step = opt_state.step
    extra = {"train": config.to_dict()}
    save_model(os.path.join(out_dir, "model.xhckpt"), model.config, model.params,
               step=step, extra_config=extra)
    if model.adapters:
        save_adapters(os.path.join(out_dir, "adapter.xhckpt"), model.adapters,
                      step=step, extra_config={"model": model.config.to_dict(), **extra})
        merged = merge(model.params, model.adapters)
        save_model(os.path.join(out_dir, "merged.xhckpt"), model.config, merged,
                   step=step, extra_config=extra)
    state = {name: p.data for name, p in model.named_parameters().items()}
    for name, p in model.trainable().items():
        m, v = opt_state.moments_for(name, p)
        state[f"opt.m.{name}"] = m
        state[f"opt.v.{name}"] = v
    cfg = {"model": model.config.to_dict(), "train": config.to_dict()}
    save_tensors(os.path.join(out_dir, "state.xhckpt"),
                 pack_meta(state, config=cfg, adapter=False, step=step))


def load_training_state(path, trainable_base=True):
    """Rebuild (model, opt_state, config, step) from a state checkpoint."""
    plain, meta = split_meta(load_tensors(path))
    if "config" not in meta or "model" not in meta["config"]:
        raise ValueError(f"{path} carries no config echo; not a training state")
    model_cfg = DiTConfig.from_dict(meta["config"]["model"])
    train_cfg = TrainConfig.from_dict(meta["config"]["train"])
    step = meta.get("step", 0)

    params = {}
    for name, shape in parameter_shapes(model_cfg).items():
        if name not in plain:
            raise ValueError(f"{path}: missing parameter '{name}'")
        params[name] = Tensor(plain[name], requires_grad=trainable_base)
    adapters = {}
    for name in plain:
        if name.startswith("lora.") and name.endswith(".A"):
            target = name[len("lora."):-2]
            a = plain[name]
            b = plain.get(f"lora.{target}.B")
            if b is None:
                raise ValueError(f"{path}: incomplete adapter for '{target}'")
            adapters[target] = LoraAdapter(target, train_cfg.lora_rank,
                                           train_cfg.lora_alpha,
                                           Tensor(a, requires_grad=True),
                                           Tensor(b, requires_grad=True))
            params[target].requires_grad = False
    model = DiT(model_cfg, params=params, adapters=adapters)

    opt = OptimizerState(lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                         weight_decay=train_cfg.weight_decay, step=step)
    for name, p in model.trainable().items():
        m = plain.get(f"opt.m.{name}")
        v = plain.get(f"opt.v.{name}")
        if m is None or v is None:
            raise ValueError(f"{path}: missing optimizer moments for '{name}'")
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"{path}: optimizer moment shape mismatch for '{name}'")
        opt.m[name] = m.copy()
        opt.v[name] = v.copy()
    return model, opt, train_cfg, step
