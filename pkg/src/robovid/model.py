"""Condition-masked video transformer predicting flow velocities.

Clean source-video tokens (the condition stream) and noisy target-video
tokens (the generation stream) share one sequence. Attention is masked so
condition queries never look at generation keys; generation tokens see
everything. Both streams share positional embeddings — a learned stream
embedding is what tells them apart. A timestep + prompt vector modulates
every block (shift/scale/gate around attention and the MLP).

The head predicts the clean target tokens (with a skip gain on the
condition stream so copy-like edits are cheap to represent) and the
forward pass
converts that prediction into the velocity of the linear noise-to-data
path, v = (pred - x_t)/(1 - t); the conversion keeps integration from
accumulating field error, since the final Euler step lands exactly on the
predicted target.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_tensors, pack_meta, save_tensors, split_meta
from .codec import PatchSpec, positional_embedding
from .rng import substream
from .tensor import Tensor

DEFAULT_PROMPTS = ("Humanoid video", "Human video", "Robot arm video", "Static scene video")

# upper bound on the 1/(1 - t) velocity conversion factor (see forward).
# A uniform Euler grid with N <= 32 steps only queries t <= 1 - 1/32, so the
# clamp never engages at sampling time; it caps how hard training draws with
# t ~ 1 can weight the squared-velocity loss (worst case RATE_CLAMP**2).
RATE_CLAMP = 32.0


@dataclass(frozen=True)
class DiTConfig:
    dim: int = 132
    heads: int = 4
    blocks: int = 4
    mlp_ratio: int = 4
    patch: PatchSpec = field(default_factory=lambda: PatchSpec(4, 8, 8, 3))
    prompts: tuple = DEFAULT_PROMPTS

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.dim % 6 != 0:
            raise ValueError(f"dim {self.dim} must be divisible by 6 for factorized positions")
        if self.blocks < 1:
            raise ValueError("need at least one block")
        if len(set(self.prompts)) != len(self.prompts) or not self.prompts:
            raise ValueError("prompts must be non-empty and unique")

    @property
    def head_dim(self):
        return self.dim // self.heads

    @property
    def mlp_dim(self):
        return self.dim * self.mlp_ratio

    @property
    def token_dim(self):
        return self.patch.token_dim

    def to_dict(self):
        return {
            "dim": self.dim,
            "heads": self.heads,
            "blocks": self.blocks,
            "mlp_ratio": self.mlp_ratio,
            "patch": [self.patch.pt, self.patch.ph, self.patch.pw, self.patch.channels],
            "prompts": list(self.prompts),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        patch = d.pop("patch", None)
        if patch is not None:
            d["patch"] = PatchSpec(*patch)
        if "prompts" in d:
            d["prompts"] = tuple(d["prompts"])
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ValueError(f"unknown model config key: {key}")
        return cls(**d)


@dataclass(frozen=True)
class ConditionMask:
    """allowed[q, k] — condition queries are blind to generation keys."""

    n_con: int
    n_gen: int
    allowed: np.ndarray  # (n_con + n_gen, n_con + n_gen) bool

    @property
    def blocked_count(self):
        return int((~self.allowed).sum())


def build_mask(n_con, n_gen):
    if n_con < 1 or n_gen < 1:
        raise ValueError(f"both streams must be non-empty, got {n_con} and {n_gen}")
    s = n_con + n_gen
    allowed = np.ones((s, s), dtype=bool)
    allowed[:n_con, n_con:] = False
    return ConditionMask(n_con, n_gen, allowed)


def timestep_embedding(t, dim, dtype=np.float64):
    """Sinusoidal embedding of a scalar time in [0, 1]."""
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"timestep {t} outside [0, 1]")
    half = dim // 2
    if half * 2 != dim:
        raise ValueError("timestep embedding dim must be even")
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = (t * 1000.0) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(dtype)


def parameter_shapes(config):
    """Ordered name -> shape map; the single source of truth for layout."""
    d, m, td = config.dim, config.mlp_dim, config.token_dim
    shapes = {
        "input_proj.weight": (td, d),
        "input_proj.bias": (d,),
        "stream_embed": (2, d),
        "time_mlp.fc1.weight": (d, d),
        "time_mlp.fc1.bias": (d,),
        "time_mlp.fc2.weight": (d, d),
        "time_mlp.fc2.bias": (d,),
        "prompt_table": (len(config.prompts), d),
    }
    for i in range(config.blocks):
        p = f"block{i}"
        shapes[f"{p}.attn.q.weight"] = (d, d)
        shapes[f"{p}.attn.q.bias"] = (d,)
        shapes[f"{p}.attn.k.weight"] = (d, d)
        shapes[f"{p}.attn.k.bias"] = (d,)
        shapes[f"{p}.attn.v.weight"] = (d, d)
        shapes[f"{p}.attn.v.bias"] = (d,)
        shapes[f"{p}.attn.out.weight"] = (d, d)
        shapes[f"{p}.attn.out.bias"] = (d,)
        shapes[f"{p}.mlp.fc1.weight"] = (d, m)
        shapes[f"{p}.mlp.fc1.bias"] = (m,)
        shapes[f"{p}.mlp.fc2.weight"] = (m, d)
        shapes[f"{p}.mlp.fc2.bias"] = (d,)
        shapes[f"{p}.mod.weight"] = (d, 6 * d)
        shapes[f"{p}.mod.bias"] = (6 * d,)
    shapes["final_mod.weight"] = (d, 2 * d)
    shapes["final_mod.bias"] = (2 * d,)
    shapes["head.weight"] = (d, td)
    shapes["head.bias"] = (td,)
    shapes["readout.gain.weight"] = (d, td)
    shapes["readout.gain.bias"] = (td,)
    return shapes


# small std for modulation / readout paths keeps early residuals gentle
# without zeroing them (outputs must respond to t and prompt from step 0)
_SMALL_STD = 0.02


def _init_std(name, shape):
    if name.endswith(".bias"):
        return 0.0
    if name in ("stream_embed", "prompt_table") or ".mod." in name or name.startswith(
            ("final_mod", "head", "readout")) or name.endswith("mod.weight"):
        return _SMALL_STD
    return 1.0 / math.sqrt(shape[0])


def init_parameters(config, seed, dtype=np.float32):
    """Fresh parameter dict; identical bytes for identical (config, seed)."""
    rng = substream(seed, "init")
    params = {}
    for name, shape in parameter_shapes(config).items():
        std = _init_std(name, shape)
        if std == 0.0:
            data = np.zeros(shape, dtype=np.float64)
        else:
            data = rng.standard_normal(shape) * std
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def count_parameters(params):
    return int(sum(p.size for p in params.values()))


def _linear(params, adapters, prefix, x):
    """x @ W (+ b), plus the low-rank adapter delta when one is attached."""
    y = T.matmul(x, params[f"{prefix}.weight"])
    bias = params.get(f"{prefix}.bias")
    if bias is not None:
        y = T.add(y, bias)
    if adapters:
        ad = adapters.get(f"{prefix}.weight")
        if ad is not None:
            y = T.add(y, T.scale(T.matmul(T.matmul(x, ad.A), ad.B), ad.scaling))
    return y


def _const(arr, dtype):
    return Tensor(np.asarray(arr, dtype=dtype))


_POS_CACHE = {}


def _cached_pos_embedding(positions, dim):
    key = (dim, positions.tobytes())
    hit = _POS_CACHE.get(key)
    if hit is None:
        if len(_POS_CACHE) >= 8:
            _POS_CACHE.clear()
        hit = _POS_CACHE[key] = positional_embedding(positions, dim)
    return hit


def forward(params, config, cond, gen, t, prompt, adapters=None, collect_hidden=False):
    """Predict velocities at generation positions.

    `cond` and `gen` are TokenGrids on the same lattice: clean source
    tokens and the current noisy state. Returns a (n_gen, token_dim)
    Tensor (plus per-block hidden states if requested). Condition-stream
    outputs are computed but never read out.
    """
    if not cond.same_lattice(gen):
        raise ValueError("condition and generation grids must share patch spec, resolution and positions")
    if cond.dim != config.token_dim:
        raise ValueError(f"token dim {cond.dim} does not match patch spec ({config.token_dim})")
    if prompt not in config.prompts:
        raise ValueError(f"unknown prompt {prompt!r}; known prompts: {list(config.prompts)}")
    dtype = params["head.weight"].dtype
    d = config.dim
    n_con, n_gen = cond.count, gen.count
    mask = build_mask(n_con, n_gen).allowed

    x_con = _const(cond.tokens, dtype)
    x_gen = gen.tokens if isinstance(gen.tokens, Tensor) else _const(gen.tokens, dtype)

    # conditioning vector: timestep features through an MLP, plus prompt row
    temb = _const(timestep_embedding(t, d)[None, :], dtype)
    c = _linear(params, adapters, "time_mlp.fc1", temb)
    c = _linear(params, adapters, "time_mlp.fc2", T.gelu(c))
    pidx = config.prompts.index(prompt)
    c = T.add(c, params["prompt_table"][pidx])  # (1, d)

    # token embedding: shared projection + shared positions + stream tag
    pos = _const(_cached_pos_embedding(cond.positions, d), dtype)
    h_con = T.add(T.add(_linear(params, adapters, "input_proj", x_con), pos),
                  params["stream_embed"][0])
    h_gen = T.add(T.add(_linear(params, adapters, "input_proj", x_gen), pos),
                  params["stream_embed"][1])
    h = T.concat([h_con, h_gen], axis=0)  # (S, d)

    ln_g = _const(np.ones(d), dtype)
    ln_b = _const(np.zeros(d), dtype)
    inv_sqrt_hd = 1.0 / math.sqrt(config.head_dim)
    s_total = n_con + n_gen
    hidden = []

    for i in range(config.blocks):
        p = f"block{i}"
        mod = _linear(params, adapters, f"{p}.mod", c)  # (1, 6d)
        parts = [T.reshape(mod[:, k * d:(k + 1) * d], (d,)) for k in range(6)]
        shift_a, scale_a, gate_a, shift_m, scale_m, gate_m = parts

        hn = T.layer_norm(h, ln_g, ln_b)
        hm = T.add(T.mul(hn, T.add(scale_a, 1.0)), shift_a)
        q = _linear(params, adapters, f"{p}.attn.q", hm)
        k = _linear(params, adapters, f"{p}.attn.k", hm)
        v = _linear(params, adapters, f"{p}.attn.v", hm)
        qh = T.transpose(T.reshape(q, (s_total, config.heads, config.head_dim)), (1, 0, 2))
        kh = T.transpose(T.reshape(k, (s_total, config.heads, config.head_dim)), (1, 2, 0))
        vh = T.transpose(T.reshape(v, (s_total, config.heads, config.head_dim)), (1, 0, 2))
        probs = T.softmax_lastdim(T.scale(T.matmul(qh, kh), inv_sqrt_hd), mask)
        ctx = T.reshape(T.transpose(T.matmul(probs, vh), (1, 0, 2)), (s_total, d))
        h = T.add(h, T.mul(_linear(params, adapters, f"{p}.attn.out", ctx), gate_a))

        hn = T.layer_norm(h, ln_g, ln_b)
        hm = T.add(T.mul(hn, T.add(scale_m, 1.0)), shift_m)
        u = T.gelu(_linear(params, adapters, f"{p}.mlp.fc1", hm))
        h = T.add(h, T.mul(_linear(params, adapters, f"{p}.mlp.fc2", u), gate_m))
        if collect_hidden:
            hidden.append(h.data.copy())

    fmod = _linear(params, adapters, "final_mod", c)  # (1, 2d)
    shift_f = T.reshape(fmod[:, :d], (d,))
    scale_f = T.reshape(fmod[:, d:], (d,))
    hn = T.layer_norm(h, ln_g, ln_b)
    hm = T.add(T.mul(hn, T.add(scale_f, 1.0)), shift_f)
    pred = _linear(params, adapters, "head", hm[n_con:])  # (n_gen, token_dim)

    # conditioned skip readout: a per-channel gain on the raw condition
    # tokens makes copy-like targets exactly representable (a constant unit
    # gain reproduces the condition stream).  The noisy state reaches the
    # prediction only through the attended trunk, never via a direct skip:
    # the clean target is fixed by the condition clip, and keeping the
    # readout's dependence on the noisy input weak stops integration error
    # from feeding back into later sampler steps.
    td = config.token_dim
    g_c = T.reshape(_linear(params, adapters, "readout.gain", c), (td,))
    pred = T.add(pred, T.mul(x_con, g_c))

    # the network predicts the clean target; emit the matching velocity for
    # the linear path, v = (pred - x)/(1 - t).  The divisor is clamped so
    # training draws with t ~ 1 stay finite; an Euler grid queries t <= 1-1/N
    # and never enters the clamped region for N <= RATE_CLAMP.
    rate = 1.0 / max(1.0 - t, 1.0 / RATE_CLAMP)
    vel = T.scale(T.add(pred, T.neg(x_gen)), rate)

    if collect_hidden:
        return vel, hidden
    return vel


class DiT:
    """Config + parameters (+ optional low-rank adapters), callable."""

    def __init__(self, config, params=None, adapters=None, seed=0, dtype=np.float32):
        self.config = config
        self.params = params if params is not None else init_parameters(config, seed, dtype)
        self.adapters = adapters or {}

    def __call__(self, cond, gen, t, prompt, collect_hidden=False):
        return forward(self.params, self.config, cond, gen, t, prompt,
                       adapters=self.adapters, collect_hidden=collect_hidden)

    def named_parameters(self):
        out = dict(self.params)
        for target, ad in self.adapters.items():
            out[f"lora.{target}.A"] = ad.A
            out[f"lora.{target}.B"] = ad.B
        return out

    def trainable(self):
        return {n: p for n, p in self.named_parameters().items() if p.requires_grad}


def save_model(path, config, params, step=None, extra_config=None):
    """Base-model checkpoint: every parameter plus a config echo."""
    tensors = {name: p.data for name, p in params.items()}
    cfg = {"model": config.to_dict()}
    if extra_config:
        cfg.update(extra_config)
    save_tensors(path, pack_meta(tensors, config=cfg, adapter=False, step=step))


def load_model(path, trainable=True):
    """Returns (config, params, meta). Fails on shape/layout mismatch."""
    plain, meta = split_meta(load_tensors(path))
    if meta.get("adapter"):
        raise ValueError(f"{path} is an adapter checkpoint, not a base model")
    if "config" not in meta or "model" not in meta["config"]:
        raise ValueError(f"{path} carries no model config echo")
    config = DiTConfig.from_dict(meta["config"]["model"])
    expected = parameter_shapes(config)
    params = {}
    for name, shape in expected.items():
        if name not in plain:
            raise ValueError(f"{path}: missing parameter '{name}'")
        if plain[name].shape != shape:
            raise ValueError(f"{path}: parameter '{name}' has shape {plain[name].shape}, expected {shape}")
        params[name] = Tensor(plain[name], requires_grad=trainable)
    extra = set(plain) - set(expected)
    if extra:
        raise ValueError(f"{path}: unexpected tensors {sorted(extra)}")
    return config, params, meta


def config_json(config):
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
