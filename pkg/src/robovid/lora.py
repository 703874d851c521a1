"""Low-rank adaptation of named weight matrices.

An adapter adds (alpha/rank) * A @ B to a 2-D weight used as x @ W, with
A the down-projection (d_in, rank) and B the up-projection (rank, d_out).
B starts at zero so a freshly attached adapter is an exact identity.
Wrapped base weights are frozen; the adapters carry all of the update.
"""

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_tensors, pack_meta, save_tensors, split_meta
from .rng import substream
from .tensor import Tensor

# attention projections plus both feed-forward linears, in every block
DEFAULT_TARGET_SUFFIXES = (
    "attn.q.weight", "attn.k.weight", "attn.v.weight", "attn.out.weight",
    "mlp.fc1.weight", "mlp.fc2.weight",
)

A_INIT_STD = 0.02


@dataclass
class LoraAdapter:
    target: str  # name of the wrapped base weight
    rank: int
    alpha: float
    A: Tensor  # (d_in, rank)
    B: Tensor  # (rank, d_out)

    @property
    def scaling(self):
        return self.alpha / self.rank

    def delta(self):
        """Effective additive weight, shaped exactly like the target."""
        return (self.A.data @ self.B.data) * np.asarray(self.scaling, dtype=self.A.dtype)


def _default_match(name):
    # per-block attention and feed-forward weights; excludes same-suffixed
    # glue like the timestep MLP
    return name.startswith("block") and any(
        name.endswith(suf) for suf in DEFAULT_TARGET_SUFFIXES)


def select_targets(params, selector=None):
    """Weight names an adapter should wrap, in parameter order."""
    if selector is None:
        selector = _default_match
    if callable(selector):
        names = [n for n in params if selector(n)]
    else:
        patterns = tuple(selector)
        names = [n for n in params if any(pat in n for pat in patterns)]
    for n in names:
        if params[n].ndim != 2:
            raise ValueError(f"adapter target '{n}' is not a 2-D weight")
    return names


def attach(params, rank, alpha, seed=0, selector=None):
    """Create adapters for every selected weight and freeze those weights.

    Returns dict target-name -> LoraAdapter. A is small-random, B zero,
    so the adapted model initially computes exactly the base function.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    names = select_targets(params, selector)
    if not names:
        raise ValueError("adapter selector matched no parameters")
    rng = substream(seed, "lora")
    adapters = {}
    for name in names:
        w = params[name]
        d_in, d_out = w.shape
        a = (rng.standard_normal((d_in, rank)) * A_INIT_STD).astype(w.dtype)
        adapters[name] = LoraAdapter(
            name, rank, float(alpha),
            Tensor(a, requires_grad=True),
            Tensor(np.zeros((rank, d_out), dtype=w.dtype), requires_grad=True),
        )
        w.requires_grad = False
    return adapters


def trainable_count(adapters):
    """Exactly rank * (d_in + d_out) scalars per adapter."""
    return sum(ad.A.size + ad.B.size for ad in adapters.values())


def merge(params, adapters):
    """Fold every adapter into a plain parameter dict (copies throughout)."""
    merged = {}
    for name, p in params.items():
        ad = adapters.get(name)
        if ad is not None:
            if ad.A.shape[0] != p.shape[0] or ad.B.shape[1] != p.shape[1]:
                raise ValueError(
                    f"adapter for '{name}' has shapes {ad.A.shape}x{ad.B.shape}, "
                    f"target is {p.shape}")
            merged[name] = Tensor(p.data + ad.delta(), requires_grad=True)
        else:
            merged[name] = Tensor(p.data.copy(), requires_grad=True)
    return merged


def unmerge(params, adapters):
    """Inverse of merge up to float rounding (<= 1e-6 relative)."""
    out = {}
    for name, p in params.items():
        ad = adapters.get(name)
        if ad is not None:
            out[name] = Tensor(p.data - ad.delta(), requires_grad=True)
        else:
            out[name] = Tensor(p.data.copy(), requires_grad=True)
    return out


def save_adapters(path, adapters, step=None, extra_config=None):
    """Adapter-only checkpoint, flagged so it cannot pose as a base model."""
    tensors = {}
    for name, ad in adapters.items():
        tensors[f"lora.{name}.A"] = ad.A.data
        tensors[f"lora.{name}.B"] = ad.B.data
    cfg = {"lora": {
        "targets": list(adapters),
        "rank": next(iter(adapters.values())).rank if adapters else 0,
        "alpha": next(iter(adapters.values())).alpha if adapters else 0.0,
    }}
    if extra_config:
        cfg.update(extra_config)
    save_tensors(path, pack_meta(tensors, config=cfg, adapter=True, step=step))


def load_adapters(path, params, trainable=True):
    """Load an adapter checkpoint against its matching base parameters.

    Every stored target must exist in `params` with a congruent shape;
    the wrapped weights are frozen just as attach() leaves them.
    """
    plain, meta = split_meta(load_tensors(path))
    if not meta.get("adapter"):
        raise ValueError(f"{path} is not an adapter checkpoint")
    lcfg = meta.get("config", {}).get("lora", {})
    rank, alpha = int(lcfg.get("rank", 0)), float(lcfg.get("alpha", 0.0))
    adapters = {}
    for target in lcfg.get("targets", []):
        a_name, b_name = f"lora.{target}.A", f"lora.{target}.B"
        if a_name not in plain or b_name not in plain:
            raise ValueError(f"{path}: incomplete adapter for '{target}'")
        if target not in params:
            raise ValueError(f"adapter targets '{target}' which the base model lacks")
        a, b = plain[a_name], plain[b_name]
        w = params[target]
        if a.shape != (w.shape[0], rank) or b.shape != (rank, w.shape[1]):
            raise ValueError(
                f"adapter for '{target}' has shapes {a.shape}x{b.shape}, "
                f"base weight is {w.shape}")
        adapters[target] = LoraAdapter(target, rank, alpha,
                                       Tensor(a, requires_grad=trainable),
                                       Tensor(b, requires_grad=trainable))
        w.requires_grad = False
    if not adapters:
        raise ValueError(f"{path}: adapter checkpoint lists no targets")
    return adapters
