"""AdamW with decoupled weight decay, over named parameter dicts."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus hyperparameters.

    The step counter increments by exactly 1 per adamw_step call; m and v
    stay shape-congruent with their parameter.
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def moments_for(self, name, param):
        if name not in self.m:
            self.m[name] = np.zeros_like(param.data)
            self.v[name] = np.zeros_like(param.data)
        return self.m[name], self.v[name]


def adamw_step(params, state, lr=None):
    """One AdamW update over `params` (dict name -> Tensor), in place.

    Weight decay is decoupled: applied to the parameter directly, never
    through the moments. `lr` overrides state.lr for schedules.
    """
    if lr is None:
        lr = state.lr
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} mismatches parameter '{name}' {p.data.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        m, v = state.moments_for(name, p)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data = p.data - lr * (mhat / (np.sqrt(vhat) + state.eps)) - (lr * state.weight_decay) * p.data
        if not np.isfinite(p.data).all():
            raise FloatingPointError(f"non-finite parameter '{name}' after update")
    return params, state


def clip_grad_norm(params, max_norm):
    """Rescale gradients in place so their joint L2 norm is at most max_norm.

    A pure function of the current gradients (no state), so training runs
    that resume from a checkpoint replay identical updates. Returns the
    pre-clip global norm.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be > 0, got {max_norm}")
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * np.asarray(max_norm / norm, dtype=p.grad.dtype)
    return norm


def trainable(params):
    """Subset of a named-parameter dict that requires grad."""
    return {k: p for k, p in params.items() if isinstance(p, Tensor) and p.requires_grad}


def zero_grads(params):
    for p in params.values():
        p.zero_grad()
