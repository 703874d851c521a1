"""Shared helpers for the test suite.

The central piece is ``fd_gradient_check``: a finite-difference oracle that
recomputes the loss from scratch for every perturbed component, so it never
trusts the backward pass it is checking.
"""

import numpy as np
import pytest

from robovid.codec import PatchSpec, TokenGrid, lattice_positions
from robovid.datagen import DatasetConfig, generate_dataset
from robovid.model import DiTConfig


def fd_gradient_check(build, tensors, step=1e-4, sample=None, rng=None):
    """Compare backward() gradients against central differences.

    ``build`` must construct a fresh graph from the current ``.data`` of the
    given tensors and return a scalar Tensor.  Returns the worst relative
    error over all checked components, where the relative error of a pair
    (a, fd) is |a - fd| / max(1, |a|, |fd|).

    ``sample`` limits the number of components checked per tensor (useful for
    whole-model checks); ``rng`` picks which ones.
    """
    for t in tensors:
        t.zero_grad()
    loss = build()
    loss.backward()
    analytic = []
    for t in tensors:
        g = t.grad
        analytic.append(np.zeros_like(t.data) if g is None else np.array(g, copy=True))

    worst = 0.0
    for t, g in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        if sample is None or flat.size <= sample:
            indices = range(flat.size)
        else:
            indices = rng.choice(flat.size, size=sample, replace=False)
        for i in indices:
            saved = flat[i]
            flat[i] = saved + step
            up = float(build().data)
            flat[i] = saved - step
            down = float(build().data)
            flat[i] = saved
            fd = (up - down) / (2.0 * step)
            a = float(gflat[i])
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            worst = max(worst, err)
    for t in tensors:
        t.zero_grad()
    return worst


def leaf(rng, shape, scale=1.0):
    """Random float64 leaf tensor with gradients enabled."""
    from robovid.tensor import Tensor

    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


def tiny_dit_config(**overrides):
    """A model small enough for exhaustive numeric checks."""
    base = dict(dim=24, heads=2, blocks=2, mlp_ratio=2, patch=PatchSpec(2, 4, 4, 3))
    base.update(overrides)
    return DiTConfig(**base)


def random_grid(cfg, rng, dtype=np.float32, frames=4, height=8, width=8):
    pt, ph, pw = cfg.patch.pt, cfg.patch.ph, cfg.patch.pw
    spec = cfg.patch
    nt, nh, nw = frames // pt, height // ph, width // pw
    tokens = rng.standard_normal((nt * nh * nw, spec.token_dim)).astype(dtype)
    return TokenGrid(tokens, lattice_positions(nt, nh, nw), spec, (frames, height, width))


TINY_DATASET = DatasetConfig(
    scenes=3,
    animations=2,
    cameras=2,
    pairs=6,
    val_scenes=1,
    frames=8,
    fps=8,
    width=16,
    height=16,
    seed=77,
)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small rendered dataset shared by the slower integration tests."""
    out = tmp_path_factory.mktemp("tinydata") / "set"
    generate_dataset(TINY_DATASET, str(out))
    return str(out)


# Verdict lines recorded by tests/test_acceptance.py; echoed after the run
# so the per-criterion results are visible even with output capture on.
ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
