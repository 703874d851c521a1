"""Invertible spatio-temporal patchifier and shared positional embedding.

Stands in for a learned video VAE: a clip is losslessly rearranged into
tokens on a (time, height, width) lattice and back. Positional
embeddings are a pure function of the lattice triple, so condition and
generation tokens at the same place get bit-identical vectors.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchSpec:
    pt: int
    ph: int
    pw: int
    channels: int = 3

    @property
    def token_dim(self):
        return self.pt * self.ph * self.pw * self.channels

    def grid_shape(self, t, h, w):
        if t % self.pt or h % self.ph or w % self.pw:
            raise ValueError(
                f"clip extents ({t},{h},{w}) must be divisible by patch extents ({self.pt},{self.ph},{self.pw})"
            )
        return t // self.pt, h // self.ph, w // self.pw


@dataclass
class TokenGrid:
    tokens: np.ndarray  # (count, dim)
    positions: np.ndarray  # (count, 3) int lattice indices in (t, h, w) raster order
    patch: PatchSpec
    resolution: tuple  # source (T, H, W)

    @property
    def count(self):
        return self.tokens.shape[0]

    @property
    def dim(self):
        return self.tokens.shape[1]

    def lattice(self):
        return self.patch.grid_shape(*self.resolution)

    def same_lattice(self, other):
        return (
            self.patch == other.patch
            and self.resolution == other.resolution
            and np.array_equal(self.positions, other.positions)
        )

    def with_tokens(self, tokens):
        tokens = np.asarray(tokens)
        if tokens.shape != self.tokens.shape:
            raise ValueError(f"token matrix shape {tokens.shape} != {self.tokens.shape}")
        return TokenGrid(tokens, self.positions, self.patch, self.resolution)


def lattice_positions(nt, nh, nw):
    """All (t, h, w) triples in raster order, shape (nt*nh*nw, 3)."""
    t, h, w = np.meshgrid(np.arange(nt), np.arange(nh), np.arange(nw), indexing="ij")
    return np.stack([t.ravel(), h.ravel(), w.ravel()], axis=1).astype(np.int64)


def encode(clip, patch):
    """Clip -> TokenGrid; token k holds the flattened voxels of patch k."""
    frames = clip.frames
    t, h, w, c = frames.shape
    if c != patch.channels:
        raise ValueError(f"clip has {c} channels, patch spec expects {patch.channels}")
    nt, nh, nw = patch.grid_shape(t, h, w)
    x = frames.reshape(nt, patch.pt, nh, patch.ph, nw, patch.pw, c)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)  # (nt, nh, nw, pt, ph, pw, c)
    tokens = np.ascontiguousarray(x).reshape(nt * nh * nw, patch.token_dim)
    return TokenGrid(tokens, lattice_positions(nt, nh, nw), patch, (t, h, w))


def decode(grid, fps_num=8, fps_den=1):
    """Exact inverse of encode."""
    from .video import VideoClip

    patch = grid.patch
    t, h, w = grid.resolution
    nt, nh, nw = patch.grid_shape(t, h, w)
    if grid.tokens.shape != (nt * nh * nw, patch.token_dim):
        raise ValueError(
            f"token matrix {grid.tokens.shape} inconsistent with patch spec "
            f"(expected {(nt * nh * nw, patch.token_dim)})"
        )
    x = grid.tokens.reshape(nt, nh, nw, patch.pt, patch.ph, patch.pw, patch.channels)
    x = x.transpose(0, 3, 1, 4, 2, 5, 6)
    frames = np.ascontiguousarray(x).reshape(t, h, w, patch.channels)
    return VideoClip(frames.astype(np.float32), fps_num, fps_den)


def positional_embedding(positions, dim, base=10000.0, dtype=np.float64):
    """Factorized sinusoidal embedding over (t, h, w); dim must split into
    three axes times sin/cos pairs."""
    if dim % 6 != 0:
        raise ValueError(f"embedding dim must be divisible by 6, got {dim}")
    positions = np.asarray(positions)
    bands = dim // 6
    freqs = base ** (-np.arange(bands, dtype=np.float64) / bands)
    parts = []
    for axis in range(3):
        ang = positions[:, axis, None].astype(np.float64) * freqs[None, :]
        parts.append(np.sin(ang))
        parts.append(np.cos(ang))
    return np.concatenate(parts, axis=1).astype(dtype)
