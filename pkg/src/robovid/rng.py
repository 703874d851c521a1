"""Deterministic random substreams.

Every random draw in the pipeline flows from one root seed through named
substreams, so components can be re-seeded independently and per-step /
per-pair work is identical no matter how it is parallelized or resumed.
"""

import hashlib

import numpy as np

DEFAULT_SEED = 1234


def _name_key(name):
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def substream(seed, name, *indices):
    """A numpy Generator keyed by (root seed, stream name, indices).

    The index count is folded into the entropy because SeedSequence
    zero-pads short entropy lists, which would otherwise make (name,)
    and (name, 0) collide.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _name_key(name), len(indices)]
    entropy += [int(i) for i in indices]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
