"""Seeded random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Independent streams are derived from a root seed with :func:`derive_seed`,
which hashes ``(root, *path)`` through ``numpy.random.SeedSequence``; the
result is a plain integer so it can be logged and replayed on its own.
"""

from __future__ import annotations

import numpy as np


def derive_seed(root: int, *path: int) -> int:
    """Child seed for ``path`` under ``root``, stable across runs and platforms."""
    seq = np.random.SeedSequence([int(root), *map(int, path)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def stream(root: int, *path: int) -> np.random.Generator:
    return make_rng(derive_seed(root, *path))


def categorical(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    k = int(np.searchsorted(cdf, u, side="right"))
    if k >= len(cdf):
        # u rounded up onto the total; take the last symbol with mass
        k = int(np.flatnonzero(np.asarray(probs) > 0)[-1])
    return k
