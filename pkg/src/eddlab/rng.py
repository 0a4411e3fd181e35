"""Seed derivation for reproducible, scheduling-independent random streams."""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys: int) -> int:
    """Return a 64-bit child seed for the stream identified by ``keys``.

    The child depends only on ``(master, keys)``, so replicate ``i`` gets the
    same stream no matter which worker runs it or in what order.
    """
    ss = np.random.SeedSequence(int(master) & MASK64, spawn_key=tuple(int(k) & MASK64 for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based, so independent child streams are cheap
    return np.random.Generator(np.random.Philox(int(seed) & MASK64))


def float_key(x: float) -> int:
    """Stable integer key for a float (its IEEE-754 bit pattern)."""
    return int(np.float64(x).view(np.uint64))
