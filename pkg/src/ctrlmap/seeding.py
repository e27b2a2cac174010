"""Deterministic seed derivation for experiment streams.

Every random stream in an experiment is derived from a single master seed and
a tuple of coordinate tokens (command name, grid position, repetition index).
Two runs with the same master seed and coordinates see identical streams, and
streams for distinct coordinates are statistically independent for practical
purposes. The mixer is the splitmix64 finalizer, which is a bijection on
64-bit words with full avalanche.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def mix64(z: int) -> int:
    """One splitmix64 finalization round. Bijective on 64-bit integers."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _token_word(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & _MASK
    if isinstance(token, float):
        # fold the float's bit pattern; avoids str round-trip surprises
        return int(np.float64(token).view(np.uint64))
    data = str(token).encode("utf-8")
    acc = 0x2545F4914F6CDD1D
    for byte in data:
        acc = mix64(acc ^ byte)
    return acc


def derive_seed(master: int, *coords) -> int:
    """Derive a 64-bit stream seed from a master seed and coordinate tokens.

    Tokens may be ints, floats, or strings. Order matters.
    """
    state = mix64(int(master) & _MASK)
    for token in coords:
        state = mix64(state ^ _token_word(token))
    return state


def make_rng(master: int, *coords) -> np.random.Generator:
    """Generator seeded by derive_seed(master, *coords)."""
    return np.random.default_rng(derive_seed(master, *coords))
