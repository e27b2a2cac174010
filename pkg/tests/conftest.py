"""Shared helpers for the test suite."""

import numpy as np
import pytest

from ctrlmap.lqr import LinearSystem, stability_margin_threshold
from ctrlmap.sysgen import gen_system_unconstrained


def draw_margin_system(rng: np.random.Generator, dim: int | None = None,
                       with_d: bool = True) -> LinearSystem:
    """Random system satisfying the stability-margin assumption.

    Norms are drawn first, then ||A|| is placed strictly below the margin
    threshold for the drawn (||B||, ||R^-1||) pair.
    """
    if dim is None:
        dim = int(rng.integers(1, 9))
    norm_b = float(rng.uniform(0.3, 0.8))
    norm_r_inv = float(rng.uniform(0.5, 2.0))
    thr = stability_margin_threshold(norm_b, norm_r_inv)
    norm_a = float(rng.uniform(0.1, 0.9)) * thr
    sys = gen_system_unconstrained(dim, norm_a, norm_b, norm_r_inv, rng)
    if not with_d:
        sys = LinearSystem(sys.A, sys.B, np.zeros((dim, dim)), sys.R)
    return sys


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
