import numpy as np
import pytest

from ctrlmap.errors import ExperimentDegenerateError, InvalidInputError
from ctrlmap.lipschitz import estimate_lipschitz, ratio_experiment
from ctrlmap.lqr import LinearSystem, lqr_gain, lqr_lipschitz_upper_bound, solve_dare
from ctrlmap.sysgen import gen_system_commuting, gen_tasks

from conftest import draw_margin_system


def random_tasks(dim, count, rng, scale=0.5):
    out = []
    for _ in range(count):
        M = rng.normal(size=(dim, dim))
        Q = M @ M.T
        Q *= scale * float(rng.uniform(0.2, 1.0)) / np.linalg.norm(Q, "fro")
        out.append(Q)
    return out


def test_estimate_linear_slope(rng):
    qs = random_tasks(3, 12, rng)
    samples = [(Q, 2.0 * Q) for Q in qs]
    assert estimate_lipschitz(samples) == pytest.approx(2.0, abs=1e-9)


def test_estimate_constant_map(rng):
    qs = random_tasks(3, 8, rng)
    K = rng.normal(size=(3, 3))
    assert estimate_lipschitz([(Q, K) for Q in qs]) == 0.0


def test_estimate_needs_two_samples():
    with pytest.raises(InvalidInputError):
        estimate_lipschitz([(np.eye(2), np.eye(2))])


def test_estimate_below_certified_bound(rng):
    for _ in range(5):
        sys = draw_margin_system(rng, dim=3)
        samples = []
        for Q in random_tasks(3, 25, rng):
            sol = solve_dare(sys, Q)
            samples.append((Q, lqr_gain(sys, sol.P)))
        bound = lqr_lipschitz_upper_bound(sys, sharp=False)
        assert estimate_lipschitz(samples) <= bound + 1e-9


def test_ratio_experiment_figure_config(rng):
    sys = gen_system_commuting(4, 0.2, 0.5, 1.0, 0.9, rng)
    tasks = gen_tasks(4, 50, rng, norm_a=0.2)
    rep = ratio_experiment(sys, tasks, rel_tol=1e-3)
    assert rep.ratio > 1.0
    assert rep.lower_coefficient is not None
    assert rep.ratio >= rep.lower_coefficient
    assert rep.tasks_total == 150
    assert rep.upper_bound_unsafe is not None
    assert rep.l_unsafe <= rep.upper_bound_unsafe + 1e-9


def test_ratio_experiment_no_disturbance_collapses(rng):
    base = draw_margin_system(rng, dim=3, with_d=False)
    tasks = random_tasks(3, 12, rng)
    rep = ratio_experiment(base, tasks)
    assert rep.l_safe == pytest.approx(rep.l_unsafe, rel=1e-6)
    assert rep.ratio == pytest.approx(1.0, abs=1e-6)


def test_ratio_experiment_monotone_in_samples(rng):
    sys = draw_margin_system(rng, dim=3)
    tasks = random_tasks(3, 30, rng)
    small = ratio_experiment(sys, tasks[:15])
    large = ratio_experiment(sys, tasks)
    assert large.l_unsafe >= small.l_unsafe - 1e-12
    assert large.l_safe >= small.l_safe - 1e-12


def test_ratio_experiment_degenerate(rng):
    sys = draw_margin_system(rng, dim=2)
    with pytest.raises(ExperimentDegenerateError):
        ratio_experiment(sys, [np.zeros((2, 2)), np.zeros((2, 2))])
