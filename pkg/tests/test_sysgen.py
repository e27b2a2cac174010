import numpy as np
import pytest

from ctrlmap.linalg import common_symmetric_eigenbasis, sym_eig
from ctrlmap.lqr import LinearSystem, validate_task_matrix
from ctrlmap.sysgen import (alignment_factor, check_assumptions,
                            gen_system_commuting, gen_system_lq_experiments,
                            gen_system_unconstrained, gen_tasks,
                            separation_coefficient_value,
                            separation_lower_coefficient)

FIG1 = dict(norm_b=0.5, norm_d=1.0, norm_r_inv=1.0, alpha_target=0.9)


def commuting(dim, norm_a, rng, **over):
    kw = dict(FIG1)
    kw.update(over)
    return gen_system_commuting(dim, norm_a, kw["norm_b"], kw["norm_d"],
                                kw["alpha_target"], rng,
                                norm_r_inv=kw["norm_r_inv"])


def test_commuting_contract(rng):
    for norm_a in (0.05, 0.2, 0.3):
        sys = commuting(4, norm_a, rng)
        rep = check_assumptions(sys)
        assert rep.commuting
        assert alignment_factor(sys).alpha >= 0.9 - 1e-8
        assert sys.norm_a == pytest.approx(norm_a, abs=1e-8)
        assert sys.norm_b == pytest.approx(0.5, abs=1e-8)
        assert sys.norm_d == pytest.approx(1.0, abs=1e-8)
        eig = sym_eig(sys.R)
        assert 1.0 / eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-8)


def test_commuting_dim_one(rng):
    sys = commuting(1, 0.3, rng)
    assert abs(sys.A[0, 0]) == pytest.approx(0.3, abs=1e-10)
    assert abs(sys.B[0, 0]) == pytest.approx(0.5, abs=1e-10)
    assert abs(sys.D[0, 0]) == pytest.approx(1.0, abs=1e-10)


def test_commuting_seed_reproducible():
    a = gen_system_commuting(3, 0.2, 0.5, 1.0, 0.9, np.random.default_rng(5))
    b = gen_system_commuting(3, 0.2, 0.5, 1.0, 0.9, np.random.default_rng(5))
    for m, n in ((a.A, b.A), (a.B, b.B), (a.D, b.D), (a.R, b.R)):
        assert np.array_equal(m, n)


def test_unconstrained_norms(rng):
    sys = gen_system_unconstrained(4, 0.35, 0.7, 2.0, rng)
    assert sys.norm_a == pytest.approx(0.35, abs=1e-8)
    assert sys.norm_b == pytest.approx(0.7, abs=1e-8)
    assert 1.0 / sym_eig(sys.R).eigenvalues[0] == pytest.approx(2.0, abs=1e-8)
    assert sys.norm_d == pytest.approx(1.0, abs=1e-8)


def test_unconstrained_seed_reproducible():
    a = gen_system_unconstrained(3, 0.3, 0.5, 1.0, np.random.default_rng(9))
    b = gen_system_unconstrained(3, 0.3, 0.5, 1.0, np.random.default_rng(9))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.R, b.R)


def test_lq_experiments_family(rng):
    for _ in range(5):
        sys = gen_system_lq_experiments(4, rng)
        assert sys.norm_a == pytest.approx(0.5, abs=1e-8)
        assert np.array_equal(sys.D, np.eye(4))
        assert 0.25 - 1e-12 <= np.linalg.norm(sys.R, "fro") <= 1.0 + 1e-12


def test_gen_tasks_batches(rng):
    n = 7
    tasks = gen_tasks(3, n, rng, norm_a=0.4)
    assert len(tasks) == 3 * n
    for Q in tasks:
        validate_task_matrix(Q, dim=3)
    for Q in tasks[:n]:  # eigenvalue-floored unit-norm batch
        assert np.linalg.eigvalsh(Q)[0] >= 0.1 - 1e-8
        assert np.linalg.norm(Q, "fro") == pytest.approx(1.0, abs=1e-8)
    for Q in tasks[2 * n:]:  # radius capped by the system's ||A||
        assert np.linalg.norm(Q, "fro") <= 0.4 + 1e-10


def test_alignment_dim_one(rng):
    sys = commuting(1, 0.3, rng)
    assert alignment_factor(sys).alpha == pytest.approx(1.0)


def test_alignment_diagonal_example():
    sys = LinearSystem(np.diag([0.2, 0.4]), np.diag([0.5, 0.25]),
                       np.diag([1.0, 1.0]), np.eye(2))
    rep = alignment_factor(sys)
    assert rep.alpha == pytest.approx(0.75)
    assert rep.witnesses == [0]


def test_alignment_inequalities_re_substitute(rng):
    for norm_a in (0.1, 0.25):
        sys = commuting(4, norm_a, rng)
        rep = alignment_factor(sys)
        family = common_symmetric_eigenbasis([sys.R, sys.A, sys.B, sys.D])
        _, (lam_r, lam_a, lam_b, _) = family
        alpha = rep.alpha
        ok = np.zeros(4, dtype=bool)
        for j in range(4):
            ok[j] = (abs(lam_a[j]) >= (sys.norm_a + alpha - 1.0) / alpha - 1e-9
                     and abs(lam_b[j]) >= alpha * sys.norm_b - 1e-9
                     and lam_r[j] <= 1.0 / (alpha * sys.norm_r_inv) + 1e-9)
        assert all(ok[j] for j in rep.witnesses)


def test_check_assumptions_threshold():
    rng = np.random.default_rng(3)
    passing = gen_system_unconstrained(3, 0.3, 0.5, 1.0, rng)
    failing = gen_system_unconstrained(3, 0.4, 0.5, 1.0, rng)
    assert check_assumptions(passing).stability_margin
    assert not check_assumptions(failing).stability_margin


def test_check_assumptions_commuting_flags(rng):
    diag = LinearSystem(np.diag([0.2, 0.1]), np.diag([0.5, 0.4]),
                        np.eye(2), np.eye(2))
    assert check_assumptions(diag).commuting
    gaussian = gen_system_unconstrained(3, 0.3, 0.5, 1.0,
                                        np.random.default_rng(11))
    rep = check_assumptions(gaussian)
    assert not rep.commuting
    assert rep.commutator_residual > 1e-4
    assert rep.regular is None


def test_separation_coefficient_values():
    assert separation_coefficient_value(0.9, 0.2, 0.5, 1.0) == pytest.approx(
        1.215)
    assert separation_coefficient_value(0.5, 0.3, 1.0, 1.0) == pytest.approx(
        0.125 / 1.8)
    grows = [separation_coefficient_value(0.9, a, 0.5, 1.0)
             for a in (0.2, 0.1, 0.01, 0.001)]
    assert all(b > a for a, b in zip(grows, grows[1:]))
    assert grows[-1] > 100.0


def test_separation_lower_coefficient_gate(rng):
    sys = commuting(4, 0.2, rng)
    val = separation_lower_coefficient(sys)
    assert val is not None and val > 0.0
    outside = gen_system_unconstrained(4, 0.6, 0.5, 1.0, rng)
    assert separation_lower_coefficient(outside) is None
