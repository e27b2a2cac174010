import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from ctrlmap.errors import InvalidInputError
from ctrlmap.lqr import (LinearSystem, assumption1_holds, closed_loop_power_norm,
                         contraction_constant, contraction_constant_value,
                         input_weight, lqr_gain, lqr_lipschitz_upper_bound,
                         riccati_operator, solve_dare,
                         stability_margin_threshold, validate_task_matrix)
from ctrlmap.sysgen import gen_system_unconstrained

from conftest import draw_margin_system

SCALAR = LinearSystem(np.array([[0.5]]), np.array([[1.0]]),
                      np.array([[1.0]]), np.array([[1.0]]))


def test_linear_system_validation():
    I1 = np.eye(1)
    with pytest.raises(InvalidInputError):
        LinearSystem(np.array([[1.0]]), I1, I1, I1)  # ||A|| not < 1
    with pytest.raises(InvalidInputError):
        LinearSystem(0.5 * I1, np.zeros((1, 1)), I1, I1)  # B zero
    with pytest.raises(InvalidInputError):
        LinearSystem(0.5 * I1, I1, I1, -I1)  # R not PD
    with pytest.raises(InvalidInputError):
        LinearSystem(0.5 * np.eye(2), I1, I1, I1)  # dim mismatch


def test_linear_system_cached_norms(rng):
    sys = draw_margin_system(rng, dim=4)
    assert sys.norm_a == pytest.approx(np.linalg.norm(sys.A, 2), abs=1e-10)
    assert sys.norm_r_inv == pytest.approx(
        1.0 / np.linalg.eigvalsh(sys.R)[0], rel=1e-10)


def test_validate_task_matrix():
    validate_task_matrix(np.eye(2) / 2.0, dim=2)
    with pytest.raises(InvalidInputError):
        validate_task_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # asymmetric
    with pytest.raises(InvalidInputError):
        validate_task_matrix(-np.eye(2))  # not PSD
    with pytest.raises(InvalidInputError):
        validate_task_matrix(np.eye(2))  # ||Q||_F = sqrt(2) > 1


def test_input_weight_zero_p():
    assert np.allclose(input_weight(SCALAR, np.zeros((1, 1))), SCALAR.R)


def test_input_weight_scalar():
    assert input_weight(SCALAR, np.ones((1, 1)))[0, 0] == pytest.approx(2.0)


def test_input_weight_psd_shift(rng):
    sys = draw_margin_system(rng, dim=4)
    M = rng.normal(size=(4, 4))
    P = M @ M.T
    X = input_weight(sys, P)
    assert np.linalg.eigvalsh(X)[0] >= np.linalg.eigvalsh(sys.R)[0] - 1e-10


def test_riccati_operator_zero():
    assert np.allclose(riccati_operator(SCALAR, np.zeros((1, 1)),
                                        np.zeros((1, 1))), 0.0)


def test_riccati_operator_scalar():
    out = riccati_operator(SCALAR, np.ones((1, 1)), np.ones((1, 1)))
    assert out[0, 0] == pytest.approx(1.125)


def test_riccati_operator_symmetric_psd(rng):
    for _ in range(10):
        sys = draw_margin_system(rng, dim=3)
        Q = rng.normal(size=(3, 3))
        Q = Q @ Q.T
        Q /= max(1.0, np.linalg.norm(Q, "fro"))
        M = rng.normal(size=(3, 3))
        P = M @ M.T
        out = riccati_operator(sys, Q, P)
        assert np.allclose(out, out.T, atol=1e-10)
        assert np.linalg.eigvalsh(out)[0] >= -1e-10


def test_solve_dare_zero_cost():
    sol = solve_dare(SCALAR, np.zeros((1, 1)))
    assert np.allclose(sol.P, 0.0)
    assert np.allclose(lqr_gain(SCALAR, sol.P), 0.0)


def test_solve_dare_scalar_root():
    # scalar fixed point solves p^2 - 0.25 p - 1 = 0; take the positive root
    expected = (0.25 + np.sqrt(0.0625 + 4.0)) / 2.0
    sol = solve_dare(SCALAR, np.eye(1))
    assert sol.converged
    assert sol.P[0, 0] == pytest.approx(expected, rel=1e-10)


def test_solve_dare_residual_contract(rng):
    for _ in range(5):
        sys = draw_margin_system(rng, dim=5)
        Q = rng.normal(size=(5, 5))
        Q = Q @ Q.T
        Q /= 2.0 * np.linalg.norm(Q, "fro")
        sol = solve_dare(sys, Q)
        defect = np.linalg.norm(riccati_operator(sys, Q, sol.P) - sol.P, "fro")
        assert sol.converged
        assert defect <= max(sol.residual, 1e-12) * 10.0


def test_solve_dare_matches_scipy(rng):
    for _ in range(10):
        sys = draw_margin_system(rng, dim=4)
        Q = rng.normal(size=(4, 4))
        Q = Q @ Q.T
        Q /= 2.0 * np.linalg.norm(Q, "fro")
        sol = solve_dare(sys, Q)
        oracle = solve_discrete_are(sys.A, sys.B, Q, sys.R)
        scale = max(1.0, np.linalg.norm(oracle, "fro"))
        assert np.linalg.norm(sol.P - oracle, "fro") <= 1e-8 * scale


def test_lqr_gain_zero_p():
    assert np.allclose(lqr_gain(SCALAR, np.zeros((1, 1))), 0.0)


def test_lqr_gain_scalar():
    p = (0.25 + np.sqrt(0.0625 + 4.0)) / 2.0
    K = lqr_gain(SCALAR, solve_dare(SCALAR, np.eye(1)).P)
    assert K[0, 0] == pytest.approx(-p * 0.5 / (1.0 + p), rel=1e-9)
    assert K[0, 0] == pytest.approx(-0.26556, abs=1e-5)


def test_closed_loop_decay(rng):
    for _ in range(10):
        sys = draw_margin_system(rng)
        Q = rng.normal(size=(sys.dim, sys.dim))
        Q = Q @ Q.T
        Q /= 2.0 * np.linalg.norm(Q, "fro")
        K = lqr_gain(sys, solve_dare(sys, Q).P)
        assert closed_loop_power_norm(sys, K, power=64) < 1e-3


def test_stability_margin_threshold_value():
    thr = stability_margin_threshold(0.5, 1.0)
    assert thr == pytest.approx(0.36130, abs=5e-6)


def test_contraction_constant_values():
    assert contraction_constant_value(0.0, 0.5, 1.0) == 0.0
    assert contraction_constant_value(0.4, 0.5, 1.0) == pytest.approx(
        0.26941, abs=5e-6)


def test_contraction_constant_below_half_on_margin_systems(rng):
    for _ in range(25):
        sys = draw_margin_system(rng)
        assert assumption1_holds(sys)
        assert contraction_constant(sys) < 0.5


def test_lipschitz_upper_bound_value(rng):
    sys = gen_system_unconstrained(3, 0.2, 0.5, 1.0, rng)
    assert lqr_lipschitz_upper_bound(sys, sharp=False) == pytest.approx(
        0.3, abs=1e-8)


def test_lipschitz_upper_bound_vanishes_with_a(rng):
    vals = []
    for norm_a in (0.2, 0.1, 0.05, 0.01):
        sys = gen_system_unconstrained(3, norm_a, 0.5, 1.0, rng)
        vals.append(lqr_lipschitz_upper_bound(sys, sharp=False))
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.02


def test_sharp_bound_below_loose(rng):
    for _ in range(10):
        sys = draw_margin_system(rng, dim=4)
        sharp = lqr_lipschitz_upper_bound(sys, sharp=True)
        loose = lqr_lipschitz_upper_bound(sys, sharp=False)
        assert sharp is not None and loose is not None
        assert sharp <= loose + 1e-12
