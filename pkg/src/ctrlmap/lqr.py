"""Discrete-time LQR synthesis by Riccati fixed-point iteration.

The cost Riccati equation is solved by iterating its defining operator from
the zero matrix. Under the stability-margin condition (see
stability_margin_threshold) the operator is a contraction on the bounded
positive semidefinite cone, with contraction constant given by
contraction_constant, and the map from task matrix to value matrix or gain is
Lipschitz with explicit constants (lqr_lipschitz_upper_bound).

Gain convention: controllers are returned as the matrix K acting as
u = K x, i.e. K already contains the stabilizing sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import (frobenius_norm, require_symmetric, solve_spd,
                     spectral_norm, symmetrize)


@dataclass(eq=False)
class LinearSystem:
    """System matrices (A, B, D) and input cost R for x+ = A x + B u + D w.

    A must be a strict spectral contraction (0 < ||A|| < 1), B nonzero, R
    symmetric positive definite. D may be zero (no disturbance channel).
    Spectral norms and ||R^-1|| are computed once and cached.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    R: np.ndarray
    dim: int = field(init=False)
    norm_a: float = field(init=False)
    norm_b: float = field(init=False)
    norm_d: float = field(init=False)
    norm_r_inv: float = field(init=False)

    def __post_init__(self):
        mats = {}
        for name in ("A", "B", "D", "R"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim == 0:
                M = M.reshape(1, 1)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise InvalidInputError(f"{name} must be square, got shape {M.shape}")
            if not np.all(np.isfinite(M)):
                raise InvalidInputError(f"{name} contains non-finite entries")
            mats[name] = M
        dims = {M.shape[0] for M in mats.values()}
        if len(dims) != 1:
            raise InvalidInputError(f"A, B, D, R must share one dimension, got {dims}")
        self.dim = dims.pop()
        self.A, self.B, self.D = mats["A"], mats["B"], mats["D"]
        self.R = require_symmetric(mats["R"], "R")
        r_eigs = np.linalg.eigvalsh(self.R)
        if r_eigs[0] <= 0.0:
            raise InvalidInputError(
                f"R must be positive definite, min eigenvalue {r_eigs[0]:.3e}")
        self.norm_a = spectral_norm(self.A)
        self.norm_b = spectral_norm(self.B)
        self.norm_d = spectral_norm(self.D)
        self.norm_r_inv = float(1.0 / r_eigs[0])
        if not (0.0 < self.norm_a < 1.0):
            raise InvalidInputError(
                f"||A|| must lie in (0, 1), got {self.norm_a:.6f}")
        if self.norm_b == 0.0:
            raise InvalidInputError("B must be nonzero")


def validate_task_matrix(Q: np.ndarray, dim: int | None = None,
                         name: str = "Q") -> np.ndarray:
    """Check a task matrix (symmetric, PSD, Frobenius norm <= 1); return it symmetrized."""
    S = require_symmetric(Q, name)
    if dim is not None and S.shape[0] != dim:
        raise InvalidInputError(
            f"{name} has dimension {S.shape[0]}, system has {dim}")
    w_min = float(np.linalg.eigvalsh(S)[0])
    if w_min < -1e-10:
        raise InvalidInputError(
            f"{name} must be positive semidefinite, min eigenvalue {w_min:.3e}")
    fro = frobenius_norm(S)
    if fro > 1.0 + 1e-10:
        raise InvalidInputError(f"{name} must have Frobenius norm <= 1, got {fro:.6f}")
    return S


@dataclass
class RiccatiSolution:
    """Result of a Riccati fixed-point solve.

    residual is the Frobenius norm of the fixed-point defect at the returned
    P, measured by one extra operator application.
    """
    P: np.ndarray
    residual: float
    iterations: int
    converged: bool


def input_weight(sys: LinearSystem, P: np.ndarray) -> np.ndarray:
    """Effective input cost R + B^T P B."""
    return symmetrize(sys.R + sys.B.T @ P @ sys.B)


def riccati_operator(sys: LinearSystem, Q: np.ndarray, P: np.ndarray) -> np.ndarray:
    """One application of the Riccati operator at P.

    Returns Q + A^T P A - A^T P B (R + B^T P B)^-1 B^T P A, symmetrized.
    """
    PA = P @ sys.A
    PB = P @ sys.B
    X = symmetrize(sys.R + sys.B.T @ PB)
    BPA = sys.B.T @ PA
    return symmetrize(Q + sys.A.T @ PA - BPA.T @ solve_spd(X, BPA))


def _riccati_step(A, B, R, Q, P):
    PA = P @ A
    PB = P @ B
    X = R + B.T @ PB
    BPA = B.T @ PA
    Pn = Q + A.T @ PA - BPA.T @ np.linalg.solve(0.5 * (X + X.T), BPA)
    return 0.5 * (Pn + Pn.T)


def solve_dare(sys: LinearSystem, Q: np.ndarray, tol: float | None = None,
               max_iter: int = 100000, P0: np.ndarray | None = None) -> RiccatiSolution:
    """Solve the cost Riccati equation by fixed-point iteration.

    Iterates the Riccati operator from P0 (default: zero) until successive
    iterates differ by at most tol in Frobenius norm. The default tolerance
    is 1e-12 * max(1, ||Q||_F). Non-convergence is reported through the
    converged flag, not an exception.
    """
    Q = np.asarray(Q, dtype=float)
    if tol is None:
        tol = 1e-12 * max(1.0, frobenius_norm(Q))
    A, B, R = sys.A, sys.B, sys.R
    P = np.zeros_like(Q) if P0 is None else symmetrize(np.asarray(P0, dtype=float))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        Pn = _riccati_step(A, B, R, Q, P)
        gap = float(np.linalg.norm(Pn - P))
        P = Pn
        if gap <= tol:
            converged = True
            break
    defect = float(np.linalg.norm(_riccati_step(A, B, R, Q, P) - P))
    return RiccatiSolution(P=P, residual=defect, iterations=iterations,
                           converged=converged)


def lqr_gain(sys: LinearSystem, P: np.ndarray) -> np.ndarray:
    """Optimal feedback gain K = -(R + B^T P B)^-1 B^T P A for u = K x."""
    BPA = sys.B.T @ P @ sys.A
    return -solve_spd(input_weight(sys, P), BPA)


def closed_loop_power_norm(sys: LinearSystem, K: np.ndarray, power: int = 64) -> float:
    """Spectral norm of (A + B K)^power, computed by binary powering."""
    if power < 1:
        raise InvalidInputError("power must be >= 1")
    M = sys.A + sys.B @ K
    result = np.eye(sys.dim)
    base = M
    p = power
    while p:
        if p & 1:
            result = result @ base
        p >>= 1
        if p:
            base = base @ base
    return spectral_norm(result)


def stability_margin_threshold(norm_b: float, norm_r_inv: float) -> float:
    """Largest ||A|| compatible with the contraction-based analysis.

    Systems with ||A|| below this threshold have contraction constant < 1/2.
    """
    inner = math.sqrt(2.0) + math.sqrt(2.0) * norm_b ** 2 * norm_r_inv
    return 1.0 - 1.0 / (1.0 + 1.0 / inner)


def assumption_margin(sys: LinearSystem) -> float:
    """Slack of the stability-margin condition (positive when it holds)."""
    return stability_margin_threshold(sys.norm_b, sys.norm_r_inv) - sys.norm_a


def assumption1_holds(sys: LinearSystem) -> bool:
    return assumption_margin(sys) > 1e-12


def contraction_constant_value(norm_a: float, norm_b: float,
                               norm_r_inv: float) -> float:
    """Contraction constant of the Riccati operator from the system norms."""
    if not 0.0 <= norm_a < 1.0:
        raise InvalidInputError(f"norm_a must lie in [0, 1), got {norm_a}")
    amp = 1.0 + norm_b ** 2 * norm_r_inv / (1.0 - norm_a ** 2)
    return norm_a ** 2 * amp ** 2


def contraction_constant(sys: LinearSystem) -> float:
    return contraction_constant_value(sys.norm_a, sys.norm_b, sys.norm_r_inv)


def lqr_lipschitz_upper_bound(sys: LinearSystem, sharp: bool = False) -> float | None:
    """Lipschitz bound for the task-to-gain map Q -> K.

    The default bound is 2 ||A|| ||B|| ||R^-1|| (1 + 2 ||B||^2 ||R^-1||).
    With sharp=True the tighter variant
    (1 / (1 - gamma)) ||A|| ||B|| ||R^-1|| (1 + ||B||^2 ||R^-1|| / (1 - ||A||^2))
    is returned, where gamma is the contraction constant. Returns None when
    the stability-margin condition fails (the bounds are not valid there).
    """
    if not assumption1_holds(sys):
        return None
    na, nb, nri = sys.norm_a, sys.norm_b, sys.norm_r_inv
    if sharp:
        gamma = contraction_constant(sys)
        return (1.0 / (1.0 - gamma)) * na * nb * nri * (
            1.0 + nb ** 2 * nri / (1.0 - na ** 2))
    return 2.0 * na * nb * nri * (1.0 + 2.0 * nb ** 2 * nri)
