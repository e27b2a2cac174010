"""Random system and task generation, assumption checks, alignment.

Two system families are used by the experiments: a commuting symmetric
family with a controlled alignment factor (the regime where the theory's
lower bound applies) and unconstrained Gaussian families for stress sweeps.
Task matrices come in three batches per call: a fixed-minimum-eigenvalue
shell, a unit Frobenius ball, and a ball of radius ||A||.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, InvalidInputError
from .linalg import common_symmetric_eigenbasis, random_orthogonal, symmetrize
from .lqr import LinearSystem, assumption_margin

MAX_DIM = 64


def _check_dim(dim: int):
    if not 1 <= dim <= MAX_DIM:
        raise InvalidInputError(f"dim must lie in [1, {MAX_DIM}], got {dim}")


def _wishart(dim: int, rng: np.random.Generator) -> np.ndarray:
    M = rng.standard_normal((dim, dim))
    return M @ M.T


def _rescale_spectral(M: np.ndarray, target: float) -> np.ndarray:
    norm = float(np.linalg.norm(M, 2))
    if norm == 0.0:
        raise GenerationError("degenerate draw: zero matrix cannot be rescaled")
    return M * (target / norm)


def _rescale_max_abs(v: np.ndarray, target: float) -> np.ndarray:
    m = float(np.max(np.abs(v)))
    if m == 0.0:
        raise GenerationError("degenerate draw: zero vector cannot be rescaled")
    return v * (target / m)


def gen_system_commuting(dim: int, norm_a: float, norm_b: float, norm_d: float,
                         alpha_target: float, rng: np.random.Generator,
                         norm_r_inv: float = 1.0) -> LinearSystem:
    """Commuting symmetric system with alignment factor >= alpha_target.

    R is a rescaled Wishart draw with minimum eigenvalue 1 / norm_r_inv; its
    eigenbasis is shared by A, B, D, whose eigenvalues are Gaussian draws
    rescaled to the target spectral norms. The coordinate of R's smallest
    eigenvalue is forced to satisfy the alignment inequalities: a drawn
    eigenvalue that violates one is moved to the boundary value with its
    drawn sign. Draws that cannot be repaired are regenerated, up to 100
    attempts.
    """
    _check_dim(dim)
    if not 0.0 < norm_a < 1.0:
        raise InvalidInputError(f"norm_a must lie in (0, 1), got {norm_a}")
    if norm_b <= 0.0 or norm_d <= 0.0 or norm_r_inv <= 0.0:
        raise InvalidInputError("norm_b, norm_d, norm_r_inv must be positive")
    if not 0.0 < alpha_target <= 1.0:
        raise InvalidInputError(
            f"alpha_target must lie in (0, 1], got {alpha_target}")

    bound_a = max((norm_a + alpha_target - 1.0) / alpha_target, 0.0)
    bound_b = alpha_target * norm_b
    for _ in range(100):
        try:
            W = _wishart(dim, rng)
            w, V = np.linalg.eigh(W)
            if w[0] <= 0.0:
                continue
            lam_r = w * ((1.0 / norm_r_inv) / w[0])
            lam_a = _rescale_max_abs(rng.standard_normal(dim), norm_a)
            lam_b = _rescale_max_abs(rng.standard_normal(dim), norm_b)
            lam_d = _rescale_max_abs(rng.standard_normal(dim), norm_d)
        except GenerationError:
            continue
        if abs(lam_a[0]) < bound_a:
            lam_a[0] = bound_a * (1.0 if lam_a[0] >= 0.0 else -1.0)
        if abs(lam_b[0]) < bound_b:
            lam_b[0] = bound_b * (1.0 if lam_b[0] >= 0.0 else -1.0)
        # the aligned coordinate must witness regularity as well
        if lam_a[0] == 0.0 or lam_d[0] == 0.0 or lam_b[0] == 0.0:
            continue
        A = symmetrize(V @ (lam_a[:, None] * V.T))
        B = symmetrize(V @ (lam_b[:, None] * V.T))
        D = symmetrize(V @ (lam_d[:, None] * V.T))
        R = symmetrize(V @ (lam_r[:, None] * V.T))
        sys = LinearSystem(A, B, D, R)
        if alignment_factor(sys).alpha >= alpha_target - 1e-8:
            return sys
    raise GenerationError(
        f"could not generate an aligned commuting system in 100 attempts "
        f"(dim={dim}, alpha_target={alpha_target})")


def gen_system_unconstrained(dim: int, norm_a: float, norm_b: float,
                             norm_r_inv: float,
                             rng: np.random.Generator) -> LinearSystem:
    """General (non-symmetric) Gaussian system with prescribed norms, ||D|| = 1."""
    _check_dim(dim)
    if not 0.0 < norm_a < 1.0:
        raise InvalidInputError(f"norm_a must lie in (0, 1), got {norm_a}")
    if norm_b <= 0.0 or norm_r_inv <= 0.0:
        raise InvalidInputError("norm_b and norm_r_inv must be positive")
    for _ in range(100):
        try:
            A = _rescale_spectral(rng.standard_normal((dim, dim)), norm_a)
            B = _rescale_spectral(rng.standard_normal((dim, dim)), norm_b)
            D = _rescale_spectral(rng.standard_normal((dim, dim)), 1.0)
            W = _wishart(dim, rng)
            w_min = float(np.linalg.eigvalsh(W)[0])
            if w_min <= 0.0:
                continue
            R = symmetrize(W * ((1.0 / norm_r_inv) / w_min))
            return LinearSystem(A, B, D, R)
        except GenerationError:
            continue
    raise GenerationError(f"could not generate an unconstrained system (dim={dim})")


def gen_system_lq_experiments(dim: int, rng: np.random.Generator) -> LinearSystem:
    """System family for the imitation experiments.

    ||A|| = ||B|| = 0.5, D = I, and R a Wishart draw normalized to a uniform
    Frobenius radius in [0.25, 1].
    """
    _check_dim(dim)
    for _ in range(100):
        try:
            A = _rescale_spectral(rng.standard_normal((dim, dim)), 0.5)
            B = _rescale_spectral(rng.standard_normal((dim, dim)), 0.5)
            W = _wishart(dim, rng)
            radius = rng.uniform(0.25, 1.0)
            fro = float(np.linalg.norm(W))
            if fro == 0.0 or np.linalg.eigvalsh(W)[0] <= 0.0:
                continue
            R = symmetrize(W * (radius / fro))
            return LinearSystem(A, B, np.eye(dim), R)
        except GenerationError:
            continue
    raise GenerationError(f"could not generate an experiment system (dim={dim})")


def gen_tasks(dim: int, count_per_batch: int, rng: np.random.Generator,
              norm_a: float = 1.0) -> list[np.ndarray]:
    """Three batches of task matrices, count_per_batch each.

    Batch one: random eigenbasis, minimum eigenvalue 0.1, unit Frobenius
    norm. Batch two: normalized Wishart draws scaled by a uniform radius in
    (0, 1]. Batch three: the same with radius capped at norm_a. Returned
    concatenated in batch order.
    """
    _check_dim(dim)
    if count_per_batch < 1:
        raise InvalidInputError("count_per_batch must be >= 1")
    if not 0.0 < norm_a <= 1.0:
        raise InvalidInputError(f"norm_a must lie in (0, 1], got {norm_a}")
    tasks: list[np.ndarray] = []
    for _ in range(count_per_batch):
        if dim == 1:
            tasks.append(np.array([[1.0]]))
            continue
        V = random_orthogonal(dim, rng)
        m = np.abs(rng.standard_normal(dim))
        m[np.argmin(m)] = 0.0
        nm = float(np.linalg.norm(m))
        if nm == 0.0:
            m[-1] = 1.0
            nm = 1.0
        m /= nm
        s = float(np.sum(m))
        t = -0.1 * s + np.sqrt(0.01 * s * s + 1.0 - 0.01 * dim)
        lam = 0.1 + t * m
        tasks.append(symmetrize(V @ (lam[:, None] * V.T)))
    for cap in (1.0, norm_a):
        for _ in range(count_per_batch):
            W = _wishart(dim, rng)
            fro = float(np.linalg.norm(W))
            radius = rng.uniform(0.0, cap)
            if fro == 0.0:
                W = np.eye(dim)
                fro = float(np.linalg.norm(W))
            tasks.append(symmetrize(W * (radius / fro)))
    return tasks


@dataclass
class AlignmentReport:
    """Alignment factor of a commuting symmetric system.

    alpha is the best per-coordinate alignment; witnesses are the 0-based
    coordinates attaining it (within 1e-10); regular means some witness has
    nonzero A and D eigenvalues; witness_lower_bound is the largest
    |lambda_B| / (lambda_R (1 - |lambda_A|)) over regular witnesses (0.0
    when there is none).
    """
    alpha: float
    witnesses: list[int]
    regular: bool
    witness_lower_bound: float


def alignment_factor(sys: LinearSystem) -> AlignmentReport:
    """Per-coordinate alignment of the eigenvalues with the system norms."""
    family = common_symmetric_eigenbasis([sys.R, sys.A, sys.B, sys.D])
    if family is None:
        raise InvalidInputError(
            "alignment_factor needs a commuting symmetric system family")
    _, (lam_r, lam_a, lam_b, lam_d) = family
    r_min = float(np.min(lam_r))
    per = np.minimum(1.0, (1.0 - sys.norm_a) / (1.0 - np.abs(lam_a)))
    per = np.minimum(per, np.abs(lam_b) / sys.norm_b)
    per = np.minimum(per, r_min / lam_r)
    alpha = float(np.max(per))
    witnesses = [int(j) for j in np.flatnonzero(per >= alpha - 1e-10)]
    regular_js = [j for j in witnesses
                  if abs(lam_a[j]) > 1e-10 and abs(lam_d[j]) > 1e-10]
    bound = 0.0
    for j in regular_js:
        bound = max(bound, abs(lam_b[j]) / (lam_r[j] * (1.0 - abs(lam_a[j]))))
    return AlignmentReport(alpha=alpha, witnesses=witnesses,
                           regular=bool(regular_js),
                           witness_lower_bound=float(bound))


@dataclass
class AssumptionReport:
    """Which analysis assumptions a system satisfies.

    stability_slack is the margin to the contraction threshold (positive
    when the stability-margin condition holds). commutator_residual is the
    largest pairwise commutator or asymmetry norm over {A, B, D, R}.
    regular is None when the system is not a commuting family.
    """
    stability_margin: bool
    stability_slack: float
    commuting: bool
    commutator_residual: float
    regular: bool | None


def check_assumptions(sys: LinearSystem) -> AssumptionReport:
    slack = assumption_margin(sys)
    mats = [sys.A, sys.B, sys.D, sys.R]
    residual = 0.0
    for M in mats:
        residual = max(residual, float(np.linalg.norm(M - M.T)))
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            residual = max(residual, float(
                np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i])))
    commuting = residual <= 1e-8
    regular = alignment_factor(sys).regular if commuting else None
    return AssumptionReport(stability_margin=slack > 1e-12,
                            stability_slack=float(slack),
                            commuting=commuting,
                            commutator_residual=residual,
                            regular=regular)


def separation_coefficient_value(alpha: float, norm_a: float, norm_b: float,
                                 norm_r_inv: float) -> float:
    """alpha^3 / (||A|| (2 + 4 ||B||^2 ||R^-1||))."""
    if norm_a <= 0.0:
        raise InvalidInputError("norm_a must be positive")
    return alpha ** 3 / (norm_a * (2.0 + 4.0 * norm_b ** 2 * norm_r_inv))


def separation_lower_coefficient(sys: LinearSystem) -> float | None:
    """Guaranteed ratio between the robust and nominal map steepness.

    Returns None when the system falls outside the regime where the
    guarantee applies (stability margin, commuting family, regularity).
    """
    report = check_assumptions(sys)
    if not (report.stability_margin and report.commuting and report.regular):
        return None
    alpha = alignment_factor(sys).alpha
    return separation_coefficient_value(alpha, sys.norm_a, sys.norm_b,
                                        sys.norm_r_inv)
