"""Robust (disturbance-attenuating) controller synthesis.

For x+ = A x + B u + D w and a task matrix Q, a robustness level gamma is
feasible when the game Riccati equation

    P = Q + A^T P A - F(P)^T H(P)^-1 F(P),
    H(P) = [[R + B^T P B, B^T P D], [D^T P B, D^T P D - gamma^2 I]],
    F(P) = [B^T P A; D^T P A]

admits a positive semidefinite fixed point at which the control block of H
is positive definite and the disturbance block is negative definite. The
smallest feasible level gamma_star is located by bisection over certified
solves, warm-started from the Riccati solution of the gamma-free problem.

The fixed-point iteration slows down like 1/sqrt(gamma - gamma_star) as the
level approaches the feasibility boundary (the fixed point disappears in a
fold there), so solve_dgare accelerates it with a guarded vector Aitken
step whose result is only accepted after an exact re-certification, and
gamma_star recovers boundary gains by extrapolating the probe gains in the
closed-loop stability margin u = 1 - rho(A + B Ku + D Kw), which vanishes
at the fold.

Gain convention matches the rest of the package: u = Ku x, w = Kw x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ClosedLoopUnstableError, DefinitenessError, DomainError,
                     InfeasibleTaskError, InvalidInputError)
from .linalg import common_symmetric_eigenbasis, require_symmetric, symmetrize
from .lqr import LinearSystem, closed_loop_power_norm, solve_dare

DIVERGENCE_NORM = 1e8
GAMMA_CAP = 1e6

REASON_CONTROL = "control-block-indefinite"
REASON_DISTURBANCE = "disturbance-block-not-negative"
REASON_DIVERGED = "diverged"
REASON_MAX_ITER = "max-iter"


@dataclass
class GammaFeasibility:
    """Outcome of a fixed-level solve.

    feasible=True carries the certified solution P (residual is the
    fixed-point defect there); feasible=False carries a reason string, one
    of control-block-indefinite, disturbance-block-not-negative, diverged,
    max-iter.
    """
    feasible: bool
    P: np.ndarray | None
    reason: str | None
    iterations: int
    residual: float


@dataclass
class HinfSynthesis:
    """Result of gamma_star: the certified level, its solution and gains."""
    gamma_star: float
    P: np.ndarray
    Ku: np.ndarray
    Kw: np.ndarray
    bisection_width: float


def dgare_blocks(sys: LinearSystem, P: np.ndarray, gamma: float):
    """Assemble H(P) and F(P) for the level-gamma game Riccati operator."""
    PB = P @ sys.B
    PD = P @ sys.D
    PA = P @ sys.A
    d = sys.dim
    H = np.empty((2 * d, 2 * d))
    H[:d, :d] = sys.R + sys.B.T @ PB
    H[:d, d:] = sys.B.T @ PD
    H[d:, :d] = H[:d, d:].T
    H[d:, d:] = sys.D.T @ PD - gamma ** 2 * np.eye(d)
    F = np.vstack((sys.B.T @ PA, sys.D.T @ PA))
    return symmetrize(H), F


def _eps_def(P: np.ndarray) -> float:
    w = np.linalg.eigvalsh(symmetrize(P))
    norm2 = max(abs(float(w[0])), abs(float(w[-1]))) if w.size else 0.0
    return 1e-10 * (1.0 + norm2)


def _check_margins(sys: LinearSystem, P: np.ndarray, gamma: float):
    """Exact definiteness margins of the two diagonal blocks at P.

    Returns (ok, reason, eig) where eig is the offending extremal eigenvalue.
    """
    eps = _eps_def(P)
    Xu = symmetrize(sys.R + sys.B.T @ P @ sys.B)
    lam_u = float(np.linalg.eigvalsh(Xu)[0])
    if not lam_u > eps:
        return False, REASON_CONTROL, lam_u
    Xw = symmetrize(sys.D.T @ P @ sys.D) - gamma ** 2 * np.eye(sys.dim)
    lam_w = float(np.linalg.eigvalsh(Xw)[-1])
    if not lam_w < -eps:
        return False, REASON_DISTURBANCE, lam_w
    return True, None, 0.0


def dgare_operator(sys: LinearSystem, Q: np.ndarray, gamma: float,
                   P: np.ndarray) -> np.ndarray:
    """One application of the level-gamma operator, with margin checks.

    Raises DefinitenessError naming the offending block when the control
    block is not safely positive definite or the disturbance block not
    safely negative definite at P.
    """
    ok, reason, eig = _check_margins(sys, P, gamma)
    if not ok:
        raise DefinitenessError(
            f"level-{gamma:g} operator undefined at P: {reason} "
            f"(extremal eigenvalue {eig:.6e})",
            min_eigenvalue=eig, block=reason)
    H, F = dgare_blocks(sys, P, gamma)
    return symmetrize(Q + sys.A.T @ P @ sys.A - F.T @ np.linalg.solve(H, F))


class _FastStepper:
    """Operator application tuned for the inner solve loop.

    Definiteness of the diagonal blocks is detected by Cholesky (no margin),
    which is what the iteration needs to stay well defined; exact margins
    are re-checked at convergence by the caller.
    """

    def __init__(self, sys: LinearSystem, Q: np.ndarray, gamma: float):
        self.A, self.B, self.D, self.R = sys.A, sys.B, sys.D, sys.R
        self.Q = Q
        self.g2eye = gamma ** 2 * np.eye(sys.dim)
        self.dim = sys.dim

    def apply(self, P: np.ndarray):
        """Returns (P_next, None, H, F) or (None, reason, None, None)."""
        d = self.dim
        PB = P @ self.B
        PD = P @ self.D
        PA = P @ self.A
        Xu = symmetrize(self.R + self.B.T @ PB)
        try:
            np.linalg.cholesky(Xu)
        except np.linalg.LinAlgError:
            return None, REASON_CONTROL, None, None
        Xw = symmetrize(self.D.T @ PD) - self.g2eye
        try:
            np.linalg.cholesky(-Xw)
        except np.linalg.LinAlgError:
            return None, REASON_DISTURBANCE, None, None
        H = np.empty((2 * d, 2 * d))
        H[:d, :d] = Xu
        H[:d, d:] = self.B.T @ PD
        H[d:, :d] = H[:d, d:].T
        H[d:, d:] = Xw
        F = np.vstack((self.B.T @ PA, self.D.T @ PA))
        Pn = symmetrize(self.Q + self.A.T @ PA - F.T @ np.linalg.solve(H, F))
        return Pn, None, H, F


def _spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _closed_loop(sys: LinearSystem, H: np.ndarray, F: np.ndarray):
    """Gains and closed-loop matrix from the assembled blocks."""
    K = -np.linalg.solve(H, F)
    d = sys.dim
    Ku, Kw = K[:d, :], K[d:, :]
    return Ku, Kw, sys.A + sys.B @ Ku + sys.D @ Kw


def solve_dgare(sys: LinearSystem, Q: np.ndarray, gamma: float,
                P0: np.ndarray | None = None, tol: float = 1e-10,
                max_iter: int = 20000) -> GammaFeasibility:
    """Certified fixed-level solve of the game Riccati equation.

    Iterates the level-gamma operator from P0 (default: the gamma-free
    Riccati solution, which lies below the target fixed point). Every 16
    iterations a vector Aitken extrapolation is attempted; the candidate is
    adopted only when one exact operator application confirms a smaller
    defect, both definiteness blocks pass, and the implied closed loop is
    stable, so acceleration cannot change the certified outcome. On
    convergence the defect and the definiteness margins (tolerance
    1e-10 * (1 + ||P||_2)) are re-verified exactly.
    """
    if gamma <= 0.0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    Q = np.asarray(Q, dtype=float)
    if P0 is None:
        P = solve_dare(sys, Q).P
    else:
        P = symmetrize(np.asarray(P0, dtype=float))
    stepper = _FastStepper(sys, Q, gamma)
    prev1 = prev2 = None
    gap = np.inf
    iterations = 0
    while iterations < max_iter:
        Pn, reason, H, F = stepper.apply(P)
        iterations += 1
        if Pn is None:
            return GammaFeasibility(False, None, reason, iterations, gap)
        new_gap = float(np.linalg.norm(Pn - P))
        if not np.isfinite(new_gap) or float(np.linalg.norm(Pn)) > DIVERGENCE_NORM:
            return GammaFeasibility(False, None, REASON_DIVERGED, iterations, new_gap)
        prev2, prev1 = prev1, P
        P, gap = Pn, new_gap
        if gap <= tol:
            ok, mreason, _ = _check_margins(sys, P, gamma)
            if not ok:
                return GammaFeasibility(False, None, mreason, iterations, gap)
            Pchk, creason, _, _ = stepper.apply(P)
            iterations += 1
            if Pchk is None:
                return GammaFeasibility(False, None, creason, iterations, gap)
            defect = float(np.linalg.norm(Pchk - P))
            if defect <= tol:
                return GammaFeasibility(True, P, None, iterations, defect)
            prev2, prev1 = prev1, P
            P, gap = Pchk, defect
            continue
        if iterations % 16 == 0 and prev2 is not None:
            d1 = (prev1 - prev2).ravel()
            d2 = (P - prev1).ravel()
            denom = float(d1 @ d1)
            if denom > 0.0:
                rate = float(d2 @ d1) / denom
                if 1e-6 < rate < 0.99999:
                    Phat = P + (P - prev1) * (rate / (1.0 - rate))
                    Pcand, _, Hc, Fc = stepper.apply(Phat)
                    iterations += 1
                    if Pcand is not None:
                        cand_gap = float(np.linalg.norm(Pcand - Phat))
                        if cand_gap < 0.5 * gap and np.isfinite(cand_gap):
                            _, _, Acl = _closed_loop(sys, Hc, Fc)
                            if _spectral_radius(Acl) < 1.0:
                                P, gap = Pcand, cand_gap
                                prev1 = prev2 = None
    return GammaFeasibility(False, None, REASON_MAX_ITER, iterations, gap)


def level_gamma_gains(sys: LinearSystem, P: np.ndarray, gamma: float):
    """Control and disturbance gains at a certified solution P.

    Raises DefinitenessError when the definiteness margins do not actually
    hold at (P, gamma).
    """
    ok, reason, eig = _check_margins(sys, P, gamma)
    if not ok:
        raise DefinitenessError(
            f"gains undefined at level {gamma:g}: {reason} "
            f"(extremal eigenvalue {eig:.6e})",
            min_eigenvalue=eig, block=reason)
    H, F = dgare_blocks(sys, P, gamma)
    Ku, Kw, _ = _closed_loop(sys, H, F)
    return Ku, Kw


def _neville_to_zero(us, gains):
    """Extrapolate the gain arrays to u = 0 by Neville's scheme."""
    table = [g.copy() for g in gains]
    x = list(us)
    n = len(table)
    for level in range(1, n):
        for i in range(n - level):
            xi, xk = x[i], x[i + level]
            table[i] = (xk * table[i] - xi * table[i + 1]) / (xk - xi)
    return table[0]


def gamma_star(sys: LinearSystem, Q: np.ndarray, rel_tol: float = 1e-4, *,
               dgare_tol: float = 1e-10, dgare_max_iter: int = 20000,
               gamma_cap: float = GAMMA_CAP) -> HinfSynthesis:
    """Smallest certified-feasible robustness level and its controller.

    Seeds the bracket from the gamma-free Riccati solution (every level at
    or below sqrt(lambda_max(D^T P D)) is infeasible), expands the upper end
    multiplicatively until a certified feasible level is found, then bisects
    to a relative width below rel_tol. The returned gamma_star is the
    certified-feasible upper end and P its solution. Gains are extrapolated
    to the feasibility boundary across the deepest certified probes,
    parametrized by the closed-loop stability margin; when the probes do not
    support extrapolation the deepest probe's gains are returned as is.

    Raises InfeasibleTaskError when no level up to gamma_cap is feasible.
    """
    if not 0.0 < rel_tol <= 1e-2:
        raise InvalidInputError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")
    Q = np.asarray(Q, dtype=float)
    d = sys.dim
    if float(np.linalg.norm(Q)) == 0.0:
        zero = np.zeros((d, d))
        return HinfSynthesis(0.0, zero, zero.copy(), zero.copy(), 0.0)

    P_dare = solve_dare(sys, Q).P
    lam = float(np.linalg.eigvalsh(symmetrize(sys.D.T @ P_dare @ sys.D))[-1])
    lo = float(np.sqrt(max(lam, 0.0)))

    # For small tasks the solution scales with ||Q||, so the fixed-level
    # tolerance is tightened proportionally (never loosened) to keep the
    # certified solution's relative accuracy independent of task size.
    tol_eff = dgare_tol * max(min(1.0, float(np.linalg.norm(Q))), 1e-6)

    def probe(gamma, warm):
        return solve_dgare(sys, Q, gamma, P0=warm, tol=tol_eff,
                           max_iter=dgare_max_iter)

    if lo >= gamma_cap:
        raise InfeasibleTaskError(
            f"no feasible level up to {gamma_cap:g} "
            f"(gamma-free lower bound is {lo:g})")
    feasible: dict[float, np.ndarray] = {}
    hi = min(max(1.0, lo * 1.01), gamma_cap)
    res = probe(hi, P_dare)
    last_reason = res.reason
    while not res.feasible:
        if hi >= gamma_cap:
            raise InfeasibleTaskError(
                f"no feasible level up to {gamma_cap:g} "
                f"(last failure: {last_reason})")
        hi = min(hi * 2.0, gamma_cap)
        res = probe(hi, P_dare)
        last_reason = res.reason
    feasible[hi] = res.P

    floor = 1e-9 * max(1.0, hi)
    while (hi - lo) > 0.75 * rel_tol * hi and hi > floor:
        mid = 0.5 * (lo + hi)
        res = probe(mid, feasible[hi])
        if res.feasible:
            hi = mid
            feasible[hi] = res.P
        else:
            lo = mid

    # One extra certified probe between the two deepest levels enriches the
    # extrapolation stencil at negligible cost.
    levels = sorted(g for g in feasible if g >= hi)
    if len(levels) >= 2:
        extra = 0.5 * (levels[0] + levels[1])
        res = probe(extra, feasible[levels[1]])
        if res.feasible:
            feasible[extra] = res.P
            levels = sorted(g for g in feasible if g >= hi)

    probes = []
    for g in levels[:4]:
        H, F = dgare_blocks(sys, feasible[g], g)
        Ku, Kw, Acl = _closed_loop(sys, H, F)
        u = 1.0 - _spectral_radius(Acl)
        probes.append((u, np.vstack((Ku, Kw))))
    Ku_hi, Kw_hi = probes[0][1][:d, :], probes[0][1][d:, :]

    usable = sorted((p for p in probes if p[0] > 0.0), key=lambda p: p[0])
    dedup = []
    for u, G in usable:
        if not dedup or u > dedup[-1][0] * (1.0 + 1e-9):
            dedup.append((u, G))
    if len(dedup) >= 2 and (dedup[-1][0] - dedup[0][0]) > 1e-3 * dedup[-1][0]:
        stacked = _neville_to_zero([u for u, _ in dedup], [G for _, G in dedup])
        Ku, Kw = stacked[:d, :], stacked[d:, :]
    else:
        Ku, Kw = Ku_hi, Kw_hi

    return HinfSynthesis(gamma_star=hi, P=feasible[hi], Ku=Ku, Kw=Kw,
                         bisection_width=hi - lo)


def scalar_robust_objective(a: float, b: float, d: float, r: float,
                            q: float, k: float) -> float:
    """Worst-case energy ratio of the scalar closed loop under gain k.

    Equals d^2 (q + r k^2) / (1 - |a + b k|)^2; the supremum over unit-energy
    disturbances is attained at frequency 0 or pi depending on sign(a + b k).
    """
    if r <= 0.0:
        raise InvalidInputError(f"r must be positive, got {r}")
    if q < 0.0:
        raise InvalidInputError(f"q must be nonnegative, got {q}")
    xi = abs(a + b * k)
    if xi >= 1.0:
        raise ClosedLoopUnstableError(
            f"|a + b k| = {xi:.6f} >= 1: closed loop is not a contraction")
    return d ** 2 * (q + r * k ** 2) / (1.0 - xi) ** 2


def _scalar_domain_cap(a: float, b: float, r: float) -> float:
    return abs(a) * r * (1.0 - abs(a)) / b ** 2


def scalar_optimal_gain(a: float, b: float, r: float, q: float) -> float:
    """Boundary-optimal scalar gain k*(q) = -sign(a) b q / (r (1 - |a|)).

    Valid on 0 <= q < |a| r (1 - |a|) / b^2; outside that interval the
    closed-form stationarity argument breaks down and a DomainError is
    raised.
    """
    if a == 0.0 or b == 0.0:
        raise InvalidInputError("scalar_optimal_gain needs a != 0 and b != 0")
    if r <= 0.0:
        raise InvalidInputError(f"r must be positive, got {r}")
    if q < 0.0:
        raise InvalidInputError(f"q must be nonnegative, got {q}")
    cap = _scalar_domain_cap(a, b, r)
    if q >= cap:
        raise DomainError(
            f"q = {q:g} is outside the validity interval [0, {cap:g})")
    return -float(np.sign(a)) * b * q / (r * (1.0 - abs(a)))


def scalar_optimal_value(a: float, b: float, d: float, r: float,
                         q: float) -> float:
    """Optimal worst-case ratio for the scalar task q (squared level).

    Equals (d^2 / (1 - |a|)^2) * q / (1 + b^2 q / (r (1 - |a|)^2)) on the
    same validity interval as scalar_optimal_gain.
    """
    if a == 0.0 or b == 0.0:
        raise InvalidInputError("scalar_optimal_value needs a != 0 and b != 0")
    if r <= 0.0:
        raise InvalidInputError(f"r must be positive, got {r}")
    if q < 0.0:
        raise InvalidInputError(f"q must be nonnegative, got {q}")
    cap = _scalar_domain_cap(a, b, r)
    if q >= cap:
        raise DomainError(
            f"q = {q:g} is outside the validity interval [0, {cap:g})")
    one = 1.0 - abs(a)
    return (d ** 2 / one ** 2) * q / (1.0 + b ** 2 * q / (r * one ** 2))


def stacked_controller(sys: LinearSystem, Q: np.ndarray) -> np.ndarray:
    """Coordinatewise boundary-optimal controller for commuting systems.

    Requires A, B, D, R to be symmetric and simultaneously diagonalizable
    (basis taken from R) and Q diagonal in that shared basis; the controller
    applies the scalar optimal gain in each eigen-coordinate. Coordinates
    with a zero A-eigenvalue get gain zero (no control is needed there).
    """
    family = common_symmetric_eigenbasis([sys.R, sys.A, sys.B, sys.D])
    if family is None:
        raise InvalidInputError(
            "stacked_controller needs a commuting symmetric system family")
    V, (lam_r, lam_a, lam_b, lam_d) = family
    S = require_symmetric(Q, "Q")
    T = V.T @ S @ V
    qd = np.maximum(np.diag(T).copy(), 0.0)
    off = float(np.max(np.abs(T - np.diag(np.diag(T)))))
    if off > 1e-8 * max(1.0, float(np.max(qd)) if qd.size else 1.0):
        raise DomainError(
            f"task matrix is not diagonal in the shared basis "
            f"(off-diagonal magnitude {off:.3e})")
    gains = np.zeros(sys.dim)
    for j in range(sys.dim):
        if lam_a[j] == 0.0:
            continue
        try:
            gains[j] = scalar_optimal_gain(lam_a[j], lam_b[j], lam_r[j], qd[j])
        except DomainError as err:
            raise DomainError(
                f"coordinate {j}: {err}", coordinate=j) from err
    return symmetrize(V @ np.diag(gains) @ V.T)


def worst_case_ratio_oracle(sys: LinearSystem, K: np.ndarray, Q: np.ndarray,
                            horizon: int = 10000) -> float:
    """Simulation estimate of the worst-case energy ratio under u = K x.

    Drives the closed loop with unit-energy truncated sinusoids (flat taper)
    for `horizon` steps along probe directions, lets the state decay for up
    to another horizon, and returns the best cost-to-energy ratio found.
    For commuting symmetric families the probes are the shared eigenvectors
    at frequencies 0 and pi (where the supremum lives); otherwise fixed-seed
    random unit directions are swept over a 64-point frequency grid. The
    returned value never exceeds the true supremum.
    """
    if horizon < 1000:
        raise InvalidInputError(f"horizon must be >= 1000, got {horizon}")
    K = np.asarray(K, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if closed_loop_power_norm(sys, K, 64) >= 1.0:
        raise ClosedLoopUnstableError(
            "closed loop fails the norm decay check at power 64")
    A_cl = sys.A + sys.B @ K
    d = sys.dim

    family = common_symmetric_eigenbasis([sys.R, sys.A, sys.B, sys.D, Q])
    if family is not None:
        V = family[0]
        dirs = np.hstack((V, V))
        omegas = np.concatenate((np.zeros(d), np.full(d, np.pi)))
    else:
        rng = np.random.default_rng(0)
        n_dirs = 8
        raw = rng.standard_normal((d, n_dirs))
        raw /= np.linalg.norm(raw, axis=0, keepdims=True)
        grid = np.linspace(0.0, np.pi, 64)
        dirs = np.repeat(raw, grid.size, axis=1)
        omegas = np.tile(grid, n_dirs)

    Wv = sys.D @ dirs
    ncols = dirs.shape[1]
    X = np.zeros((d, ncols))
    cost = np.zeros(ncols)
    energy = np.zeros(ncols)
    for t in range(horizon):
        QX = Q @ X
        U = K @ X
        RU = sys.R @ U
        cost += np.einsum("ij,ij->j", X, QX) + np.einsum("ij,ij->j", U, RU)
        c = np.cos(omegas * t)
        energy += c * c
        X = A_cl @ X + Wv * c

    peak = max(float(np.max(np.einsum("ij,ij->j", X, X))), 1e-300)
    for t in range(horizon):
        QX = Q @ X
        U = K @ X
        RU = sys.R @ U
        cost += np.einsum("ij,ij->j", X, QX) + np.einsum("ij,ij->j", U, RU)
        X = A_cl @ X
        if t % 256 == 0 and float(np.max(np.einsum("ij,ij->j", X, X))) <= 1e-24 * peak:
            break

    return float(np.max(cost / energy))
