"""Sampled Lipschitz constants of task-to-controller maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ExperimentDegenerateError, InfeasibleTaskError,
                     InvalidInputError)
from .hinf import gamma_star
from .lqr import LinearSystem, lqr_gain, lqr_lipschitz_upper_bound, solve_dare
from .sysgen import separation_lower_coefficient


def _pairwise_max_ratio(Xs: np.ndarray, Ys: np.ndarray, eps: float):
    """Max over pairs of ||dY||_F / (||dX||_F + eps) and the pair count.

    Differences are formed explicitly (blockwise) rather than through Gram
    identities so that close pairs, which dominate the maximum, keep full
    relative precision.
    """
    n, width = Xs.shape
    block = min(512, max(16, int(2828 / max(1.0, np.sqrt(width)))))
    best = 0.0
    count = 0
    for i0 in range(0, n, block):
        Xi, Yi = Xs[i0:i0 + block], Ys[i0:i0 + block]
        for j0 in range(i0, n, block):
            Xj, Yj = Xs[j0:j0 + block], Ys[j0:j0 + block]
            dX = np.linalg.norm(Xi[:, None, :] - Xj[None, :, :], axis=2)
            dY = np.linalg.norm(Yi[:, None, :] - Yj[None, :, :], axis=2)
            ratios = dY / (dX + eps)
            if j0 == i0:
                iu = np.triu_indices(Xi.shape[0], k=1)
                count += iu[0].size
                best = max(best, float(np.max(ratios[iu], initial=0.0)))
            else:
                count += ratios.size
                best = max(best, float(np.max(ratios, initial=0.0)))
    return best, count


def estimate_lipschitz(samples, epsilon: float = 1e-12) -> float:
    """Largest pairwise difference quotient over (task, controller) samples.

    samples is a sequence of (Q, K) array pairs; all pairs are compared and
    the maximum of ||K_i - K_j||_F / (||Q_i - Q_j||_F + epsilon) returned.
    """
    if len(samples) < 2:
        raise InvalidInputError(
            f"need at least two samples, got {len(samples)}")
    if epsilon <= 0.0:
        raise InvalidInputError("epsilon must be positive")
    Xs = np.stack([np.asarray(q, dtype=float).ravel() for q, _ in samples])
    Ys = np.stack([np.asarray(k, dtype=float).ravel() for _, k in samples])
    if not (np.all(np.isfinite(Xs)) and np.all(np.isfinite(Ys))):
        raise InvalidInputError("samples contain non-finite entries")
    best, _ = _pairwise_max_ratio(Xs, Ys, epsilon)
    return best


@dataclass
class LipschitzReport:
    """Sampled steepness of the nominal and robust maps on one system.

    upper_bound_unsafe and lower_coefficient are None when the respective
    guarantee does not apply to the system.
    """
    l_unsafe: float
    l_safe: float
    ratio: float
    tasks_total: int
    tasks_feasible_safe: int
    upper_bound_unsafe: float | None
    lower_coefficient: float | None


def ratio_experiment(sys: LinearSystem, tasks, rel_tol: float = 1e-4) -> LipschitzReport:
    """Sampled Lipschitz constants of both controller maps on a task set.

    The nominal (unsafe) map uses every task whose Riccati solve converges;
    the robust (safe) map additionally drops tasks with no feasible level
    below the search cap, and both estimates are formed over their own
    retained sets. Raises ExperimentDegenerateError when either set has
    fewer than two usable samples or the nominal estimate is zero.
    """
    tasks = list(tasks)
    unsafe_samples = []
    safe_samples = []
    for Q in tasks:
        sol = solve_dare(sys, Q)
        if not sol.converged:
            continue
        unsafe_samples.append((Q, lqr_gain(sys, sol.P)))
        try:
            syn = gamma_star(sys, Q, rel_tol)
        except InfeasibleTaskError:
            continue
        safe_samples.append((Q, syn.Ku))
    if len(unsafe_samples) < 2 or len(safe_samples) < 2:
        raise ExperimentDegenerateError(
            f"too few usable samples: {len(unsafe_samples)} nominal, "
            f"{len(safe_samples)} robust (of {len(tasks)} tasks)")
    l_unsafe = estimate_lipschitz(unsafe_samples)
    l_safe = estimate_lipschitz(safe_samples)
    if l_unsafe == 0.0:
        raise ExperimentDegenerateError("nominal map is flat on the sample")
    return LipschitzReport(
        l_unsafe=l_unsafe,
        l_safe=l_safe,
        ratio=l_safe / l_unsafe,
        tasks_total=len(tasks),
        tasks_feasible_safe=len(safe_samples),
        upper_bound_unsafe=lqr_lipschitz_upper_bound(sys),
        lower_coefficient=separation_lower_coefficient(sys),
    )
