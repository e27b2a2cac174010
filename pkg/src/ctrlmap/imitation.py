"""Dataset construction for imitation of controller maps.

Two regimes. In the infinite-sample regime the network sees the task matrix
itself (vec(Q) -> vec(K)), so generalization is limited only by the
regularity of the target map. In the finite-sample regime the network sees
(vec(Q), x) -> K x on finitely many states per task, which is the
behavior-cloning setting.

Teachers: "unsafe" is the nominal Riccati gain, "safe" the robust gain at
the smallest certified-feasible level. Tasks whose Riccati solve fails,
that have no feasible level, or whose robust gain exceeds an optional
sanity cap are dropped from both teachers so the splits stay matched; for
the same reason the split permutation depends only on split_seed and the
state draws consume the caller-provided rng in task order, independent of
the teacher.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExperimentDegenerateError, InfeasibleTaskError, InvalidInputError
from .hinf import gamma_star
from .lqr import LinearSystem, lqr_gain, solve_dare


@dataclass
class ImitationDataset:
    """One split of an imitation dataset.

    task_ids holds the originating task's index in the caller's task list
    for every row, which is what the grouped evaluation metric keys on.
    """
    split: str
    inputs: np.ndarray
    targets: np.ndarray
    task_ids: np.ndarray


@dataclass
class TeacherGains:
    """Per-task controllers for both teachers on the kept (usable) tasks."""
    kept: list[int]
    unsafe: list[np.ndarray]
    safe: list[np.ndarray]


def compute_teacher_gains(sys: LinearSystem, tasks, rel_tol: float = 1e-4,
                          gamma_cap: float = 1e6,
                          gain_cap: float | None = None) -> TeacherGains:
    """Synthesize both controllers per task, dropping unusable tasks.

    A task is unusable when the DARE does not converge or when no feasible
    attenuation level is found below gamma_cap; such tasks are removed from
    both teachers so the splits stay matched. gain_cap, when set, drops
    tasks whose robust gain exceeds it in Frobenius norm: near the
    definiteness boundary the gain formula's denominator degenerates and
    produces targets orders of magnitude above the rest, which no student
    can fit in a bounded epoch budget (their gradient scale also poisons
    Adam's second-moment estimates for every other task).
    """
    kept: list[int] = []
    unsafe: list[np.ndarray] = []
    safe: list[np.ndarray] = []
    for i, Q in enumerate(tasks):
        sol = solve_dare(sys, Q)
        if not sol.converged:
            continue
        try:
            syn = gamma_star(sys, Q, rel_tol, gamma_cap=gamma_cap)
        except InfeasibleTaskError:
            continue
        if gain_cap is not None and float(np.linalg.norm(syn.Ku)) > gain_cap:
            continue
        kept.append(i)
        unsafe.append(lqr_gain(sys, sol.P))
        safe.append(syn.Ku)
    return TeacherGains(kept=kept, unsafe=unsafe, safe=safe)


def _select_gains(gains: TeacherGains, teacher: str) -> list[np.ndarray]:
    if teacher == "unsafe":
        return gains.unsafe
    if teacher == "safe":
        return gains.safe
    raise InvalidInputError(f"teacher must be 'safe' or 'unsafe', got {teacher!r}")


def _split_tasks(n_kept: int, split_seed: int):
    if n_kept < 2:
        raise ExperimentDegenerateError(
            f"need at least two usable tasks to split, got {n_kept}")
    perm = np.random.default_rng(split_seed).permutation(n_kept)
    n_train = int(round(0.8 * n_kept))
    n_train = min(max(n_train, 1), n_kept - 1)
    return perm[:n_train], perm[n_train:]


def build_infinite_sample_dataset(sys: LinearSystem, tasks, teacher: str,
                                  split_seed: int,
                                  gains: TeacherGains | None = None,
                                  rel_tol: float = 1e-4) -> dict[str, ImitationDataset]:
    """vec(Q) -> vec(K) datasets, split 80/20 over tasks.

    Returns {"train": ..., "eval_unseen": ...}. Passing a precomputed
    TeacherGains avoids synthesizing twice when building both teachers.
    """
    tasks = list(tasks)
    if gains is None:
        gains = compute_teacher_gains(sys, tasks, rel_tol)
    ks = _select_gains(gains, teacher)
    tr_idx, te_idx = _split_tasks(len(gains.kept), split_seed)

    def pack(split, idx):
        inputs = np.stack([tasks[gains.kept[i]].ravel() for i in idx])
        targets = np.stack([ks[i].ravel() for i in idx])
        ids = np.array([gains.kept[i] for i in idx])
        return ImitationDataset(split, inputs, targets, ids)

    return {"train": pack("train", tr_idx), "eval_unseen": pack("eval_unseen", te_idx)}


def build_finite_sample_dataset(sys: LinearSystem, tasks, teacher: str,
                                states_per_task: int, split_seed: int,
                                rng: np.random.Generator,
                                gains: TeacherGains | None = None,
                                eval_states_per_task: int | None = None,
                                rel_tol: float = 1e-4) -> dict[str, ImitationDataset]:
    """(vec(Q), x) -> K x datasets with finitely many states per task.

    Training tasks contribute states_per_task standard normal states each;
    a further eval_states_per_task fresh states per training task form the
    seen-task split, and held-out tasks contribute states_per_task states
    each. The rng is consumed in task order, independent of the teacher, so
    two calls with identically seeded generators see the same draws.
    Returns {"train", "eval_seen", "eval_unseen"}.
    """
    if states_per_task < 1:
        raise InvalidInputError("states_per_task must be >= 1")
    tasks = list(tasks)
    if gains is None:
        gains = compute_teacher_gains(sys, tasks, rel_tol)
    ks = _select_gains(gains, teacher)
    tr_idx, te_idx = _split_tasks(len(gains.kept), split_seed)
    train_set = set(int(i) for i in tr_idx)
    n_eval = sys.dim if eval_states_per_task is None else eval_states_per_task

    draws = {}
    for i in range(len(gains.kept)):
        if i in train_set:
            draws[i] = (rng.standard_normal((states_per_task, sys.dim)),
                        rng.standard_normal((n_eval, sys.dim)))
        else:
            draws[i] = (rng.standard_normal((states_per_task, sys.dim)), None)

    def pack(split, idx, which):
        rows_in, rows_t, rows_id = [], [], []
        for i in idx:
            i = int(i)
            states = draws[i][which]
            qvec = tasks[gains.kept[i]].ravel()
            targets = states @ ks[i].T
            rows_in.append(np.hstack((np.tile(qvec, (states.shape[0], 1)), states)))
            rows_t.append(targets)
            rows_id.append(np.full(states.shape[0], gains.kept[i]))
        return ImitationDataset(split, np.vstack(rows_in), np.vstack(rows_t),
                                np.concatenate(rows_id))

    return {
        "train": pack("train", tr_idx, 0),
        "eval_seen": pack("eval_seen", tr_idx, 1),
        "eval_unseen": pack("eval_unseen", te_idx, 0),
    }
