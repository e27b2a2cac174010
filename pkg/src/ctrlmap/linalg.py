"""Dense symmetric linear algebra helpers used by the solvers.

Thin wrappers around numpy.linalg that pin down the conventions the rest of
the package relies on (ascending eigenvalue order, symmetry tolerances,
explicit definiteness errors) and centralize input validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DefinitenessError, InvalidInputError

SYMMETRY_ATOL = 1e-10


def _as_square(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return M


def require_symmetric(M: np.ndarray, name: str = "matrix",
                      atol: float = SYMMETRY_ATOL) -> np.ndarray:
    """Validate symmetry within atol and return the symmetrized matrix."""
    M = _as_square(M, name)
    gap = np.max(np.abs(M - M.T)) if M.size else 0.0
    if gap > atol:
        raise InvalidInputError(
            f"{name} is not symmetric: max |M - M^T| entry {gap:.3e} exceeds {atol:.1e}")
    return 0.5 * (M + M.T)


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value of M."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("spectral_norm: input contains non-finite entries")
    if M.ndim != 2:
        raise InvalidInputError(f"spectral_norm expects a matrix, got ndim={M.ndim}")
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def frobenius_norm(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("frobenius_norm: input contains non-finite entries")
    return float(np.linalg.norm(M))


@dataclass
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    basis columns are orthonormal eigenvectors, eigenvalues ascending, and
    M = basis @ diag(eigenvalues) @ basis.T up to roundoff.
    """
    basis: np.ndarray
    eigenvalues: np.ndarray


def sym_eig(M: np.ndarray, name: str = "matrix") -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    S = require_symmetric(M, name)
    w, V = np.linalg.eigh(S)
    return SymEig(basis=V, eigenvalues=w)


def solve_spd(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M.

    Raises DefinitenessError (carrying the offending minimum eigenvalue) when
    the smallest eigenvalue of M is not safely positive relative to the
    largest, and InvalidInputError on shape or symmetry violations.
    """
    S = require_symmetric(M, "solve_spd matrix")
    B = np.asarray(B, dtype=float)
    if not np.all(np.isfinite(B)):
        raise InvalidInputError("solve_spd: right-hand side contains non-finite entries")
    w = np.linalg.eigvalsh(S)
    lo, hi = float(w[0]), float(abs(w[-1]))
    if lo <= 1e-12 * max(hi, 1e-300):
        raise DefinitenessError(
            f"solve_spd: matrix is not positive definite (min eigenvalue {lo:.3e})",
            min_eigenvalue=lo)
    return np.linalg.solve(S, B)


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthogonal matrix via QR with sign-fixed diagonal."""
    if dim < 1:
        raise InvalidInputError(f"random_orthogonal: dim must be >= 1, got {dim}")
    G = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return Q * signs[np.newaxis, :]


def common_symmetric_eigenbasis(matrices, rel_tol: float = 1e-8):
    """Shared eigenbasis for a family of commuting symmetric matrices.

    The basis comes from the eigendecomposition of the first matrix (callers
    put the one with well-separated eigenvalues first). Returns (V, diags)
    where diags[i] holds the eigenvalues of matrices[i] read off in that
    basis, or None when some matrix fails to be diagonal in it within
    rel_tol relative to its own scale.
    """
    first = require_symmetric(matrices[0], "matrix 0")
    V = np.linalg.eigh(first)[1]
    diags = []
    for i, M in enumerate(matrices):
        S = np.asarray(M, dtype=float)
        if np.max(np.abs(S - S.T)) > rel_tol * max(1.0, float(np.max(np.abs(S)))):
            return None
        T = V.T @ symmetrize(S) @ V
        d = np.diag(T).copy()
        off = T - np.diag(d)
        scale = max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)
        if np.max(np.abs(off)) > rel_tol * scale:
            return None
        diags.append(d)
    return V, diags
