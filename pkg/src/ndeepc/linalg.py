"""Dense SVD-based primitives: pseudo-inverse, null-space basis, rank report.

All routines use one reduced SVD and a relative singular-value cutoff so that
pseudo-inverse, null space and rank decisions are mutually consistent.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

DEFAULT_SV_CUTOFF = 1e-10


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for shape {mat.shape}") from exc


def pseudo_inverse(mat: np.ndarray, tol: float = DEFAULT_SV_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with relative cutoff ``tol * sigma_max``.

    Singular values below the cutoff are treated as exact zeros, so the
    result satisfies the four Moore-Penrose identities to numerical
    precision even for rank-deficient input.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        raise NumericalError("pseudo_inverse of an empty matrix")
    u, s, vt = _svd(mat)
    if s.size == 0:
        return np.zeros((mat.shape[1], mat.shape[0]))
    cut = tol * s[0]
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    k = s.size
    return (vt[:k].T * inv) @ u[:, :k].T


def nullspace_basis(mat: np.ndarray, tol: float = DEFAULT_SV_CUTOFF) -> np.ndarray:
    """Orthonormal basis of the right null space ``{v : mat v = 0}``.

    Returns an ``(n, k)`` matrix whose columns are the right singular
    vectors with singular value below ``tol * sigma_max``; ``k = 0`` when
    the matrix has full column rank.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        raise NumericalError("nullspace_basis of an empty matrix")
    _, s, vt = _svd(mat)
    cut = tol * s[0] if s.size else 0.0
    rank = int(np.sum(s > cut))
    return vt[rank:].T.copy()


def singular_values(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    return np.linalg.svd(mat, compute_uv=False)


def matrix_rank(mat: np.ndarray, tol: float = DEFAULT_SV_CUTOFF) -> int:
    s = singular_values(mat)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * s[0]))
