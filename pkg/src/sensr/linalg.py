"""Dense linear algebra helpers shared by the rest of the package.

Thin wrappers over LAPACK (through numpy/scipy) that pin down the contracts
the fairness code relies on: rank-revealing orthonormal bases and truncated
SVDs with a deterministic sign convention.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

RANK_RTOL = 1e-10


class LinAlgError(ValueError):
    pass


def as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise LinAlgError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinAlgError(f"{name} has non-finite entries")
    return a


def as_vector(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise LinAlgError(f"{name} must be 1-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinAlgError(f"{name} has non-finite entries")
    return a


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def numerical_rank(m, rtol: float = RANK_RTOL) -> int:
    a = as_matrix(m)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def qr_orthonormal(m, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis for the column space of ``m``.

    Uses column-pivoted Householder QR; columns whose pivot magnitude falls
    below ``rtol`` times the largest pivot are treated as dependent and dropped,
    so the result has as many columns as the numerical rank of ``m``.
    """
    a = as_matrix(m)
    if a.size == 0:
        raise LinAlgError("empty input")
    q, r, _ = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((a.shape[0], 0))
    rank = int(np.sum(diag > rtol * diag[0]))
    return _fix_signs(q[:, :rank])


def truncated_svd(m, k: int):
    """Top-``k`` singular values (descending) and right singular vectors.

    Returns ``(s, V)`` with ``V`` of shape ``(cols, k)``; columns carry a
    deterministic sign (largest entry positive).
    """
    a = as_matrix(m)
    if k < 1:
        raise LinAlgError("k must be at least 1")
    if k > min(a.shape):
        raise LinAlgError(f"k={k} exceeds min(rows, cols)={min(a.shape)}")
    try:
        _, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError("svd did not converge") from exc
    return s[:k].copy(), _fix_signs(vt[:k].T.copy())


def projector(basis: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto span(basis); basis must be orthonormal."""
    return basis @ basis.T


def frob(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), "fro"))
