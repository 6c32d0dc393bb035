"""Small dense linear-algebra kernel built on symmetric eigendecompositions.

Matrices here have at most a few thousand rows and (in the selection code)
at most nine columns. Single matrices go through the SVD; stacks of small
Gram matrices go through batched symmetric eigendecompositions.
"""
from dataclasses import dataclass

import numpy as np

EPS = np.finfo(np.float64).eps


class DimensionError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    """Raised when a matrix that must be positive definite is not."""


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns match eigenvalues


def _as_square_symmetric(a, tol=1e-10):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > tol * scale:
        raise DimensionError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = _as_square_symmetric(a)
    w, v = np.linalg.eigh(a)
    return SymEig(w[::-1].copy(), v[:, ::-1].copy())


def _gram_cutoff(lam_max, rtol, shape):
    floor = max(shape) * EPS
    return lam_max * max(rtol * rtol, floor)


def pinv(a, rtol=None):
    """Moore-Penrose inverse through the SVD.

    Singular values at or below ``rtol * sigma_max`` are treated as zero;
    the default ``rtol`` is ``max(rows, cols) * eps``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    if rtol is None:
        rtol = max(a.shape) * EPS
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(a.shape[::-1])
    keep = s > rtol * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def pinv_gram(g, n_rows, rtol=None):
    """(A'A)^+ from a stack of Gram matrices ``g = A'A`` of shape (..., K, K).

    The Gram spectrum holds squared singular values and carries rounding
    noise near ``n_rows * eps * lambda_max``, so eigenvalues below
    ``lambda_max * max(rtol**2, n_rows * eps)`` are dropped. For A with
    singular values well above ``sqrt(n_rows * eps) * sigma_max`` the result
    agrees with :func:`pinv`. Zero rows/columns (masked-out candidates)
    simply contribute zero eigenvalues.
    """
    g = np.asarray(g, dtype=np.float64)
    K = g.shape[-1]
    if rtol is None:
        rtol = max(n_rows, K) * EPS
    w, v = np.linalg.eigh(g)
    cut = _gram_cutoff(w[..., -1:], rtol, (n_rows, K))
    keep = (w > cut) & (w[..., -1:] > 0)
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return np.einsum("...ij,...j,...kj->...ik", v, inv_w, v)


def annihilator(a):
    """M_A = I - A (A'A)^+ A', the projector onto the complement of span(A)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    T = a.shape[0]
    return np.eye(T) - a @ pinv(a)


def logdet_pd(a, floor=None):
    """Sum of log-eigenvalues of a symmetric positive definite matrix.

    Raises :class:`SingularMatrixError` if any eigenvalue is at or below
    ``floor`` (default ``1e-12 * lambda_max``) rather than clamping.
    """
    w = sym_eig(a).eigenvalues
    lam_max = w[0]
    if floor is None:
        floor = 1e-12 * lam_max
    if lam_max <= 0 or w[-1] <= floor:
        raise SingularMatrixError("matrix is singular or indefinite")
    return float(np.sum(np.log(w)))


def logdet_pd_many(stack, rel_floor=1e-12):
    """Vectorised :func:`logdet_pd`; singular entries come back as +inf."""
    w = np.linalg.eigvalsh(stack)
    lam_max = w[..., -1]
    ok = (lam_max > 0) & (w[..., 0] > rel_floor * lam_max)
    safe = np.where(ok[..., None], w, 1.0)
    return np.where(ok, np.log(safe).sum(axis=-1), np.inf)


def inv_sqrt_sym(a):
    """Symmetric S with S a S = I for symmetric positive definite ``a``."""
    e = sym_eig(a)
    w = e.eigenvalues
    if w[-1] <= 1e-12 * max(w[0], 0.0) or w[-1] <= 0:
        raise SingularMatrixError("matrix is not positive definite")
    v = e.eigenvectors
    return (v / np.sqrt(w)) @ v.T
