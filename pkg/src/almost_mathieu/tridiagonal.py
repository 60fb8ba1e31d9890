"""Symmetric tridiagonal eigen-machinery with unit off-diagonal.

Sturm-sequence counting, bisection for eigenvalues and inverse iteration
for eigenvectors.  Used by the localization and IDS code.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from . import _kernels


def sturm_count(diagonal, shifts, offdiag=None) -> np.ndarray:
    """Number of eigenvalues strictly below each shift."""
    diagonal = np.ascontiguousarray(diagonal, dtype=np.float64)
    if offdiag is None:
        off2 = np.ones(max(diagonal.size - 1, 0))
    else:
        off2 = np.ascontiguousarray(offdiag, dtype=np.float64) ** 2
    shifts = np.atleast_1d(np.asarray(shifts, dtype=np.float64))
    return _kernels.sturm_counts(diagonal, off2, shifts)


def gershgorin(diagonal) -> tuple[float, float]:
    d = np.asarray(diagonal)
    pad = 2.0 if d.size > 1 else 0.0
    return float(d.min() - pad), float(d.max() + pad)


def bisect_eigenvalues(diagonal, indices, lo: float, hi: float, tol: float = 1e-12,
                       offdiag=None) -> np.ndarray:
    """Eigenvalues number ``indices`` (0-based, ascending) inside [lo, hi].

    All requested eigenvalues are bisected together; each step costs one
    Sturm sweep per eigenvalue.
    """
    idx = np.asarray(indices, dtype=np.int64)
    a = np.full(idx.size, float(lo))
    b = np.full(idx.size, float(hi))
    while True:
        width = b - a
        if np.all(width <= tol * np.maximum(1.0, np.abs(a))):
            break
        mid = 0.5 * (a + b)
        if np.all((mid == a) | (mid == b)):
            break
        below = sturm_count(diagonal, mid, offdiag)
        # eigenvalue #i lies below mid iff more than i eigenvalues are below mid
        left = below > idx
        b = np.where(left, mid, b)
        a = np.where(left, a, mid)
    return 0.5 * (a + b)


def _factor(diagonal, shift):
    n = diagonal.size
    off = np.ones(max(n - 1, 0))
    d = np.asarray(diagonal, dtype=np.float64) - shift
    dl, dd, du, du2, ipiv, info = lapack.dgttrf(off, d, off)
    if info > 0:
        # exact zero pivot: nudge the shift off the eigenvalue
        eps = np.finfo(float).eps * max(1.0, abs(shift))
        d = d - eps
        dl, dd, du, du2, ipiv, info = lapack.dgttrf(off, d, off)
    return dl, dd, du, du2, ipiv


def _tiny_eigenvector(diagonal, value, deflate):
    # the LAPACK tridiagonal wrapper needs n >= 3; solve 1x1 and 2x2 densely
    n = diagonal.size
    m = np.diag(diagonal) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    w, v = np.linalg.eigh(m)
    order = np.argsort(np.abs(w - value))
    for j in order:
        x = v[:, j]
        if not deflate or all(abs(np.dot(x, d)) < 0.5 for d in deflate):
            return x.copy(), True, 0
    return v[:, order[0]].copy(), True, 0


def residual_norm(diagonal, value: float, vector: np.ndarray) -> float:
    r = (np.asarray(diagonal) - value) * vector
    r[:-1] += vector[1:]
    r[1:] += vector[:-1]
    return float(np.linalg.norm(r))


def inverse_iteration(diagonal, value: float, rng: np.random.Generator,
                      max_iter: int = 50, tol: float = 1e-10, min_iter: int = 3,
                      deflate: list[np.ndarray] | None = None) -> tuple[np.ndarray, bool, int]:
    """Eigenvector for the (already accurate) eigenvalue ``value``.

    ``deflate`` holds vectors of numerically coincident eigenvalues; the
    iterate is kept orthogonal to them.  Returns ``(vector, converged, iters)``.
    """
    diagonal = np.asarray(diagonal, dtype=np.float64)
    if diagonal.size <= 2:
        return _tiny_eigenvector(diagonal, value, deflate)
    dl, dd, du, du2, ipiv = _factor(diagonal, value)
    x = rng.standard_normal(diagonal.size)
    x /= np.linalg.norm(x)
    scale = max(1.0, float(np.max(np.abs(diagonal))) + 2.0)
    for it in range(1, max_iter + 1):
        if deflate:
            for w in deflate:
                x -= np.dot(w, x) * w
        y, info = lapack.dgttrs(dl, dd, du, du2, ipiv, x)
        if deflate:
            for w in deflate:
                y -= np.dot(w, y) * w
        x = y / np.linalg.norm(y)
        if it >= min_iter and residual_norm(diagonal, value, x) < tol * scale:
            return x, True, it
    return x, False, max_iter
