"""Small dense linear algebra shared by the step routines.

Systems here are tiny (n <= ~10) and assembled anew at every step, so a
hand-rolled Gaussian elimination that vectorizes over a leading batch axis is
both simpler and faster than calling LAPACK once per system. It also exposes
the pivots, which the singularity policy needs.
"""

import numpy as np

#: Pivot magnitude, relative to the max-norm of the matrix, below which a
#: system is declared singular.
PIVOT_RTOL = 1e-13


def gepp_solve(M, rhs):
    """Solve ``M @ X = rhs`` by Gaussian elimination with partial pivoting.

    Args:
        M: array of shape ``(..., n, n)``.
        rhs: array of shape ``(..., n)`` or ``(..., n, k)``.

    Returns:
        ``(X, min_pivot_ratio)`` where ``min_pivot_ratio`` has the batch shape
        and holds ``min_k |U_kk| / max|M|`` (``0`` for a zero matrix, which is
        singular).
    """
    M = np.array(M, dtype=float, copy=True)
    vector_rhs = rhs.ndim == M.ndim - 1
    B = np.array(rhs[..., None] if vector_rhs else rhs, dtype=float, copy=True)
    n = M.shape[-1]
    batch = M.shape[:-2]
    scale = np.max(np.abs(M), axis=(-2, -1))
    min_pivot = np.full(batch, np.inf)

    for k in range(n):
        # partial pivoting: bring the largest remaining entry of column k up
        p = k + np.argmax(np.abs(M[..., k:, k]), axis=-1)
        if np.any(p != k):
            rows = np.arange(n)
            perm = np.broadcast_to(rows, batch + (n,)).copy()
            perm[..., k] = p
            np.put_along_axis(perm, p[..., None], k, axis=-1)
            M = np.take_along_axis(M, perm[..., :, None], axis=-2)
            B = np.take_along_axis(B, perm[..., :, None], axis=-2)
        piv = M[..., k, k]
        min_pivot = np.minimum(min_pivot, np.abs(piv))
        safe = np.where(piv == 0.0, 1.0, piv)
        if k + 1 < n:
            factors = M[..., k + 1:, k] / safe[..., None]
            M[..., k + 1:, k:] -= factors[..., :, None] * M[..., None, k, k:]
            B[..., k + 1:, :] -= factors[..., :, None] * B[..., None, k, :]

    X = np.empty_like(B)
    for k in range(n - 1, -1, -1):
        acc = B[..., k, :] - np.einsum("...j,...jk->...k", M[..., k, k + 1:], X[..., k + 1:, :])
        piv = M[..., k, k]
        X[..., k, :] = acc / np.where(piv == 0.0, 1.0, piv)[..., None]

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scale > 0, min_pivot / np.where(scale > 0, scale, 1.0), 0.0)
    return (X[..., 0] if vector_rhs else X), ratio


def det3(J):
    """Determinant of ``(..., 3, 3)`` matrices by cofactor expansion."""
    return (
        J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
        - J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
        + J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0])
    )


def det(J):
    """Determinant, using cofactors for 3x3 and LU otherwise."""
    J = np.asarray(J, dtype=float)
    if J.shape[-1] == 3:
        return det3(J)
    return np.linalg.det(J)
