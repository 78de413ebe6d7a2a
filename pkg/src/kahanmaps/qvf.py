"""Quadratic vector fields and Kahan's discretization.

A quadratic vector field on R^n is

    dx_i/dt = sum_jk a_ijk x_j x_k + sum_j b_ij x_j + c_i

and Kahan's method replaces every product ``x_j x_k`` by the symmetric form
``(x_j' x_k + x_j x_k') / 2`` and every linear term by its average. The
resulting update is linear in the new point ``x'``:

    (I - h/2 Df(x)) x' = x + h/2 b x + h c

so one step, and its inverse, are a single dense linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._linalg import PIVOT_RTOL, gepp_solve
from .errors import DimensionError, NoConvergence, SingularStep


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QuadraticVectorField:
    """Coefficients ``(a, b, c)`` of a quadratic vector field.

    ``a`` is symmetrized in its last two indices on construction. The
    antisymmetric part never contributes to the field or to Kahan's map, so
    this is a canonical form rather than a restriction.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        n = c.shape[0] if c.ndim == 1 else -1
        if n < 1 or a.shape != (n, n, n) or b.shape != (n, n):
            raise DimensionError(
                f"inconsistent coefficient shapes a{a.shape}, b{b.shape}, c{c.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("vector field coefficients must be finite")
        object.__setattr__(self, "a", _frozen(0.5 * (a + a.transpose(0, 2, 1))))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "QuadraticVectorField":
        return cls(np.zeros((n, n, n)), np.zeros((n, n)), np.zeros(n))

    @classmethod
    def linear(cls, b, c=None) -> "QuadraticVectorField":
        """The affine field ``f(x) = b x + c``."""
        b = np.atleast_2d(np.asarray(b, dtype=float))
        n = b.shape[0]
        c = np.zeros(n) if c is None else c
        return cls(np.zeros((n, n, n)), b, c)

    def __call__(self, x):
        return eval_field(self, x)

    def __eq__(self, other):
        if not isinstance(other, QuadraticVectorField):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.c, other.c)
        )

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes(), self.c.tobytes()))

    def __repr__(self):
        return f"QuadraticVectorField(n={self.n})"


class StepDiagnostics(NamedTuple):
    """Per-step health numbers.

    Attributes:
        residual: max-norm defect of the Kahan equations at ``(x, x')``,
            written in the multiplied-through form ``x' - x - h * (...)``.
        condition_estimate: 1-norm condition number of the step matrix.
    """

    residual: float
    condition_estimate: float


@dataclass(frozen=True, eq=False)
class AffineMap:
    """The change of coordinates ``y = T x + s``."""

    T: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if T.shape != (s.shape[0], s.shape[0]):
            raise DimensionError(f"affine map shapes T{T.shape}, s{s.shape} disagree")
        object.__setattr__(self, "T", _frozen(T))
        object.__setattr__(self, "s", _frozen(s))

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(n), np.zeros(n))

    def __call__(self, x):
        return self.T @ np.asarray(x, dtype=float) + self.s

    def inverse(self) -> "AffineMap":
        try:
            Tinv = np.linalg.inv(self.T)
        except np.linalg.LinAlgError as exc:
            raise SingularStep("affine map is not invertible") from exc
        return AffineMap(Tinv, -Tinv @ self.s)


def _as_state(v: QuadraticVectorField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (v.n,):
        raise DimensionError(f"state of shape {x.shape} for a field of dimension {v.n}")
    return x


def eval_field(v: QuadraticVectorField, x) -> np.ndarray:
    """Evaluate ``f(x)``."""
    x = _as_state(v, x)
    return np.einsum("ijk,j,k->i", v.a, x, x) + v.b @ x + v.c


def field_jacobian(v: QuadraticVectorField, x) -> np.ndarray:
    """``Df(x)`` with entries ``2 sum_k a_ilk x_k + b_il``."""
    x = _as_state(v, x)
    return 2.0 * np.einsum("ilk,k->il", v.a, x) + v.b


def kahan_defect(v: QuadraticVectorField, x, x_prime, h) -> np.ndarray:
    """Defect ``x' - x - h * rhs(x, x')`` of Kahan's equations.

    Evaluated straight from the symmetric-product form, independently of the
    linear system used to solve it.
    """
    x = _as_state(v, x)
    xp = _as_state(v, x_prime)
    quad = 0.5 * (np.einsum("ijk,j,k->i", v.a, xp, x) + np.einsum("ijk,j,k->i", v.a, x, xp))
    rhs = quad + v.b @ (0.5 * (x + xp)) + v.c
    return xp - x - h * rhs


def step_matrix(v: QuadraticVectorField, x, h) -> np.ndarray:
    """``M(x) = I - h/2 Df(x)``, the matrix of the Kahan step at ``x``."""
    return np.eye(v.n) - 0.5 * h * field_jacobian(v, x)


def _solve_checked(M, rhs, what):
    sol, ratio = gepp_solve(M, rhs)
    if not ratio >= PIVOT_RTOL:
        raise SingularStep(
            f"{what}: relative pivot {ratio:.3e} below {PIVOT_RTOL:.0e}",
            pivot=float(ratio),
            scale=float(np.max(np.abs(M))),
        )
    return sol


def kahan_step(v: QuadraticVectorField, x, h: float):
    """One step of Kahan's method.

    Args:
        v: the vector field.
        x: current point, shape ``(n,)``.
        h: time step; negative values step backwards.

    Returns:
        ``(x_prime, StepDiagnostics)``.

    Raises:
        SingularStep: if ``I - h/2 Df(x)`` has a pivot below the tolerance.
    """
    x = _as_state(v, x)
    n = v.n
    M = step_matrix(v, x, h)
    rhs = x + h * v.c + 0.5 * h * (v.b @ x)
    sol = _solve_checked(M, np.concatenate([rhs[:, None], np.eye(n)], axis=1), "Kahan step")
    xp = sol[:, 0]
    Minv = sol[:, 1:]
    cond = float(np.max(np.sum(np.abs(M), axis=0)) * np.max(np.sum(np.abs(Minv), axis=0)))
    residual = float(np.max(np.abs(kahan_defect(v, x, xp, h))))
    return xp, StepDiagnostics(residual, cond)


def kahan_inverse_step(v: QuadraticVectorField, x_prime, h: float):
    """Recover ``x`` from ``x'``.

    Kahan's equations are invariant under ``(x, x', h) -> (x', x, -h)``, so
    the inverse map is the forward map with the step negated.
    """
    return kahan_step(v, x_prime, -h)


def map_jacobian(v: QuadraticVectorField, x, h: float, x_prime=None) -> np.ndarray:
    """Exact Jacobian ``dx'/dx`` of one Kahan step.

    Differentiating the residual ``F(x, x') = x' - x - h * rhs(x, x')`` gives
    ``dF/dx' = I - h/2 Df(x)`` and ``dF/dx = -(I + h/2 Df(x'))``, so the
    implicit function theorem yields

        dx'/dx = (I - h/2 Df(x))^{-1} (I + h/2 Df(x')).

    ``x_prime`` may be passed when the step has already been taken.
    """
    x = _as_state(v, x)
    if x_prime is None:
        x_prime, _ = kahan_step(v, x, h)
    x_prime = _as_state(v, x_prime)
    dF_dxp = step_matrix(v, x, h)
    dF_dx = -(np.eye(v.n) + 0.5 * h * field_jacobian(v, x_prime))
    return _solve_checked(dF_dxp, -dF_dx, "map Jacobian")


def affine_product(g1, c1, g2, c2):
    """Coefficients of ``(g1 . x + c1)(g2 . x + c2)`` as one field component.

    Returns ``(a_row, b_row, c_row)`` with ``a_row`` symmetric.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    a_row = 0.5 * (np.outer(g1, g2) + np.outer(g2, g1))
    return a_row, c1 * g2 + c2 * g1, c1 * c2


def affine_conjugate(v: QuadraticVectorField, m: AffineMap) -> QuadraticVectorField:
    """Push ``v`` forward through ``y = T x + s``.

    Substitutes ``x = P y + r`` with ``P = T^{-1}``, ``r = -P s`` into the
    field and multiplies by ``T``.
    """
    if m.T.shape[0] != v.n:
        raise DimensionError(f"affine map of dimension {m.T.shape[0]} for field of dimension {v.n}")
    inv = m.inverse()
    P, r = inv.T, inv.s
    T = m.T
    a_new = np.einsum("ip,pjk,jl,km->ilm", T, v.a, P, P)
    b_new = np.einsum("ip,pj,jl->il", T, 2.0 * np.einsum("pjk,k->pj", v.a, r) + v.b, P)
    c_new = T @ (np.einsum("pjk,j,k->p", v.a, r, r) + v.b @ r + v.c)
    return QuadraticVectorField(a_new, b_new, c_new)


def midpoint_step(v: QuadraticVectorField, x, h: float, tol: float = 1e-15, max_iter: int = 100):
    """Implicit midpoint rule ``x' = x + h f((x + x')/2)`` by fixed-point iteration.

    Used as the high-accuracy reference in order studies, not as a
    structure-preserving method.
    """
    x = _as_state(v, x)
    xp = x + h * eval_field(v, x)
    for _ in range(max_iter):
        new = x + h * eval_field(v, 0.5 * (x + xp))
        delta = np.max(np.abs(new - xp))
        xp = new
        if delta <= tol * (1.0 + np.max(np.abs(xp))):
            return xp
    raise NoConvergence(f"midpoint fixed point stalled at {delta:.3e}", iterations=max_iter, defect=float(delta))


# -- batched kernels ---------------------------------------------------------
#
# The verification sweeps step thousands of independent systems at once. These
# kernels take coefficient arrays with a leading batch axis (a: (N, n, n, n),
# b: (N, n, n), c: (N, n)) and already symmetrized ``a``.


def batch_field_jacobian(a, b, X):
    return 2.0 * np.einsum("...ilk,...k->...il", a, X) + b


def batch_kahan_step(a, b, c, X, h):
    """Kahan step for a batch of systems and points.

    Returns ``(X_prime, ok)`` where ``ok`` is False wherever the pivot test
    failed; those rows of ``X_prime`` are meaningless.
    """
    h = np.asarray(h, dtype=float)
    hh = h[..., None]
    n = X.shape[-1]
    M = np.eye(n) - 0.5 * hh[..., None] * batch_field_jacobian(a, b, X)
    rhs = X + hh * c + 0.5 * hh * np.einsum("...ij,...j->...i", b, X)
    Xp, ratio = gepp_solve(M, rhs)
    return Xp, ratio >= PIVOT_RTOL


def batch_map_jacobian(a, b, X, Xp, h):
    """Batched version of :func:`map_jacobian` given both endpoints."""
    h = np.asarray(h, dtype=float)[..., None, None]
    n = X.shape[-1]
    M = np.eye(n) - 0.5 * h * batch_field_jacobian(a, b, X)
    R = np.eye(n) + 0.5 * h * batch_field_jacobian(a, b, Xp)
    J, ratio = gepp_solve(M, R)
    return J, ratio >= PIVOT_RTOL


def batch_kahan_defect(a, b, c, X, Xp, h):
    hh = np.asarray(h, dtype=float)[..., None]
    quad = 0.5 * (
        np.einsum("...ijk,...j,...k->...i", a, Xp, X) + np.einsum("...ijk,...j,...k->...i", a, X, Xp)
    )
    rhs = quad + np.einsum("...ij,...j->...i", b, 0.5 * (X + Xp)) + c
    return Xp - X - hh * rhs
