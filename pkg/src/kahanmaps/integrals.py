"""Quadratic integrals in two variables and the h-modified integrals that
Kahan-type discretizations preserve.

The planar part of the field is written as

    dx_p/dt =  A(x) dI/dx_q
    dx_q/dt = -A(x) dI/dx_p

with ``I`` a quadratic in ``(x_p, x_q)`` and ``A`` affine. Discretizing this
as

    (x_p' - x_p)/h =  B I_q(x') + C I_q(x)
    (x_q' - x_q)/h = -B I_p(x') - C I_p(x)

for scalars ``B``, ``C`` gives, whenever ``D1 != 0``,

    (I(x') - D2/(2 D1)) / (I(x) - D2/(2 D1)) = (1 + h^2 D1 C^2) / (1 + h^2 D1 B^2)

whatever the remaining components of ``x'`` are. Different choices of ``B``
and ``C`` (:class:`Case1`, :class:`Case2`, :class:`Case3Midpoint`,
:class:`Case3Frozen`) then conserve different modified integrals.

Every scheme and integral here takes the prefactor ``A`` of the continuous
field. Where the classical formulas are in terms of ``E = A/2`` or
``F = A/2`` the halving is done internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Union

import numpy as np

from ._linalg import PIVOT_RTOL, gepp_solve
from .errors import DimensionError, DivisionByZero, NoConvergence, SingularStep
from .qvf import QuadraticVectorField, affine_product, eval_field, step_matrix

#: Denominators with magnitude below this are treated as vanishing.
DENOMINATOR_ATOL = 1e-15

FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAX_ITER = 100


@dataclass(frozen=True)
class Quadratic2Form:
    """``I = a1/2 u^2 + a2 u v + a3/2 v^2 + a4 u + a5 v`` with ``u = x_p``,
    ``v = x_q``.

    ``p`` and ``q`` are 1-based coordinate indices.
    """

    a1: float
    a2: float
    a3: float
    a4: float = 0.0
    a5: float = 0.0
    p: int = 1
    q: int = 2

    def __post_init__(self):
        if self.p == self.q:
            raise ValueError("the two variables of a quadratic form must differ")
        if self.p < 1 or self.q < 1:
            raise ValueError("variable indices are 1-based")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("quadratic form coefficients must be finite")

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4, self.a5], dtype=float)

    @property
    def indices(self) -> tuple[int, int]:
        """Zero-based ``(p, q)``."""
        return self.p - 1, self.q - 1

    def uv(self, x):
        x = np.asarray(x, dtype=float)
        i, j = self.indices
        if max(i, j) >= x.shape[-1]:
            raise DimensionError(
                f"form on variables ({self.p}, {self.q}) evaluated on a {x.shape[-1]}-vector"
            )
        return x[..., i], x[..., j]

    def __call__(self, x):
        return eval_integral(self, x)

    def gradient(self, x):
        """``(dI/du, dI/dv)``."""
        u, v = self.uv(x)
        return self.a1 * u + self.a2 * v + self.a4, self.a2 * u + self.a3 * v + self.a5

    def scaled(self, alpha: float) -> "Quadratic2Form":
        return Quadratic2Form(*(alpha * self.coeffs), p=self.p, q=self.q)

    def swapped(self) -> "Quadratic2Form":
        """The same function with the roles of ``u`` and ``v`` exchanged."""
        return Quadratic2Form(self.a3, self.a2, self.a1, self.a5, self.a4, p=self.q, q=self.p)


@dataclass(frozen=True)
class AffineScalar:
    """``A(x) = g . x + g0``."""

    g: np.ndarray
    g0: float = 0.0

    def __post_init__(self):
        g = np.array(self.g, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(g)) and np.isfinite(self.g0)):
            raise ValueError("affine coefficients must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "g0", float(self.g0))

    @classmethod
    def coordinate(cls, n: int, index: int, scale: float = 1.0, offset: float = 0.0):
        """``A(x) = scale * x_index + offset`` with a 1-based index."""
        g = np.zeros(n)
        g[index - 1] = scale
        return cls(g, offset)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(f"affine function of dimension {self.n} on a {x.shape[-1]}-vector")
        return x @ self.g + self.g0

    def scaled(self, beta: float) -> "AffineScalar":
        return AffineScalar(beta * self.g, beta * self.g0)

    def __eq__(self, other):
        if not isinstance(other, AffineScalar):
            return NotImplemented
        return np.array_equal(self.g, other.g) and self.g0 == other.g0

    def __hash__(self):
        return hash((self.g.tobytes(), self.g0))


#: ``A`` may also be any callable of the state; only the theory for the
#: modified integrals requires nothing more, linear implicitness does.
Prefactor = Union[AffineScalar, Callable[[np.ndarray], float]]


def d1(f: Quadratic2Form) -> float:
    """``a1 a3 - a2^2``."""
    return f.a1 * f.a3 - f.a2**2


def d2(f: Quadratic2Form) -> float:
    """``2 a2 a4 a5 - a3 a4^2 - a1 a5^2``, the bordered determinant."""
    return 2.0 * f.a2 * f.a4 * f.a5 - f.a3 * f.a4**2 - f.a1 * f.a5**2


def eval_integral(f: Quadratic2Form, x):
    u, v = f.uv(x)
    return 0.5 * f.a1 * u * u + f.a2 * u * v + 0.5 * f.a3 * v * v + f.a4 * u + f.a5 * v


def _shift(f: Quadratic2Form) -> float:
    D1 = d1(f)
    if D1 == 0.0:
        raise DivisionByZero("shifted integral needs D1 != 0")
    return 0.5 * d2(f) / D1


def _checked_div(num, den, what):
    den_arr = np.asarray(den)
    if np.any(np.abs(den_arr) < DENOMINATOR_ATOL):
        raise DivisionByZero(f"{what}: denominator vanishes")
    return num / den


@dataclass(frozen=True)
class ModifiedIntegralSpec:
    """Which modified integral to evaluate.

    ``flavor="hat"`` is ``(I + h^2 D2 A^2 / 8) / (1 + h^2 D1 A^2 / 4)`` and is
    defined for every form. ``flavor="tilde"`` is the shifted version
    ``(I - D2/(2 D1)) / (1 + h^2 D1 A^2 / 4)``; the two differ by the constant
    ``D2/(2 D1)`` and the tilde form needs ``D1 != 0``.
    """

    form: Quadratic2Form
    A: Prefactor
    h: float
    flavor: Literal["hat", "tilde"] = "hat"

    def __post_init__(self):
        if self.flavor not in ("hat", "tilde"):
            raise ValueError(f"unknown flavor {self.flavor!r}")

    def __call__(self, x):
        return modified_integral(self, x)


def modified_integral(spec: ModifiedIntegralSpec, x):
    """Evaluate the modified integral preserved by Kahan's method."""
    f, h = spec.form, spec.h
    Ax = spec.A(x)
    den = 1.0 + 0.25 * h * h * d1(f) * Ax * Ax
    if spec.flavor == "hat":
        num = eval_integral(f, x) + 0.125 * h * h * d2(f) * Ax * Ax
    else:
        num = eval_integral(f, x) - _shift(f)
    return _checked_div(num, den, "modified integral")


def case2_modified_integral(f: Quadratic2Form, A: Prefactor, h: float, x):
    """Integral conserved by the trapezoidal-type :class:`Case2` scheme.

    ``I + h^2 F^2 (D1 I - D2/2)`` with ``F = A/2``; defined for all ``D1``.
    """
    F = 0.5 * A(x)
    I = eval_integral(f, x)
    return I + h * h * F * F * (d1(f) * I - 0.5 * d2(f))


# -- the B/C family ----------------------------------------------------------


@dataclass(frozen=True)
class Case1:
    """``B = A(x)/2``, ``C = A(x')/2``; Kahan's method on the planar part."""

    A: Prefactor


@dataclass(frozen=True)
class Case2:
    """``B = A(x')/2``, ``C = A(x)/2``; the trapezoidal rule on the planar part."""

    A: Prefactor


@dataclass(frozen=True)
class Case3Midpoint:
    """``B = C = A((x + x')/2)/2``; the midpoint rule, conserves ``I``."""

    A: Prefactor


@dataclass(frozen=True)
class Case3Frozen:
    """``B = C = A(x)/2``; linearly implicit with a frozen prefactor, conserves ``I``."""

    A: Prefactor


BCScheme = Union[Case1, Case2, Case3Midpoint, Case3Frozen]


def bc_coefficients(scheme: BCScheme, x, x_prime) -> tuple[float, float]:
    """Numeric ``(B, C)`` of ``scheme`` at the pair ``(x, x')``."""
    if not isinstance(scheme, (Case1, Case2, Case3Midpoint, Case3Frozen)):
        raise TypeError(f"not a B/C scheme: {scheme!r}")
    A = scheme.A
    if isinstance(scheme, Case1):
        return 0.5 * A(x), 0.5 * A(x_prime)
    if isinstance(scheme, Case2):
        return 0.5 * A(x_prime), 0.5 * A(x)
    if isinstance(scheme, Case3Midpoint):
        B = 0.5 * A(0.5 * (np.asarray(x) + np.asarray(x_prime)))
        return B, B
    B = 0.5 * A(x)
    return B, B


def solve_bc_pair(f: Quadratic2Form, x, Bval: float, Cval: float, h: float):
    """Solve the planar B/C equations for ``(x_p', x_q')`` given numbers ``B, C``.

    The 2x2 matrix has determinant ``1 + h^2 B^2 D1``.
    """
    u, v = f.uv(x)
    Ip, Iq = f.gradient(x)
    hB = h * Bval
    M = np.array([[1.0 - hB * f.a2, -hB * f.a3], [hB * f.a1, 1.0 + hB * f.a2]])
    rhs = np.array([u + hB * f.a5 + h * Cval * Iq, v - hB * f.a4 - h * Cval * Ip])
    return _solve2(M, rhs)


def _solve2(M, rhs):
    sol, ratio = gepp_solve(M, rhs)
    if not ratio >= PIVOT_RTOL:
        raise SingularStep(f"planar B/C system: relative pivot {ratio:.3e}", pivot=float(ratio))
    return sol


def _case1_affine_pair(f: Quadratic2Form, A: AffineScalar, x, x_prime, h):
    # C = A(x')/2 is affine in (u', v') once the other components of x' are
    # fixed, so Case 1 stays a linear 2x2 solve.
    i, j = f.indices
    u, v = f.uv(x)
    Ip, Iq = f.gradient(x)
    hB = 0.5 * h * A(x)
    rest = np.array(x_prime, dtype=float)
    rest[i] = rest[j] = 0.0
    c0 = 0.5 * A(rest)
    cp, cq = 0.5 * A.g[i], 0.5 * A.g[j]
    M = np.array(
        [
            [1.0 - hB * f.a2 - h * Iq * cp, -hB * f.a3 - h * Iq * cq],
            [hB * f.a1 + h * Ip * cp, 1.0 + hB * f.a2 + h * Ip * cq],
        ]
    )
    rhs = np.array([u + hB * f.a5 + h * Iq * c0, v - hB * f.a4 - h * Ip * c0])
    return _solve2(M, rhs)


class FreezeTail:
    """Tail rule that leaves every component other than ``p, q`` unchanged."""

    def __call__(self, x, x_prime, h):
        return np.array(x, dtype=float)

    def __repr__(self):
        return "FreezeTail()"


@dataclass(frozen=True)
class KahanTail:
    """Tail rule that solves the remaining rows of Kahan's equations for
    ``field`` with the new components ``form.p, form.q`` held fixed."""

    field: QuadraticVectorField
    form: Quadratic2Form

    def __call__(self, x, x_prime, h):
        v = self.field
        x = np.asarray(x, dtype=float)
        n = v.n
        pq = list(self.form.indices)
        tail = [k for k in range(n) if k not in pq]
        out = np.array(x_prime, dtype=float)
        if not tail:
            return out
        M = step_matrix(v, x, h)
        rhs = x + h * v.c + 0.5 * h * (v.b @ x)
        r = rhs[tail] - M[np.ix_(tail, pq)] @ out[pq]
        out[tail] = _solve_tail(M[np.ix_(tail, tail)], r)
        return out


def _solve_tail(M, r):
    sol, ratio = gepp_solve(M, r)
    if not ratio >= PIVOT_RTOL:
        raise SingularStep(f"tail system: relative pivot {ratio:.3e}", pivot=float(ratio))
    return sol


TailRule = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def bc_step(f: Quadratic2Form, scheme: BCScheme, tail: TailRule | None, x, h: float) -> np.ndarray:
    """One step of a B/C discretization.

    Components ``p, q`` of the result satisfy the planar B/C equations with
    ``B, C`` taken from ``scheme`` at the returned pair; all other components
    come from ``tail(x, x_prime, h)`` (default: frozen). Implicit dependencies
    on ``x'`` are resolved by fixed-point iteration.

    Raises:
        SingularStep: a 2x2 (or tail) system is singular.
        NoConvergence: the fixed-point iteration did not settle within
            100 iterations at relative tolerance 1e-14.
    """
    x = np.array(x, dtype=float)
    tail = FreezeTail() if tail is None else tail
    i, j = f.indices
    if max(i, j) >= x.shape[0]:
        raise DimensionError(f"form on variables ({f.p}, {f.q}) with a {x.shape[0]}-vector")

    affine_case1 = isinstance(scheme, Case1) and isinstance(scheme.A, AffineScalar)
    one_shot = isinstance(scheme, Case3Frozen) or (affine_case1 and isinstance(tail, FreezeTail))

    def assemble(pair, guess):
        trial = np.array(guess)
        trial[i], trial[j] = pair
        out = np.array(tail(x, trial, h), dtype=float)
        out[i], out[j] = pair
        return out

    xp = x.copy()
    defect = np.inf
    for it in range(1, FIXED_POINT_MAX_ITER + 1):
        if affine_case1:
            pair = _case1_affine_pair(f, scheme.A, x, xp, h)
        else:
            Bval, Cval = bc_coefficients(scheme, x, xp)
            pair = solve_bc_pair(f, x, Bval, Cval, h)
        new = assemble(pair, xp)
        if one_shot:
            return new
        defect = np.max(np.abs(new - xp))
        xp = new
        if defect <= FIXED_POINT_TOL * (1.0 + np.max(np.abs(xp))):
            return xp
    raise NoConvergence(
        f"B/C fixed-point iteration stalled at defect {defect:.3e}",
        iterations=FIXED_POINT_MAX_ITER,
        defect=float(defect),
    )


def check_identity(f: Quadratic2Form, x, x_prime, Bval: float, Cval: float, h: float) -> float:
    """Residual ``|LHS - RHS|`` of the ratio identity for a B/C pair.

    ``LHS = (I(x') - s) / (I(x) - s)`` and
    ``RHS = (1 + h^2 D1 C^2) / (1 + h^2 D1 B^2)`` with ``s = D2 / (2 D1)``.
    """
    s = _shift(f)
    D1 = d1(f)
    lhs = _checked_div(eval_integral(f, x_prime) - s, eval_integral(f, x) - s, "identity LHS")
    rhs = _checked_div(1.0 + h * h * D1 * Cval**2, 1.0 + h * h * D1 * Bval**2, "identity RHS")
    return float(abs(lhs - rhs))


def planar_field(
    f: Quadratic2Form,
    A: AffineScalar,
    tail_a=None,
    tail_b=None,
    tail_c=None,
) -> QuadraticVectorField:
    """Assemble a quadratic field whose ``p, q`` components are
    ``A I_q`` and ``-A I_p``.

    ``tail_*`` give the coefficients of the remaining components, as arrays
    of shape ``(n-2, n, n)``, ``(n-2, n)``, ``(n-2,)``; all default to zero.
    """
    n = A.n
    i, j = f.indices
    if max(i, j) >= n:
        raise DimensionError(f"form on variables ({f.p}, {f.q}) in dimension {n}")
    a = np.zeros((n, n, n))
    b = np.zeros((n, n))
    c = np.zeros(n)

    # the gradient components as affine functions l . x + l0
    lp = np.zeros(n)
    lp[i], lp[j] = f.a1, f.a2
    lq = np.zeros(n)
    lq[i], lq[j] = f.a2, f.a3

    a[i], b[i], c[i] = affine_product(A.g, A.g0, lq, f.a5)
    a[j], b[j], c[j] = affine_product(-A.g, -A.g0, lp, f.a4)

    rest = [k for k in range(n) if k not in (i, j)]
    if rest:
        if tail_a is not None:
            a[rest] = tail_a
        if tail_b is not None:
            b[rest] = tail_b
        if tail_c is not None:
            c[rest] = tail_c
    return QuadraticVectorField(a, b, c)


def verify_planar_structure(
    v: QuadraticVectorField,
    f: Quadratic2Form,
    A: Prefactor,
    samples: int = 64,
    seed: int = 0,
) -> float:
    """Max defect of ``f_p = A I_q``, ``f_q = -A I_p`` over random points.

    Points are drawn uniformly from ``[-1, 1]^n``.
    """
    rng = np.random.default_rng(seed)
    i, j = f.indices
    worst = 0.0
    for x in rng.uniform(-1.0, 1.0, size=(samples, v.n)):
        fx = eval_field(v, x)
        Ip, Iq = f.gradient(x)
        Ax = A(x)
        worst = max(worst, abs(fx[i] - Ax * Iq), abs(fx[j] + Ax * Ip))
    return float(worst)
