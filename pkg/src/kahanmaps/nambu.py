"""The 10-parameter Nambu family ``dx/dt = grad H x grad K`` in R^3.

``H(x, y)`` and ``K(y, z)`` are quadratics in two variables each. Kahan's map
of this field keeps modified versions of both, and a modified volume, so the
map is completely integrable. Everything here is built on top of
:mod:`kahanmaps.integrals`: ``H`` is a planar integral on ``(x, y)`` with
prefactor ``K_z``, and ``K`` one on ``(z, y)`` with prefactor ``H_x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._linalg import det3
from .errors import DivisionByZero
from .integrals import (
    AffineScalar,
    ModifiedIntegralSpec,
    Quadratic2Form,
    d1,
    d2,
    eval_integral,
    modified_integral,
    planar_field,
)
from .qvf import QuadraticVectorField, affine_product, field_jacobian, kahan_step, map_jacobian


def _coeffs5(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (5,):
        raise ValueError(f"{name} needs 5 coefficients, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} coefficients must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NambuSpec:
    """Coefficients of ``H = a1/2 x^2 + a2 xy + a3/2 y^2 + a4 x + a5 y`` and
    ``K = b1/2 y^2 + b2 yz + b3/2 z^2 + b4 y + b5 z``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _coeffs5(self.a, "a"))
        object.__setattr__(self, "b", _coeffs5(self.b, "b"))

    def __eq__(self, other):
        if not isinstance(other, NambuSpec):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes()))

    @property
    def H_form(self) -> Quadratic2Form:
        """``H`` as a form in ``(u, v) = (x, y)``."""
        return Quadratic2Form(*self.a, p=1, q=2)

    @property
    def K_form(self) -> Quadratic2Form:
        """``K`` as a form in ``(u, v) = (z, y)``.

        With this ordering ``dz/dt = H_x dK/dy`` and ``dy/dt = -H_x dK/dz``,
        so ``H_x`` is the prefactor.
        """
        b1, b2, b3, b4, b5 = self.b
        return Quadratic2Form(b3, b2, b1, b5, b4, p=3, q=2)

    @property
    def Kz(self) -> AffineScalar:
        """``dK/dz = b2 y + b3 z + b5``."""
        return AffineScalar([0.0, self.b[1], self.b[2]], self.b[4])

    @property
    def Ky(self) -> AffineScalar:
        return AffineScalar([0.0, self.b[0], self.b[1]], self.b[3])

    @property
    def Hx(self) -> AffineScalar:
        """``dH/dx = a1 x + a2 y + a4``."""
        return AffineScalar([self.a[0], self.a[1], 0.0], self.a[3])

    @property
    def Hy(self) -> AffineScalar:
        return AffineScalar([self.a[1], self.a[2], 0.0], self.a[4])

    def H(self, x):
        return eval_integral(self.H_form, x)

    def K(self, x):
        return eval_integral(self.K_form, x)

    def swapped(self) -> "NambuSpec":
        """The coefficients obtained by relabeling ``(x, y, z) -> (z, y, x)``.

        ``H`` and ``K`` trade places; use with :func:`relabel`.
        """
        a1, a2, a3, a4, a5 = self.a
        b1, b2, b3, b4, b5 = self.b
        return NambuSpec([b3, b2, b1, b5, b4], [a3, a2, a1, a5, a4])


def relabel(x):
    """``(x, y, z) -> (z, y, x)``."""
    return np.asarray(x, dtype=float)[..., ::-1]


def build_nambu_field(s: NambuSpec) -> QuadraticVectorField:
    """``grad H x grad K = (K_z H_y, -K_z H_x, H_x K_y)`` as a quadratic field."""
    Kz, Hx, Ky = s.Kz, s.Hx, s.Ky
    tail = affine_product(Hx.g, Hx.g0, Ky.g, Ky.g0)
    return planar_field(
        s.H_form,
        Kz,
        tail_a=tail[0][None],
        tail_b=tail[1][None],
        tail_c=np.array([tail[2]]),
    )


def modified_H(s: NambuSpec, x, h: float):
    """``(H + h^2 D2(a) K_z^2 / 8) / (1 + h^2 D1(a) K_z^2 / 4)``."""
    return modified_integral(ModifiedIntegralSpec(s.H_form, s.Kz, h), x)


def modified_K(s: NambuSpec, x, h: float):
    """``(K + h^2 D2(b) H_x^2 / 8) / (1 + h^2 D1(b) H_x^2 / 4)``."""
    return modified_integral(ModifiedIntegralSpec(s.K_form, s.Hx, h), x)


def alternative_H(s: NambuSpec, x, h: float):
    """Shifted integral ``(H - D2/(2 D1)) / (1 + h^2 D1 K_z^2 / 4)``; needs ``D1(a) != 0``."""
    return modified_integral(ModifiedIntegralSpec(s.H_form, s.Kz, h, flavor="tilde"), x)


def alternative_K(s: NambuSpec, x, h: float):
    return modified_integral(ModifiedIntegralSpec(s.K_form, s.Hx, h, flavor="tilde"), x)


@dataclass(frozen=True)
class DensitySpec:
    """A candidate preserved density.

    ``kind="timestep"`` is ``1 / ((1 + h^2 D1(a) K_z^2/4)(1 + h^2 D1(b) H_x^2/4))``.
    ``kind="flow"`` is ``1 / ((H - D2(a)/(2 D1(a)))(K - D2(b)/(2 D1(b))))``,
    which does not involve ``h`` and is preserved by the flow as well.
    """

    spec: NambuSpec
    kind: Literal["timestep", "flow"] = "timestep"
    h: float = 0.0

    def __post_init__(self):
        if self.kind not in ("timestep", "flow"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "flow" and (d1(self.spec.H_form) == 0.0 or d1(self.spec.K_form) == 0.0):
            raise DivisionByZero("flow density needs D1(a) != 0 and D1(b) != 0")

    def __call__(self, x):
        return density(self, x)


def _flow_factors(s: NambuSpec, x):
    Hf, Kf = s.H_form, s.K_form
    P = eval_integral(Hf, x) - 0.5 * d2(Hf) / d1(Hf)
    Q = eval_integral(Kf, x) - 0.5 * d2(Kf) / d1(Kf)
    return P, Q


def _timestep_factors(s: NambuSpec, x, h):
    kz = s.Kz(x)
    hx = s.Hx(x)
    return (
        1.0 + 0.25 * h * h * d1(s.H_form) * kz * kz,
        1.0 + 0.25 * h * h * d1(s.K_form) * hx * hx,
    )


def density(d: DensitySpec, x):
    if d.kind == "timestep":
        P, Q = _timestep_factors(d.spec, x, d.h)
    else:
        P, Q = _flow_factors(d.spec, x)
    prod = P * Q
    if np.any(prod == 0.0):
        raise DivisionByZero(f"{d.kind} density is singular at the point")
    return 1.0 / prod


def check_measure(s: NambuSpec, d: DensitySpec, x, h: float) -> float:
    """Relative defect ``|g(x) - g(x') det(dx'/dx)| / |g(x)|`` of one Kahan step."""
    v = build_nambu_field(s)
    x = np.asarray(x, dtype=float)
    xp, _ = kahan_step(v, x, h)
    J = det3(map_jacobian(v, x, h, x_prime=xp))
    gx = density(d, x)
    return float(abs(gx - density(d, xp) * J) / max(abs(gx), 1e-300))


# -- closed-form gradients ---------------------------------------------------


def _form_grad3(f: Quadratic2Form, x):
    gu, gv = f.gradient(x)
    out = np.zeros(3)
    i, j = f.indices
    out[i], out[j] = gu, gv
    return out


def _ratio_grad(s_form, A: AffineScalar, x, h):
    # grad of (I + c2 A^2) / (1 + c1 A^2)
    Ax = A(x)
    c1 = 0.25 * h * h * d1(s_form)
    c2 = 0.125 * h * h * d2(s_form)
    num = eval_integral(s_form, x) + c2 * Ax * Ax
    den = 1.0 + c1 * Ax * Ax
    dnum = _form_grad3(s_form, x) + 2.0 * c2 * Ax * A.g
    dden = 2.0 * c1 * Ax * A.g
    return (dnum - (num / den) * dden) / den


def grad_modified_H(s: NambuSpec, x, h: float) -> np.ndarray:
    return _ratio_grad(s.H_form, s.Kz, np.asarray(x, dtype=float), h)


def grad_modified_K(s: NambuSpec, x, h: float) -> np.ndarray:
    return _ratio_grad(s.K_form, s.Hx, np.asarray(x, dtype=float), h)


def grad_density(d: DensitySpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = d.spec
    g = density(d, x)
    if d.kind == "flow":
        P, Q = _flow_factors(s, x)
        return -g * (_form_grad3(s.H_form, x) / P + _form_grad3(s.K_form, x) / Q)
    P, Q = _timestep_factors(s, x, d.h)
    kz, hx = s.Kz(x), s.Hx(x)
    dP = 0.5 * d.h**2 * d1(s.H_form) * kz * s.Kz.g
    dQ = 0.5 * d.h**2 * d1(s.K_form) * hx * s.Hx.g
    return -g * (dP / P + dQ / Q)


def flow_density_check(s: NambuSpec, x, d: DensitySpec | None = None) -> float:
    """Relative size of ``div(g f)`` at ``x`` for the continuous Nambu field.

    ``div(g f) = f . grad g + g div f`` is assembled from closed-form pieces
    and divided by the sum of the magnitudes of its terms, so the result is
    a relative residual (0 when every term vanishes). ``d`` defaults to the
    flow density.
    """
    x = np.asarray(x, dtype=float)
    d = DensitySpec(s, "flow") if d is None else d
    v = build_nambu_field(s)
    f = v(x)
    g = density(d, x)
    dg = grad_density(d, x)
    J = field_jacobian(v, x)
    terms = np.concatenate([f * dg, g * np.diag(J)])
    total = terms.sum()
    scale = np.abs(terms).sum()
    return float(abs(total) / scale) if scale > 0 else 0.0
