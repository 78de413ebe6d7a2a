"""Catalog of worked examples with their known modified invariants.

Each constructor returns a :class:`SystemSpec` whose ``conserved=True``
invariants must be constant along Kahan orbits at any step size ``h``;
``conserved=False`` entries are the continuous integrals, kept as negative
controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrals import (
    AffineScalar,
    _checked_div,
    ModifiedIntegralSpec,
    Quadratic2Form,
    modified_integral,
    planar_field,
)
from .nambu import NambuSpec, build_nambu_field, modified_H, modified_K
from .qvf import AffineMap, QuadraticVectorField


@dataclass(frozen=True)
class Invariant:
    label: str
    evaluate: Callable[[np.ndarray, float], float]
    conserved: bool

    def __call__(self, x, h):
        return self.evaluate(np.asarray(x, dtype=float), h)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A vector field bundled with its invariants.

    ``planar`` holds the ``(Quadratic2Form, AffineScalar)`` decomposition
    used by the B/C schemes, when the system has one; ``nambu`` is set for
    members of the Nambu family, which also carry a preserved measure.
    """

    name: str
    field: QuadraticVectorField
    invariants: tuple[Invariant, ...]
    params: dict = field(default_factory=dict)
    x0: np.ndarray | None = None
    planar: tuple[Quadratic2Form, AffineScalar] | None = None
    nambu: NambuSpec | None = None

    def invariant(self, label: str) -> Invariant:
        for inv in self.invariants:
            if inv.label == label:
                return inv
        raise KeyError(label)


def _arr(*xs):
    return np.array(xs, dtype=float)


def suslov(alpha: float = 1.0) -> SystemSpec:
    """``dx1/dt = 2 alpha x1 x2``, ``dx2/dt = -2 x1^2``."""
    alpha = float(alpha)
    a = np.zeros((2, 2, 2))
    a[0, 0, 1] = a[0, 1, 0] = alpha
    a[1, 0, 0] = -2.0
    v = QuadraticVectorField(a, np.zeros((2, 2)), np.zeros(2))

    def I(x, h):
        return 0.5 * x[0] ** 2 + 0.5 * alpha * x[1] ** 2

    def I_tilde(x, h):
        return _checked_div(I(x, h), 1.0 + h * h * alpha * x[0] ** 2, "I_tilde")

    return SystemSpec(
        "suslov",
        v,
        (Invariant("I", I, alpha == 0.0), Invariant("I_tilde", I_tilde, True)),
        {"alpha": alpha},
        _arr(1.0, 1.0),
        planar=(Quadratic2Form(1.0, 0.0, alpha, 0.0, 0.0), AffineScalar([2.0, 0.0])),
    )


def zhukovsky_volterra(alpha: float = 1.0, beta1: float = 1.0, beta2: float = 1.0) -> SystemSpec:
    """Zhukovsky-Volterra gyrostat with ``beta3 = 0``."""
    alpha, beta1, beta2 = float(alpha), float(beta1), float(beta2)
    a = np.zeros((3, 3, 3))
    b = np.zeros((3, 3))
    a[0, 1, 2] = a[0, 2, 1] = 0.5 * alpha
    b[0, 2] = -beta2
    b[1, 2] = beta1
    a[2, 0, 1] = a[2, 1, 0] = -0.5 * alpha
    b[2, 1] = -beta1
    b[2, 0] = beta2
    v = QuadraticVectorField(a, b, np.zeros(3))

    def I(x, h):
        return 0.5 * alpha * x[1] ** 2 - beta1 * x[0] - beta2 * x[1]

    def I_tilde(x, h):
        return I(x, h) - 0.125 * h * h * alpha * beta1**2 * x[2] ** 2

    return SystemSpec(
        "zhukovsky_volterra",
        v,
        (Invariant("I", I, beta1 == 0.0 or alpha == 0.0), Invariant("I_tilde", I_tilde, True)),
        {"alpha": alpha, "beta1": beta1, "beta2": beta2},
        _arr(0.7, 1.2, 0.9),
        planar=(Quadratic2Form(0.0, 0.0, alpha, -beta1, -beta2), AffineScalar([0.0, 0.0, 1.0])),
    )


def superintegrability_holds(alpha, tol: float = 1e-12) -> bool:
    """``alpha1 alpha2 == alpha5 alpha6`` up to ``tol``."""
    a = np.asarray(alpha, dtype=float)
    return bool(abs(a[0] * a[1] - a[4] * a[5]) <= tol)


def coupled_tops(alpha=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)) -> SystemSpec:
    """Two Euler tops coupled through ``x3``.

    The second planar integral is ``alpha5/2 x5^2 - alpha6/2 x4^2``; it is a
    function of ``(x4, x5)`` because those are the variables it generates.
    """
    al = np.asarray(alpha, dtype=float)
    if al.shape != (6,):
        raise ValueError("coupled tops take 6 parameters")
    a1, a2, a3, a4, a5, a6 = al
    a = np.zeros((5, 5, 5))

    def put(i, j, k, val):
        a[i, j, k] += 0.5 * val
        a[i, k, j] += 0.5 * val

    put(0, 1, 2, a1)
    put(1, 2, 0, a2)
    put(2, 0, 1, a3)
    put(2, 3, 4, a4)
    put(3, 4, 2, a5)
    put(4, 2, 3, a6)
    v = QuadraticVectorField(a, np.zeros((5, 5)), np.zeros(5))

    def I1(x, h):
        return 0.5 * a1 * x[1] ** 2 - 0.5 * a2 * x[0] ** 2

    def I2(x, h):
        return 0.5 * a5 * x[4] ** 2 - 0.5 * a6 * x[3] ** 2

    def I3(x, h):
        return 0.5 * (a1 * x[1] + a5 * x[4]) ** 2 - 0.5 * a1 * a2 * (x[0] + x[3]) ** 2

    def I1_tilde(x, h):
        return _checked_div(I1(x, h), 1.0 - 0.25 * h * h * a1 * a2 * x[2] ** 2, "I1_tilde")

    def I2_tilde(x, h):
        return _checked_div(I2(x, h), 1.0 - 0.25 * h * h * a5 * a6 * x[2] ** 2, "I2_tilde")

    def I3_tilde(x, h):
        return _checked_div(I3(x, h), 1.0 - 0.25 * h * h * a1 * a2 * x[2] ** 2, "I3_tilde")

    superint = superintegrability_holds(al)
    return SystemSpec(
        "coupled_tops",
        v,
        (
            Invariant("I1", I1, False),
            Invariant("I2", I2, False),
            Invariant("I1_tilde", I1_tilde, True),
            Invariant("I2_tilde", I2_tilde, True),
            Invariant("I3_tilde", I3_tilde, superint),
        ),
        {f"alpha{k + 1}": float(al[k]) for k in range(6)},
        _arr(0.8, 1.1, 0.6, 1.3, 0.9),
        planar=(Quadratic2Form(-a2, 0.0, a1, 0.0, 0.0, p=1, q=2), AffineScalar([0, 0, 1.0, 0, 0])),
    )


def coupled_tops_xy_map(alpha) -> AffineMap:
    """``(x1..x5) -> (x1 + x4, alpha1 x2 + alpha5 x5, x3, x4, x5)``.

    Invertible whenever ``alpha1 != 0``. In the new coordinates the first
    two components carry the planar integral ``Y^2/2 - alpha1 alpha2 X^2/2``
    under the super-integrability condition.
    """
    al = np.asarray(alpha, dtype=float)
    T = np.eye(5)
    T[0, 3] = 1.0
    T[1, 1] = al[0]
    T[1, 4] = al[4]
    return AffineMap(T, np.zeros(5))


def coupled_tops_I3_form(alpha) -> tuple[Quadratic2Form, AffineScalar]:
    """``I3(X, Y)`` and its prefactor ``x3`` in the coordinates of :func:`coupled_tops_xy_map`."""
    al = np.asarray(alpha, dtype=float)
    return Quadratic2Form(-al[0] * al[1], 0.0, 1.0, 0.0, 0.0), AffineScalar([0, 0, 1.0, 0, 0])


def nambu_system(spec: NambuSpec, name: str = "nambu", x0=None) -> SystemSpec:
    return SystemSpec(
        name,
        build_nambu_field(spec),
        (
            Invariant("H_tilde", lambda x, h: modified_H(spec, x, h), True),
            Invariant("K_tilde", lambda x, h: modified_K(spec, x, h), True),
        ),
        {"a": spec.a.tolist(), "b": spec.b.tolist()},
        None if x0 is None else np.asarray(x0, dtype=float),
        planar=(spec.H_form, spec.Kz),
        nambu=spec,
    )


def euler_top() -> SystemSpec:
    """``H = (x^2 - y^2)/2``, ``K = (y^2 - z^2)/2``; the field is ``(yz, xz, xy)``."""
    return nambu_system(
        NambuSpec([1.0, 0.0, -1.0, 0.0, 0.0], [1.0, 0.0, -1.0, 0.0, 0.0]),
        name="euler_top",
        x0=_arr(0.9, 1.1, 0.7),
    )


def random_nambu(seed: int, coeff_bound: float = 2.0) -> SystemSpec:
    """Nambu system with coefficients uniform in ``[-coeff_bound, coeff_bound]``.

    The initial point is uniform in ``[-1, 1]^3``; both come from ``seed``.
    """
    if coeff_bound < 0:
        raise ValueError("coeff_bound must be nonnegative")
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-coeff_bound, coeff_bound, 10)
    x0 = rng.uniform(-1.0, 1.0, 3)
    sys_ = nambu_system(NambuSpec(coeffs[:5], coeffs[5:]), name="random_nambu", x0=x0)
    sys_.params.update(seed=int(seed), coeff_bound=float(coeff_bound))
    return sys_


def _skew(m):
    return m - np.swapaxes(m, -1, -2)


def random_planar_system(rng: np.random.Generator, n: int, coeff_bound: float = 2.0) -> SystemSpec:
    """Random field whose components ``p, q`` are ``A I_q`` and ``-A I_p``.

    The form, ``A`` and the index pair are random. The other components follow
    ``dx_T/dt = Omega(x) x_T`` with ``Omega`` skew-symmetric and affine in
    ``x``, so the flow keeps ``|x_T|`` fixed and orbits stay bounded, yet the
    tail still feeds back into ``A``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    p, q = (int(k) + 1 for k in rng.choice(n, 2, replace=False))
    form = Quadratic2Form(*rng.uniform(-coeff_bound, coeff_bound, 5), p=p, q=q)
    A = AffineScalar(rng.uniform(-coeff_bound, coeff_bound, n), rng.uniform(-coeff_bound, coeff_bound))
    rest = [k for k in range(n) if k not in (p - 1, q - 1)]
    m = len(rest)
    half = 0.5 * coeff_bound
    omega0 = _skew(rng.uniform(-half, half, (m, m)))
    omegak = _skew(rng.uniform(-half, half, (n, m, m)))
    ta = np.zeros((m, n, n))
    tb = np.zeros((m, n))
    for r in range(m):
        for s, col in enumerate(rest):
            tb[r, col] = omega0[r, s]
            ta[r, :, col] += omegak[:, r, s]
    v = planar_field(form, A, ta, tb, np.zeros(m))

    def I_hat(x, h):
        return modified_integral(ModifiedIntegralSpec(form, A, h), x)

    return SystemSpec(
        "random_planar",
        v,
        (Invariant("I", lambda x, h: form(x), False), Invariant("I_hat", I_hat, True)),
        {"n": n},
        rng.uniform(-1.0, 1.0, n),
        planar=(form, A),
    )


CATALOG: dict[str, Callable[..., SystemSpec]] = {
    "suslov": suslov,
    "zhukovsky_volterra": zhukovsky_volterra,
    "coupled_tops": coupled_tops,
    "euler_top": euler_top,
    "random_nambu": random_nambu,
}


def from_catalog(name: str, **params) -> SystemSpec:
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(sorted(CATALOG))}") from None
    if name == "coupled_tops" and "alpha" not in params and params:
        params = {"alpha": [params.pop(f"alpha{k}") for k in range(1, 7)], **params}
    return ctor(**params)
