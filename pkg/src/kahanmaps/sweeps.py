"""Vectorized verification sweeps over many random systems.

Each sweep draws random instances, iterates all of them together with the
batched Kahan kernels, and keeps the ones whose orbit is *admissible*:

* every step is nonsingular,
* every modified-integral denominator stays >= ``MIN_DENOMINATOR`` (``h`` is
  redrawn while this fails at the initial point),
* the orbit stays inside ``|x|_inf <= CONFINEMENT``.

The last two conditions keep the orbits away from the singular set of the
map and from regions where the rounding error of a single evaluation is
already comparable to the tolerance. Rejections are counted by reason.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._linalg import det3
from .nambu import NambuSpec, build_nambu_field
from .qvf import batch_kahan_step, batch_map_jacobian
from .systems import random_planar_system

MIN_DENOMINATOR = 0.1
CONFINEMENT = 10.0
#: h is redrawn up to this many times while a denominator at x0 is too small.
H_RESAMPLES = 20


@dataclass
class SweepResult:
    """Outcome of a sweep.

    ``metrics`` maps a metric name to its per-instance values over the
    admissible instances (in draw order); ``params`` holds the matching
    instance data (``h``, dimension, seeds) for reproduction.
    """

    drawn: int = 0
    rejected: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def admissible(self) -> int:
        return len(next(iter(self.metrics.values()))) if self.metrics else 0

    def worst(self, key: str) -> float:
        vals = self.metrics[key]
        return float(np.max(vals)) if len(vals) else 0.0

    def failures(self, key: str, tol: float) -> int:
        return int(np.sum(~(self.metrics[key] <= tol)))

    def merge(self, other: "SweepResult") -> "SweepResult":
        out = SweepResult(self.drawn + other.drawn, dict(self.rejected))
        for k, v in other.rejected.items():
            out.rejected[k] = out.rejected.get(k, 0) + v
        for name in ("metrics", "params"):
            mine, theirs, merged = getattr(self, name), getattr(other, name), getattr(out, name)
            for k in mine.keys() | theirs.keys():
                parts = [d[k] for d in (mine, theirs) if k in d]
                merged[k] = np.concatenate(parts) if len(parts) > 1 else parts[0]
        return out

    def truncate(self, count: int) -> "SweepResult":
        return SweepResult(
            self.drawn,
            dict(self.rejected),
            {k: v[:count] for k, v in self.metrics.items()},
            {k: v[:count] for k, v in self.params.items()},
        )


def _count_rejections(result, ok, den_ok, box_ok):
    result.rejected["singular"] = result.rejected.get("singular", 0) + int(np.sum(~ok))
    result.rejected["denominator"] = result.rejected.get("denominator", 0) + int(np.sum(ok & ~den_ok))
    result.rejected["confinement"] = result.rejected.get("confinement", 0) + int(
        np.sum(ok & den_ok & ~box_ok)
    )


# -- planar integrals (single quadratic integral, dimensions 2..6) -----------


def _planar_batch(rng, n, size, coeff_bound, h_max):
    systems = [random_planar_system(rng, n, coeff_bound) for _ in range(size)]
    a = np.stack([s.field.a for s in systems])
    b = np.stack([s.field.b for s in systems])
    c = np.stack([s.field.c for s in systems])
    forms = [s.planar[0] for s in systems]
    F = np.stack([f.coeffs for f in forms])
    P = np.array([f.indices[0] for f in forms])
    Q = np.array([f.indices[1] for f in forms])
    G = np.stack([s.planar[1].g for s in systems])
    G0 = np.array([s.planar[1].g0 for s in systems])
    X0 = np.stack([s.x0 for s in systems])
    h = h_max * (1.0 - rng.random(size))  # uniform in (0, h_max]
    return a, b, c, F, P, Q, G, G0, X0, h


def _planar_hat(F, P, Q, G, G0, D1, D2, X, h):
    idx = np.arange(X.shape[0])
    u, w = X[idx, P], X[idx, Q]
    I = 0.5 * F[:, 0] * u * u + F[:, 1] * u * w + 0.5 * F[:, 2] * w * w + F[:, 3] * u + F[:, 4] * w
    Ax = np.einsum("ni,ni->n", G, X) + G0
    den = 1.0 + 0.25 * h * h * D1 * Ax * Ax
    with np.errstate(divide="ignore", invalid="ignore"):
        return (I + 0.125 * h * h * D2 * Ax * Ax) / den, den


def planar_sweep(
    count: int,
    seed: int = 0,
    steps: int = 1000,
    dims=(2, 3, 4, 5, 6),
    coeff_bound: float = 2.0,
    h_max: float = 0.3,
    batch: int = 256,
) -> SweepResult:
    """Conservation of the hat-form modified integral on random planar systems.

    Draws until ``count`` admissible instances are collected, split evenly
    across ``dims``. Metric ``rel_drift`` is
    ``max_m |I_hat(x_m) - I_hat(x_0)| / (1 + |I_hat(x_0)|)``.
    """
    rng = np.random.default_rng(seed)
    total = SweepResult()
    per_dim = [count // len(dims) + (k < count % len(dims)) for k in range(len(dims))]
    for n, want in zip(dims, per_dim):
        got = SweepResult()
        while got.admissible < want:
            a, b, c, F, P, Q, G, G0, X, h = _planar_batch(rng, n, batch, coeff_bound, h_max)
            D1 = F[:, 0] * F[:, 2] - F[:, 1] ** 2
            D2 = 2 * F[:, 1] * F[:, 3] * F[:, 4] - F[:, 2] * F[:, 3] ** 2 - F[:, 0] * F[:, 4] ** 2
            I0, den = _planar_hat(F, P, Q, G, G0, D1, D2, X, h)
            for _ in range(H_RESAMPLES):
                low = ~(den >= MIN_DENOMINATOR)
                if not low.any():
                    break
                h[low] = h_max * (1.0 - rng.random(int(low.sum())))
                I0, den = _planar_hat(F, P, Q, G, G0, D1, D2, X, h)
            ok = np.ones(batch, bool)
            den_min = den.copy()
            xmax = np.max(np.abs(X), axis=1)
            drift = np.zeros(batch)
            for _ in range(steps):
                X, good = batch_kahan_step(a, b, c, X, h)
                ok &= good & np.all(np.isfinite(X), axis=1)
                X = np.where(ok[:, None], X, 0.0)
                I, den = _planar_hat(F, P, Q, G, G0, D1, D2, X, h)
                den_min = np.minimum(den_min, den)
                xmax = np.maximum(xmax, np.max(np.abs(X), axis=1))
                drift = np.maximum(drift, np.abs(I - I0))
            den_ok = den_min >= MIN_DENOMINATOR
            box_ok = xmax <= CONFINEMENT
            keep = ok & den_ok & box_ok
            part = SweepResult(batch)
            _count_rejections(part, ok, den_ok, box_ok)
            part.metrics["rel_drift"] = (drift / (1.0 + np.abs(I0)))[keep]
            part.params["h"] = h[keep]
            part.params["n"] = np.full(int(keep.sum()), float(n))
            got = got.merge(part)
        total = total.merge(got.truncate(want))
    return total


# -- the Nambu family ---------------------------------------------------------


def _nambu_arrays(specs):
    fields = [build_nambu_field(s) for s in specs]
    return (
        np.stack([v.a for v in fields]),
        np.stack([v.b for v in fields]),
        np.stack([v.c for v in fields]),
    )


class _NambuBatch:
    """Batched evaluators for Nambu invariants and densities."""

    def __init__(self, A, B, h):
        self.A, self.B, self.h = A, B, h
        self.D1a = A[:, 0] * A[:, 2] - A[:, 1] ** 2
        self.D2a = 2 * A[:, 1] * A[:, 3] * A[:, 4] - A[:, 2] * A[:, 3] ** 2 - A[:, 0] * A[:, 4] ** 2
        self.D1b = B[:, 0] * B[:, 2] - B[:, 1] ** 2
        self.D2b = 2 * B[:, 1] * B[:, 3] * B[:, 4] - B[:, 2] * B[:, 3] ** 2 - B[:, 0] * B[:, 4] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            self.sa = 0.5 * self.D2a / self.D1a
            self.sb = 0.5 * self.D2b / self.D1b

    def __call__(self, X):
        A, B, h = self.A, self.B, self.h
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        H = 0.5 * A[:, 0] * x * x + A[:, 1] * x * y + 0.5 * A[:, 2] * y * y + A[:, 3] * x + A[:, 4] * y
        K = 0.5 * B[:, 0] * y * y + B[:, 1] * y * z + 0.5 * B[:, 2] * z * z + B[:, 3] * y + B[:, 4] * z
        kz = B[:, 1] * y + B[:, 2] * z + B[:, 4]
        hx = A[:, 0] * x + A[:, 1] * y + A[:, 3]
        da = 1.0 + 0.25 * h * h * self.D1a * kz * kz
        db = 1.0 + 0.25 * h * h * self.D1b * hx * hx
        with np.errstate(divide="ignore", invalid="ignore"):
            Ht = (H + 0.125 * h * h * self.D2a * kz * kz) / da
            Kt = (K + 0.125 * h * h * self.D2b * hx * hx) / db
            g_step = 1.0 / (da * db)
            g_flow = 1.0 / ((H - self.sa) * (K - self.sb))
        return Ht, Kt, g_step, g_flow, np.minimum(da, db)


def _nambu_chunk(args):
    seed, size, steps, coeff_bound, h_max = args
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-coeff_bound, coeff_bound, (size, 10))
    X = rng.uniform(-1.0, 1.0, (size, 3))
    h = h_max * (1.0 - rng.random(size))
    specs = [NambuSpec(row[:5], row[5:]) for row in coeffs]
    a, b, c = _nambu_arrays(specs)
    ev = _NambuBatch(coeffs[:, :5], coeffs[:, 5:], h)
    H0, K0, g, gf, den_min = ev(X)
    for _ in range(H_RESAMPLES):
        low = ~(den_min >= MIN_DENOMINATOR)
        if not low.any():
            break
        h[low] = h_max * (1.0 - rng.random(int(low.sum())))
        ev = _NambuBatch(coeffs[:, :5], coeffs[:, 5:], h)
        H0, K0, g, gf, den_min = ev(X)
    X0 = X.copy()
    ok = np.ones(size, bool)
    xmax = np.max(np.abs(X), axis=1)
    dH = np.zeros(size)
    dK = np.zeros(size)
    meas = np.zeros(size)
    flow = np.zeros(size)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(steps):
            Xp, good = batch_kahan_step(a, b, c, X, h)
            J, good_j = batch_map_jacobian(a, b, X, Xp, h)
            ok &= good & good_j & np.all(np.isfinite(Xp), axis=1)
            Xp = np.where(ok[:, None], Xp, 0.0)
            det = det3(J)
            Ht, Kt, gp, gfp, den = ev(Xp)
            meas = np.maximum(meas, np.abs(g - gp * det) / np.abs(g))
            flow = np.maximum(flow, np.abs(gf - gfp * det) / np.abs(gf))
            dH = np.maximum(dH, np.abs(Ht - H0))
            dK = np.maximum(dK, np.abs(Kt - K0))
            den_min = np.minimum(den_min, den)
            xmax = np.maximum(xmax, np.max(np.abs(Xp), axis=1))
            X, g, gf = Xp, gp, gfp
    den_ok = den_min >= MIN_DENOMINATOR
    box_ok = xmax <= CONFINEMENT
    keep = ok & den_ok & box_ok
    flow_defined = (ev.D1a != 0) & (ev.D1b != 0) & np.isfinite(flow)
    part = SweepResult(size)
    _count_rejections(part, ok, den_ok, box_ok)
    part.metrics["H_rel_drift"] = (dH / (1.0 + np.abs(H0)))[keep]
    part.metrics["K_rel_drift"] = (dK / (1.0 + np.abs(K0)))[keep]
    part.metrics["measure_residual"] = meas[keep]
    part.metrics["flow_measure_residual"] = np.where(flow_defined, flow, np.nan)[keep]
    part.params["h"] = h[keep]
    part.params["coeffs"] = coeffs[keep]
    part.params["x0"] = X0[keep]
    return part


def nambu_sweep(
    count: int,
    seed: int = 0,
    steps: int = 1000,
    coeff_bound: float = 2.0,
    h_max: float = 0.2,
    batch: int = 2048,
    jobs: int = 1,
) -> SweepResult:
    """Modified integrals and both preserved densities on random Nambu systems.

    Metrics: ``H_rel_drift``, ``K_rel_drift`` (drift over ``1 + |initial|``),
    ``measure_residual`` (h-dependent density, max over steps) and
    ``flow_measure_residual`` (h-free density; NaN where undefined).
    ``params`` carries ``h``, ``coeffs`` (rows ``a1..a5, b1..b5``) and ``x0``.
    Chunk ``k`` is seeded by ``(seed, k)``, so results do not depend on ``jobs``.
    """
    result = SweepResult()
    chunk = 0
    while result.admissible < count:
        # expected admissible fraction is about one third
        want = count - result.admissible
        n_chunks = max(1, math.ceil(3 * want / batch))
        args = [
            (np.random.SeedSequence([seed, chunk + k]), batch, steps, coeff_bound, h_max)
            for k in range(n_chunks)
        ]
        chunk += n_chunks
        if jobs > 1 and n_chunks > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_nambu_chunk, args))
        else:
            parts = [_nambu_chunk(a) for a in args]
        for part in parts:
            result = result.merge(part)
    return result.truncate(count)
