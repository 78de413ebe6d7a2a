"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line; the lines are
printed in the terminal summary of the pytest run.
"""

import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from kahanmaps.errors import DivisionByZero, NoConvergence, SingularStep
from kahanmaps.harness import RunConfig, build_system, conservation_report, order_estimate, run_trajectory
from kahanmaps.integrals import (
    AffineScalar,
    Case1,
    Case2,
    Case3Frozen,
    Case3Midpoint,
    FreezeTail,
    KahanTail,
    ModifiedIntegralSpec,
    Quadratic2Form,
    bc_coefficients,
    bc_step,
    case2_modified_integral,
    check_identity,
    d1,
    d2,
    modified_integral,
    solve_bc_pair,
)
from kahanmaps.nambu import NambuSpec, flow_density_check
from kahanmaps.qvf import AffineMap, affine_conjugate, kahan_inverse_step, kahan_step, map_jacobian
from kahanmaps.sweeps import CONFINEMENT, MIN_DENOMINATOR, nambu_sweep, planar_sweep
from kahanmaps.systems import coupled_tops, random_planar_system, suslov, zhukovsky_volterra

from conftest import fd_jacobian, random_field

pytestmark = pytest.mark.acceptance

GOLDEN = yaml.safe_load((Path(__file__).parent / "fixtures" / "golden_runs.yaml").read_text())


def record(log, number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
    log.append(line)
    print(line)
    assert ok, line


def test_criterion_1_planar_integral_suite(acceptance_log):
    start = time.perf_counter()
    res = planar_sweep(1000, seed=1, steps=1000)
    elapsed = time.perf_counter() - start
    worst = res.worst("rel_drift")
    ok = res.admissible >= 1000 and res.failures("rel_drift", 1e-10) == 0 and elapsed < 60
    record(
        acceptance_log,
        1,
        "hat integral along Kahan orbits, dims 2-6",
        ok,
        f"{res.admissible} fields, worst rel drift {worst:.2e} <= 1e-10, {elapsed:.1f}s < 60s, "
        f"rejected {res.rejected}",
    )


IDENTITY_MIN_DENOMINATOR = 0.1


def test_criterion_2_identity_suite(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    checked = skipped = 0
    worst = 0.0
    while checked < 10_000:
        n = int(rng.integers(2, 7))
        p, q = (int(k) + 1 for k in rng.choice(n, 2, replace=False))
        f = Quadratic2Form(*rng.uniform(-2, 2, 5), p=p, q=q)
        x = rng.uniform(-1, 1, n)
        B, C = rng.uniform(-2, 2, 2)
        h = 0.3 * (1 - rng.random())
        D1 = d1(f)
        dens = (1 + h * h * D1 * B * B, 1 + h * h * D1 * C * C, f(x) - d2(f) / (2 * D1))
        if min(abs(v) for v in dens) < IDENTITY_MIN_DENOMINATOR:
            skipped += 1  # ill-conditioned ratio, see the helper in test_integrals
            continue
        try:
            pair = solve_bc_pair(f, x, B, C, h)
        except SingularStep:
            skipped += 1
            continue
        xp = rng.uniform(-5, 5, n)  # arbitrary tail components
        xp[p - 1], xp[q - 1] = pair
        worst = max(worst, check_identity(f, x, xp, B, C, h))
        checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    record(
        acceptance_log,
        2,
        "ratio identity with random B, C, h and tails",
        ok,
        f"{checked} instances ({skipped} ill-conditioned draws skipped), worst {worst:.2e} <= 1e-12, "
        f"{elapsed:.1f}s < 10s",
    )


def _case_suite(scheme_cls, conserved, rng, want=1000):
    worst = 0.0
    checked = skipped = 0
    while checked < want:
        n = int(rng.integers(2, 7))
        spec = random_planar_system(rng, n)
        f, A = spec.planar
        x = spec.x0
        h = 0.3 * (1 - rng.random())
        tail = KahanTail(spec.field, f) if checked % 2 else FreezeTail()
        try:
            xp = bc_step(f, scheme_cls(A), tail, x, h)
            # the sweeps' admissibility rules, applied to the B, C actually used:
            # this removes far-branch solutions of the implicit cases
            B, C = bc_coefficients(scheme_cls(A), x, xp)
            dens = (1 + h * h * d1(f) * B * B, 1 + h * h * d1(f) * C * C)
            if min(dens) < MIN_DENOMINATOR or np.max(np.abs(xp)) > CONFINEMENT:
                raise DivisionByZero("inadmissible step")
            v0, v1 = conserved(f, A, h, x), conserved(f, A, h, xp)
        except (SingularStep, NoConvergence, DivisionByZero):
            skipped += 1
            continue
        worst = max(worst, abs(v1 - v0) / (1 + abs(v0)))
        checked += 1
    return worst, checked, skipped


def test_criterion_3_case_suite(acceptance_log):
    rng = np.random.default_rng(3)
    cases = {
        "Case1/I_hat": (Case1, lambda f, A, h, x: modified_integral(ModifiedIntegralSpec(f, A, h), x)),
        "Case1/I_tilde": (Case1, lambda f, A, h, x: modified_integral(ModifiedIntegralSpec(f, A, h, "tilde"), x)),
        "Case2/I_hat2": (Case2, case2_modified_integral),
        "Case3Midpoint/I": (Case3Midpoint, lambda f, A, h, x: f(x)),
        "Case3Frozen/I": (Case3Frozen, lambda f, A, h, x: f(x)),
    }
    parts = []
    ok = True
    for name, (cls, conserved) in cases.items():
        worst, checked, skipped = _case_suite(cls, conserved, rng)
        ok &= worst <= 1e-12 and checked >= 1000
        parts.append(f"{name} {worst:.1e} ({checked}, {skipped} skipped)")
    record(acceptance_log, 3, "B/C cases conserve their integrals per step", ok, "; ".join(parts))


def test_criterion_4_nambu_family_suite(acceptance_log):
    start = time.perf_counter()
    res = nambu_sweep(10_000, seed=4, steps=1000)
    flow = res.metrics["flow_measure_residual"]
    defined = np.isfinite(flow)
    # continuous-flow density check at every admissible initial point
    flow_check = []
    for coeffs, x0 in zip(res.params["coeffs"], res.params["x0"]):
        s = NambuSpec(coeffs[:5], coeffs[5:])
        try:
            flow_check.append(flow_density_check(s, x0))
        except DivisionByZero:
            continue
    flow_check = np.array(flow_check)
    elapsed = time.perf_counter() - start
    worst = {k: res.worst(k) for k in ("H_rel_drift", "K_rel_drift", "measure_residual")}
    ok = (
        res.admissible >= 10_000
        and all(v <= 1e-10 for v in worst.values())
        and (not defined.any() or flow[defined].max() <= 1e-10)
        and (flow_check.size == 0 or flow_check.max() <= 1e-10)
        and elapsed < 300
    )
    record(
        acceptance_log,
        4,
        "Nambu family: H, K, timestep and flow densities",
        ok,
        f"{res.admissible} specs; H {worst['H_rel_drift']:.1e}, K {worst['K_rel_drift']:.1e}, "
        f"measure {worst['measure_residual']:.1e}, flow density {flow[defined].max():.1e} "
        f"({int(defined.sum())} defined), continuous check {flow_check.max():.1e} "
        f"({flow_check.size} points); {elapsed:.0f}s < 300s; rejected {res.rejected}",
    )


def test_criterion_5_golden_examples(acceptance_log):
    ok = True
    parts = []
    tol = GOLDEN["tolerance"]
    for run in GOLDEN["runs"]:
        cfg = RunConfig(system=run["system"], h=GOLDEN["h"], steps=GOLDEN["steps"], x0=run["x0"]).validate()
        spec = build_system(cfg)
        traj = run_trajectory(cfg, spec)
        by = {r.label: r for r in conservation_report(traj, spec, tol).invariants}
        worst = max(by[label].max_rel_drift for label in run["conserved"])
        ok &= traj.failure is None and worst <= tol
        detail = f"{run['id']} conserved {worst:.1e}"
        for label, min_drift in run["negative_controls"].items():
            ok &= by[label].max_abs_drift > min_drift
            detail += f", {label} drifts {by[label].max_abs_drift:.1e}"
        parts.append(detail)
    ids = {r["id"] for r in GOLDEN["runs"]}
    ok &= {"suslov", "zhukovsky_volterra", "coupled_tops_superintegrable", "coupled_tops_negative_control"} <= ids
    record(acceptance_log, 5, "catalog fixtures, 1000 steps at h=0.1", ok, "; ".join(parts))


def test_criterion_6_structural_properties(acceptance_log):
    rng = np.random.default_rng(6)
    roundtrip = equiv = jac = 0.0
    n_rt = n_eq = n_jac = 0
    while n_rt < 1000:
        n = int(rng.integers(1, 7))
        v = random_field(rng, n)
        x = rng.uniform(-1, 1, n)
        h = 0.3 * (1 - rng.random())
        try:
            xp, _ = kahan_step(v, x, h)
            back, _ = kahan_inverse_step(v, xp, h)
        except SingularStep:
            continue
        roundtrip = max(roundtrip, np.max(np.abs(back - x)) / (1 + np.max(np.abs(x))))
        n_rt += 1
    while n_eq < 500:
        n = int(rng.integers(1, 7))
        v = random_field(rng, n)
        m = AffineMap(rng.uniform(-1, 1, (n, n)) + 2 * np.eye(n), rng.uniform(-1, 1, n))
        x = rng.uniform(-1, 1, n)
        h = 0.3 * (1 - rng.random())
        try:
            xp, _ = kahan_step(v, x, h)
            yp, _ = kahan_step(affine_conjugate(v, m), m(x), h)
        except SingularStep:
            continue
        equiv = max(equiv, np.max(np.abs(yp - m(xp))) / (1 + np.max(np.abs(yp))))
        n_eq += 1
    skipped = 0
    while n_jac < 500:
        n = int(rng.integers(1, 7))
        v = random_field(rng, n)
        x = rng.uniform(-1, 1, n)
        h = 0.3 * (1 - rng.random())
        try:
            J = map_jacobian(v, x, h)
            Jfd = fd_jacobian(lambda y: kahan_step(v, y, h)[0], x, 1e-6)
        except SingularStep:
            continue
        if np.linalg.cond(J) > 1e4:
            skipped += 1  # difference quotients lose their digits near the singular set
            continue
        jac = max(jac, np.max(np.abs(J - Jfd)) / max(1.0, np.max(np.abs(J))))
        n_jac += 1
    ok = roundtrip <= 1e-12 and equiv <= 1e-10 and jac <= 1e-6
    record(
        acceptance_log,
        6,
        "roundtrip, affine equivariance, exact Jacobian",
        ok,
        f"roundtrip {roundtrip:.1e} ({n_rt}), equivariance {equiv:.1e} ({n_eq}), "
        f"Jacobian vs FD {jac:.1e} ({n_jac}, {skipped} ill-conditioned skipped)",
    )


def test_criterion_7_order(acceptance_log):
    h_list = [0.1, 0.05, 0.025, 0.0125]
    systems = {
        "suslov": suslov(1.0),
        "zhukovsky_volterra": zhukovsky_volterra(1.0, 1.0, 1.0),
        "coupled_tops": coupled_tops((1.0, -1.0, 1.0, 1.0, 1.0, -1.0)),
    }
    slopes = {name: order_estimate(s, s.x0, 1.0, h_list) for name, s in systems.items()}
    ok = all(1.9 <= v <= 2.1 for v in slopes.values())
    record(
        acceptance_log,
        7,
        "second order against the midpoint reference at h/1000",
        ok,
        ", ".join(f"{k} {v:.4f}" for k, v in slopes.items()),
    )


def test_criterion_8_covariance(acceptance_log):
    rng = np.random.default_rng(8)
    worst = 0.0
    checked = 0
    while checked < 10_000:
        f = Quadratic2Form(*rng.uniform(-2, 2, 5))
        A = AffineScalar(rng.uniform(-2, 2, 2), rng.uniform(-2, 2))
        x = rng.uniform(-1, 1, 2)
        h = 0.3 * (1 - rng.random())
        alpha, beta = rng.uniform(0.1, 10, 2) * rng.choice([-1, 1], 2)
        try:
            base = modified_integral(ModifiedIntegralSpec(f, A, h), x)
        except DivisionByZero:
            continue
        scaled = modified_integral(ModifiedIntegralSpec(f.scaled(alpha), A.scaled(beta), h / (alpha * beta)), x)
        worst = max(worst, abs(scaled - alpha * base) / max(1.0, abs(alpha * base)))
        checked += 1
    record(
        acceptance_log,
        8,
        "scaling covariance of the modified integral",
        worst <= 1e-13,
        f"{checked} draws, worst {worst:.1e} <= 1e-13",
    )
