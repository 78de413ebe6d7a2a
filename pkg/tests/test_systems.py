from pathlib import Path

import numpy as np
import pytest
import yaml

from kahanmaps.harness import RunConfig, build_system, conservation_report, run_trajectory
from kahanmaps.integrals import ModifiedIntegralSpec, modified_integral, verify_planar_structure
from kahanmaps.qvf import affine_conjugate, kahan_step
from kahanmaps.systems import (
    CATALOG,
    coupled_tops,
    coupled_tops_I3_form,
    coupled_tops_xy_map,
    euler_top,
    from_catalog,
    random_nambu,
    superintegrability_holds,
    suslov,
    zhukovsky_volterra,
)

GOLDEN = yaml.safe_load((Path(__file__).parent / "fixtures" / "golden_runs.yaml").read_text())


def golden_report(run):
    cfg = RunConfig(system=run["system"], h=GOLDEN["h"], steps=GOLDEN["steps"], x0=run["x0"]).validate()
    spec = build_system(cfg)
    traj = run_trajectory(cfg, spec)
    assert traj.failure is None
    return conservation_report(traj, spec, GOLDEN["tolerance"])


@pytest.mark.parametrize("run", GOLDEN["runs"], ids=[r["id"] for r in GOLDEN["runs"]])
def test_golden_runs(run):
    report = golden_report(run)
    by_label = {r.label: r for r in report.invariants}
    for label in run["conserved"]:
        assert by_label[label].conserved
        assert by_label[label].max_rel_drift <= GOLDEN["tolerance"], label
    for label, min_drift in run["negative_controls"].items():
        assert not by_label[label].conserved
        assert by_label[label].max_abs_drift > min_drift, label
    # the catalog flags agree with the fixture
    flagged = {r.label for r in report.invariants if r.conserved}
    assert flagged == set(run["conserved"])
    assert report.exit_code == 0


class TestSuslov:
    def test_field(self):
        v = suslov(1.5).field
        assert np.allclose(v([1.0, 2.0]), [2 * 1.5 * 2.0, -2.0])

    def test_modified_integral_value(self):
        assert suslov(1.0).invariant("I_tilde")(np.array([1.0, 1.0]), 1.0) == 0.5

    def test_alpha_zero_is_trivial(self, rng):
        s = suslov(0.0)
        x = np.array([0.7, -0.3])
        assert s.invariant("I").conserved
        assert s.invariant("I")(x, 0.1) == s.invariant("I_tilde")(x, 0.1) == 0.5 * 0.7**2
        for _ in range(20):
            xp, _ = kahan_step(s.field, x, 0.1)
            assert xp[0] == x[0]
            x = xp

    def test_drift_over_1000_steps(self):
        s = suslov(1.0)
        inv = s.invariant("I_tilde")
        x = np.array([1.0, 1.0])
        v0 = inv(x, 0.1)
        worst = 0.0
        for _ in range(1000):
            x, _ = kahan_step(s.field, x, 0.1)
            worst = max(worst, abs(inv(x, 0.1) - v0))
        assert worst <= 1e-11

    def test_planar_structure(self):
        s = suslov(0.8)
        assert verify_planar_structure(s.field, *s.planar) <= 1e-14


class TestZhukovskyVolterra:
    def test_beta1_zero_keeps_x2(self):
        s = zhukovsky_volterra(1.0, 0.0, 1.0)
        x = np.array([0.7, 1.2, 0.9])
        for _ in range(20):
            xp, _ = kahan_step(s.field, x, 0.1)
            assert xp[1] == pytest.approx(1.2, abs=1e-15)
            x = xp

    def test_h_zero_gives_continuous_integral(self, rng):
        s = zhukovsky_volterra(1.3, 0.4, -0.2)
        x = rng.uniform(-1, 1, 3)
        assert s.invariant("I_tilde")(x, 0.0) == s.invariant("I")(x, 0.0)

    def test_continuous_integral(self, rng):
        s = zhukovsky_volterra(1.3, 0.4, -0.2)
        x = rng.uniform(-1, 1, 3)
        f = s.field(x)
        grad = np.array([-0.4, 1.3 * x[1] + 0.2, 0.0])
        assert abs(f @ grad) <= 1e-14

    def test_drift_over_1000_steps(self):
        s = zhukovsky_volterra(1.0, 1.0, 1.0)
        inv = s.invariant("I_tilde")
        x = s.x0
        v0 = inv(x, 0.1)
        worst = 0.0
        for _ in range(1000):
            x, _ = kahan_step(s.field, x, 0.1)
            worst = max(worst, abs(inv(x, 0.1) - v0))
        assert worst <= 1e-11


class TestCoupledTops:
    @pytest.mark.parametrize(
        "alpha, expected",
        [((1, 1, 7, 7, 1, 1), True), ((2, 3, 0, 0, 1, 6), True), ((1, 1, 0, 0, 2, 1), False)],
    )
    def test_superintegrability(self, alpha, expected):
        assert superintegrability_holds(alpha) is expected

    def test_flags_follow_condition(self):
        assert coupled_tops((1, 1, 1, 1, 1, 1)).invariant("I3_tilde").conserved
        assert not coupled_tops((1, 1, 1, 1, 2, 1)).invariant("I3_tilde").conserved

    def test_continuous_integrals(self, rng):
        s = coupled_tops(rng.uniform(-2, 2, 6))
        x = rng.uniform(-1, 1, 5)
        f = s.field(x)
        a = np.array(list(s.params.values()))
        gI1 = np.array([-a[1] * x[0], a[0] * x[1], 0, 0, 0])
        gI2 = np.array([0, 0, 0, -a[5] * x[3], a[4] * x[4]])
        assert abs(f @ gI1) <= 1e-13 and abs(f @ gI2) <= 1e-13

    def test_x3_zero_hyperplane(self, rng):
        s = coupled_tops((1.0, 2.0, 0.5, 1.0, 1.0, 2.0))
        x = rng.uniform(-1, 1, 5)
        x[2] = 0.0
        for label in ("1", "2"):
            assert s.invariant(f"I{label}_tilde")(x, 0.3) == s.invariant(f"I{label}")(x, 0.3)

    def test_I3_through_affine_coordinates(self, rng):
        # alpha1 alpha2 < 0 keeps the orbits bounded, so the two routes can be
        # compared over long runs without the orbits blowing up
        for _ in range(20):
            a1, a3, a4, a5 = rng.uniform(0.5, 2.0, 4) * np.array([1, rng.choice([-1, 1]), rng.choice([-1, 1]), 1])
            a2 = -rng.uniform(0.5, 2.0)
            alpha = (a1, a2, a3, a4, a5, a1 * a2 / a5)
            s = coupled_tops(alpha)
            m = coupled_tops_xy_map(alpha)
            form, A = coupled_tops_I3_form(alpha)
            w = affine_conjugate(s.field, m)
            # in the new coordinates the first two components are planar in I3
            assert verify_planar_structure(w, form, A) <= 1e-12
            h = 0.1
            x = rng.uniform(0.5, 1.5, 5)
            y = m(x)
            inv = s.invariant("I3_tilde")
            for _ in range(1000):
                x, _ = kahan_step(s.field, x, h)
                y, _ = kahan_step(w, y, h)
                direct = inv(x, h)
                via = modified_integral(ModifiedIntegralSpec(form, A, h), y)
                assert abs(direct - via) <= 1e-12 * (1 + abs(direct))

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            coupled_tops((1, 1, 1))


class TestRandomNambu:
    def test_deterministic(self):
        a, b = random_nambu(11), random_nambu(11)
        assert a.nambu == b.nambu
        assert np.array_equal(a.x0, b.x0)
        assert random_nambu(12).nambu != a.nambu

    def test_zero_bound(self, rng):
        s = random_nambu(5, coeff_bound=0.0)
        assert np.array_equal(s.field(rng.uniform(-1, 1, 3)), np.zeros(3))

    def test_negative_bound(self):
        with pytest.raises(ValueError):
            random_nambu(1, -1.0)

    def test_seed_sweep_passes_conservation_suite(self):
        # unconfined orbits reach |x| ~ 1e5, where the absolute roundoff in
        # the integrals grows with the state; those are skipped as in the sweeps
        passed = 0
        for seed in range(100):
            cfg = RunConfig(system={"name": "random_nambu", "params": {"seed": seed}}, h=0.05, steps=200).validate()
            spec = build_system(cfg)
            traj = run_trajectory(cfg, spec)
            if traj.failure is not None or np.max(np.abs(traj.states)) > 10:
                continue
            report = conservation_report(traj, spec, 1e-10)
            assert report.exit_code == 0, seed
            passed += 1
        assert passed >= 25


def test_catalog_lookup():
    assert set(CATALOG) == {"suslov", "zhukovsky_volterra", "coupled_tops", "euler_top", "random_nambu"}
    assert from_catalog("suslov", alpha=2.0).params["alpha"] == 2.0
    with pytest.raises(KeyError):
        from_catalog("lorenz")


def test_euler_top_field():
    assert np.array_equal(euler_top().field([2.0, 3.0, 5.0]), [15.0, 10.0, 6.0])
