"""Run configurations, trajectories, conservation reports and order studies.

Configurations are YAML documents. The accepted keys are::

    system:            # exactly one of
      name: suslov     #   a catalog entry, with optional params
      params: {alpha: 1.0}
      nambu: {a: [...5], b: [...5]}      # an inline Nambu spec
      raw: {a: [[[...]]], b: [[...]], c: [...]}  # inline coefficients
    x0: [1.0, 1.0]     # optional for catalog systems with a default point
    h: 0.1
    steps: 1000
    scheme: kahan      # kahan | bc-case1 | bc-case2 | bc-midpoint | bc-frozen
    tail: freeze       # freeze | kahan  (B/C schemes only)
    planar:            # optional; required by bc-* on raw systems
      form: [a1, a2, a3, a4, a5]
      p: 1
      q: 2
      A: {g: [...], g0: 0.0}
    seed: 0
    tol: 1.0e-10       # default from $KAHANMAPS_TOL, else 1e-10
    halve_on_singular: false
    output: {path: null, format: csv}   # csv | json

:func:`emit_config` writes every key, so ``parse_config(emit_config(cfg))``
reproduces ``cfg`` exactly.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from ._linalg import det3
from .errors import ConfigError, DivisionByZero, NoConvergence, SingularStep
from .integrals import (
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
    d1,
    eval_integral,
    modified_integral,
)
from .nambu import DensitySpec, NambuSpec, density
from .qvf import QuadraticVectorField, StepDiagnostics, kahan_step, map_jacobian, midpoint_step
from .systems import CATALOG, Invariant, SystemSpec, from_catalog, nambu_system

TOL_ENV = "KAHANMAPS_TOL"
DEFAULT_TOL = 1e-10
SCHEMES = ("kahan", "bc-case1", "bc-case2", "bc-midpoint", "bc-frozen")
TAILS = ("freeze", "kahan")
FORMATS = ("csv", "json")
MAX_HALVINGS = 4


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"environment variable {TOL_ENV}={raw!r} is not a number") from None


@dataclass
class RunConfig:
    system: dict
    h: float
    steps: int
    x0: list | None = None
    scheme: str = "kahan"
    tail: str = "freeze"
    planar: dict | None = None
    seed: int = 0
    tol: float = field(default_factory=default_tol)
    halve_on_singular: bool = False
    output: dict = field(default_factory=lambda: {"path": None, "format": "csv"})

    def validate(self, lines=None):
        lines = lines or {}

        def fail(msg, key):
            raise ConfigError(msg, field=key, line=lines.get(key.split(".")[0]))

        kinds = [k for k in ("name", "nambu", "raw") if k in self.system]
        if len(kinds) != 1:
            fail("system needs exactly one of 'name', 'nambu', 'raw'", "system")
        unknown = set(self.system) - {"name", "params", "nambu", "raw"}
        if unknown:
            fail(f"unknown system keys {sorted(unknown)}", "system")
        if "name" in self.system and self.system["name"] not in CATALOG:
            fail(f"unknown system {self.system['name']!r}; known: {', '.join(sorted(CATALOG))}", "system.name")
        if not isinstance(self.steps, int) or isinstance(self.steps, bool) or self.steps < 1:
            fail("steps must be an integer >= 1", "steps")
        if not isinstance(self.h, (int, float)) or isinstance(self.h, bool) or self.h == 0 or not math.isfinite(self.h):
            fail("h must be a finite nonzero number", "h")
        if self.scheme not in SCHEMES:
            fail(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}", "scheme")
        if self.tail not in TAILS:
            fail(f"unknown tail {self.tail!r}; expected one of {', '.join(TAILS)}", "tail")
        if not isinstance(self.tol, (int, float)) or not self.tol > 0:
            fail("tol must be positive", "tol")
        if not isinstance(self.seed, int):
            fail("seed must be an integer", "seed")
        out = self.output
        if not isinstance(out, dict) or set(out) - {"path", "format"}:
            fail("output takes 'path' and 'format'", "output")
        if out.get("format", "csv") not in FORMATS:
            fail(f"unknown output format {out.get('format')!r}", "output.format")
        if self.planar is not None:
            if not isinstance(self.planar, dict) or "form" not in self.planar or "A" not in self.planar:
                fail("planar needs 'form' and 'A'", "planar")
            if len(self.planar["form"]) != 5:
                fail("planar.form needs 5 coefficients", "planar.form")
        if self.scheme.startswith("bc-") and self.planar is None and "name" not in self.system and "nambu" not in self.system:
            fail(f"scheme {self.scheme} needs a planar decomposition", "planar")
        if self.x0 is not None:
            try:
                self.x0 = [float(v) for v in self.x0]
            except (TypeError, ValueError):
                fail("x0 must be a list of numbers", "x0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_KEYS = {f for f in RunConfig.__dataclass_fields__}


def _key_lines(text):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Raises:
        ConfigError: naming the offending field and, where known, its line.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", line=None if mark is None else mark.line + 1) from None
    lines = _key_lines(text)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - _KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", field=key, line=lines.get(key))
    for key in ("system", "h", "steps"):
        if key not in data:
            raise ConfigError("missing required key", field=key)
    if not isinstance(data["system"], dict):
        raise ConfigError("system must be a mapping", field="system", line=lines.get("system"))
    if "output" in data and isinstance(data["output"], dict):
        data["output"] = {"path": None, "format": "csv", **data["output"]}
    if isinstance(data.get("h"), int) and not isinstance(data.get("h"), bool):
        data["h"] = float(data["h"])
    cfg = RunConfig(**data)
    return cfg.validate(lines)


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None, width=100)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- system assembly ----------------------------------------------------------


def _planar_from_dict(d) -> tuple[Quadratic2Form, AffineScalar]:
    form = Quadratic2Form(*[float(v) for v in d["form"]], p=int(d.get("p", 1)), q=int(d.get("q", 2)))
    A = AffineScalar([float(v) for v in d["A"]["g"]], float(d["A"].get("g0", 0.0)))
    return form, A


def build_system(cfg: RunConfig) -> SystemSpec:
    sysd = cfg.system
    try:
        if "name" in sysd:
            params = dict(sysd.get("params") or {})
            if sysd["name"] == "random_nambu":
                params.setdefault("seed", cfg.seed)
            spec = from_catalog(sysd["name"], **params)
        elif "nambu" in sysd:
            spec = nambu_system(NambuSpec(sysd["nambu"]["a"], sysd["nambu"]["b"]))
        else:
            raw = sysd["raw"]
            spec = SystemSpec("raw", QuadraticVectorField(raw["a"], raw["b"], raw["c"]), ())
        if cfg.planar is not None:
            planar = _planar_from_dict(cfg.planar)
            invs = spec.invariants
            if not invs:
                form, A = planar
                invs = (
                    Invariant("I", lambda x, h: eval_integral(form, x), False),
                    Invariant("I_hat", lambda x, h: modified_integral(ModifiedIntegralSpec(form, A, h), x), True),
                )
            spec = SystemSpec(spec.name, spec.field, invs, spec.params, spec.x0, planar, spec.nambu)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build system: {exc}", field="system") from None
    return spec


def initial_state(cfg: RunConfig, spec: SystemSpec) -> np.ndarray:
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
    elif spec.x0 is not None:
        x0 = np.asarray(spec.x0, dtype=float)
    else:
        raise ConfigError("x0 is required for this system", field="x0")
    if x0.shape != (spec.field.n,):
        raise ConfigError(f"x0 has {x0.size} entries, system dimension is {spec.field.n}", field="x0")
    return x0


def _scheme_object(scheme: str, A):
    return {"bc-case1": Case1, "bc-case2": Case2, "bc-midpoint": Case3Midpoint, "bc-frozen": Case3Frozen}[scheme](A)


def scheme_invariants(spec: SystemSpec, scheme: str) -> tuple[Invariant, ...]:
    """Invariants that a scheme is expected to conserve on ``spec``.

    Kahan's method uses the catalog entry's own list. The B/C schemes act on
    the planar part only and carry one distinguished integral each.
    """
    if scheme == "kahan":
        return spec.invariants
    form, A = spec.planar
    I = Invariant("I", lambda x, h: eval_integral(form, x), scheme in ("bc-midpoint", "bc-frozen"))
    if scheme == "bc-case1":
        return (I, Invariant("I_hat", lambda x, h: modified_integral(ModifiedIntegralSpec(form, A, h), x), True))
    if scheme == "bc-case2":
        return (I, Invariant("I_hat2", lambda x, h: case2_modified_integral(form, A, h, x), True))
    return (I,)


# -- trajectories -------------------------------------------------------------


@dataclass
class Trajectory:
    """Iterates ``states[m]`` of one scheme; ``states[m]`` approximates the
    solution at time ``m h``.

    ``failure`` is set when the run stopped early; ``states`` then holds the
    steps completed before it.
    """

    h: float
    states: np.ndarray
    diagnostics: list
    scheme: str = "kahan"
    failure: dict | None = None
    halvings: int = 0

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.h


def _bc_diagnostics(form, scheme, x, xp, h):
    B, C = bc_coefficients(scheme, x, xp)
    u, v = form.uv(x)
    up, vp = form.uv(xp)
    Ip, Iq = form.gradient(x)
    Ipp, Iqp = form.gradient(xp)
    r1 = up - u - h * (B * Iqp + C * Iq)
    r2 = vp - v + h * (B * Ipp + C * Ip)
    hB = h * B
    M = np.array([[1.0 - hB * form.a2, -hB * form.a3], [hB * form.a1, 1.0 + hB * form.a2]])
    return StepDiagnostics(float(max(abs(r1), abs(r2))), float(np.linalg.cond(M, 1)))


def _iterate(spec: SystemSpec, cfg: RunConfig, x0, h):
    states = [x0]
    diags = []
    x = x0
    if cfg.scheme == "kahan":
        step = lambda x: kahan_step(spec.field, x, h)  # noqa: E731
    else:
        form, A = spec.planar
        scheme = _scheme_object(cfg.scheme, A)
        tail = FreezeTail() if cfg.tail == "freeze" else KahanTail(spec.field, form)

        def step(x):
            xp = bc_step(form, scheme, tail, x, h)
            return xp, _bc_diagnostics(form, scheme, x, xp, h)

    for m in range(cfg.steps):
        try:
            x, d = step(x)
        except (SingularStep, NoConvergence) as exc:
            return states, diags, {"step": m + 1, "error": type(exc).__name__, "message": str(exc)}
        states.append(x)
        diags.append(d)
    return states, diags, None


def run_trajectory(cfg: RunConfig, spec: SystemSpec | None = None) -> Trajectory:
    """Iterate the configured scheme.

    A singular step truncates the trajectory and records ``failure``. With
    ``halve_on_singular`` the whole run is repeated with ``h/2`` (constant
    step, so the h-dependent invariants stay meaningful) up to four times.
    """
    spec = build_system(cfg) if spec is None else spec
    if cfg.scheme.startswith("bc-") and spec.planar is None:
        raise ConfigError(f"system {spec.name!r} has no planar decomposition", field="planar")
    x0 = initial_state(cfg, spec)
    h = float(cfg.h)
    halvings = 0
    while True:
        states, diags, failure = _iterate(spec, cfg, x0, h)
        if failure is None or not cfg.halve_on_singular or halvings == MAX_HALVINGS:
            break
        h *= 0.5
        halvings += 1
    return Trajectory(h, np.array(states), diags, cfg.scheme, failure, halvings)


# -- reports ------------------------------------------------------------------


@dataclass
class InvariantReport:
    label: str
    conserved: bool
    initial: float | None
    max_abs_drift: float | None
    max_rel_drift: float | None
    first_exceeding_step: int | None
    error: str | None = None

    def passed(self, tol: float) -> bool:
        if not self.conserved:
            return True
        return self.error is None and self.max_rel_drift is not None and self.max_rel_drift <= tol


@dataclass
class ConservationReport:
    """Drift of every invariant along a trajectory.

    Relative drift is ``|v_m - v_0| / (1 + |v_0|)``. For Nambu systems under
    Kahan's method ``measure`` holds the per-step residual
    ``|g(x) - g(x') det J| / |g(x)|`` for each applicable density.
    """

    system: str
    scheme: str
    h: float
    steps: int
    tol: float
    invariants: list
    measure: dict = field(default_factory=dict)
    failure: dict | None = None

    @property
    def conservation_ok(self) -> bool:
        return all(r.passed(self.tol) for r in self.invariants) and all(
            m["max"] <= self.tol for m in self.measure.values()
        )

    @property
    def exit_code(self) -> int:
        if not self.conservation_ok:
            return 1
        if self.failure is not None:
            return 2
        return 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conservation_ok"] = self.conservation_ok
        return d

    def table(self) -> str:
        rows = [f"{'invariant':<14}{'conserved':>10}{'initial':>24}{'max |drift|':>14}{'max rel':>12}{'first>tol':>10}"]
        for r in self.invariants:
            if r.error:
                rows.append(f"{r.label:<14}{str(r.conserved):>10}  error: {r.error}")
                continue
            first = "-" if r.first_exceeding_step is None else str(r.first_exceeding_step)
            rows.append(
                f"{r.label:<14}{str(r.conserved):>10}{r.initial:>24.16e}{r.max_abs_drift:>14.3e}"
                f"{r.max_rel_drift:>12.3e}{first:>10}"
            )
        for kind, m in self.measure.items():
            rows.append(f"measure[{kind}] max residual {m['max']:.3e}")
        return "\n".join(rows)


def conservation_report(t: Trajectory, spec: SystemSpec, tol: float | None = None) -> ConservationReport:
    tol = default_tol() if tol is None else tol
    invs = []
    for inv in scheme_invariants(spec, t.scheme):
        try:
            vals = np.array([inv(x, t.h) for x in t.states], dtype=float)
        except DivisionByZero as exc:
            invs.append(InvariantReport(inv.label, inv.conserved, None, None, None, None, str(exc)))
            continue
        v0 = vals[0]
        drift = np.abs(vals - v0)
        rel = drift / (1.0 + abs(v0))
        over = np.nonzero(rel > tol)[0]
        invs.append(
            InvariantReport(
                inv.label,
                inv.conserved,
                float(v0),
                float(drift.max()),
                float(rel.max()),
                int(over[0]) if over.size else None,
            )
        )
    measure = {}
    if spec.nambu is not None and t.scheme == "kahan":
        measure = measure_residuals(spec, t)
    return ConservationReport(spec.name, t.scheme, t.h, t.steps, tol, invs, measure, t.failure)


def measure_residuals(spec: SystemSpec, t: Trajectory) -> dict:
    s = spec.nambu
    kinds = [DensitySpec(s, "timestep", t.h)]
    if d1(s.H_form) != 0.0 and d1(s.K_form) != 0.0:
        kinds.append(DensitySpec(s, "flow"))
    out = {}
    dets = [
        det3(map_jacobian(spec.field, x, t.h, x_prime=xp)) for x, xp in zip(t.states[:-1], t.states[1:])
    ]
    for d in kinds:
        res = []
        try:
            for (x, xp), J in zip(zip(t.states[:-1], t.states[1:]), dets):
                gx = density(d, x)
                res.append(float(abs(gx - density(d, xp) * J) / max(abs(gx), 1e-300)))
        except DivisionByZero:
            continue
        out[d.kind] = {"max": max(res) if res else 0.0, "per_step": res}
    return out


# -- output -------------------------------------------------------------------


def _fmt(x: float, style: str) -> str:
    if style == "fixed17":
        return f"{x:.16e}"
    return repr(float(x))


def emit_trajectory(t: Trajectory, format: str = "csv", float_format: str = "shortest", report=None) -> bytes:
    """Serialize a trajectory.

    ``csv`` has one row per state with columns ``m, t, x1..xn, residual,
    cond`` (the diagnostics of the step that produced the row; empty for
    ``m = 0``). ``float_format`` is ``shortest`` (round-trip repr) or
    ``fixed17`` (17 significant digits, used for golden files). ``json``
    carries the states, diagnostics and an optional report.
    """
    if format == "csv":
        n = t.states.shape[1]
        buf = io.StringIO()
        buf.write(",".join(["m", "t"] + [f"x{i + 1}" for i in range(n)] + ["residual", "cond"]) + "\n")
        for m, x in enumerate(t.states):
            cells = [str(m), _fmt(m * t.h, float_format)] + [_fmt(v, float_format) for v in x]
            if m == 0:
                cells += ["", ""]
            else:
                d = t.diagnostics[m - 1]
                cells += [_fmt(d.residual, float_format), _fmt(d.condition_estimate, float_format)]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue().encode("ascii")
    if format == "json":
        doc = {
            "h": t.h,
            "scheme": t.scheme,
            "steps": t.steps,
            "halvings": t.halvings,
            "failure": t.failure,
            "states": t.states.tolist(),
            "diagnostics": [d._asdict() for d in t.diagnostics],
        }
        if report is not None:
            doc["report"] = report.to_dict()
        return (json.dumps(doc, indent=1) + "\n").encode("utf-8")
    raise ValueError(f"unknown trajectory format {format!r}")


def read_trajectory_csv(data: bytes) -> Trajectory:
    """Inverse of the CSV branch of :func:`emit_trajectory`."""
    lines = data.decode("ascii").strip().splitlines()
    header = lines[0].split(",")
    n = len(header) - 4
    states, diags, times = [], [], []
    for line in lines[1:]:
        cells = line.split(",")
        times.append(float(cells[1]))
        states.append([float(v) for v in cells[2 : 2 + n]])
        if cells[-1] != "":
            diags.append(StepDiagnostics(float(cells[-2]), float(cells[-1])))
    h = times[1] if len(times) > 1 else 0.0
    return Trajectory(h, np.array(states), diags)


# -- order of accuracy --------------------------------------------------------


def order_errors(spec: SystemSpec, x0, T: float, h_list, reference_h: float | None = None, reference=None):
    """Global errors at time ``T`` of Kahan's method for each step in ``h_list``.

    The reference solution is the implicit midpoint rule at
    ``min(h_list) / 1000`` unless ``reference`` (the exact ``x(T)``) is given.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least three step sizes")
    counts = []
    for h in h_list:
        N = T / h
        if abs(N - round(N)) > 1e-9 * max(1.0, N):
            raise ValueError(f"T/h = {N} is not an integer for h = {h}")
        counts.append(int(round(N)))
    x0 = np.asarray(x0, dtype=float)
    if reference is None:
        href = min(h_list) / 1000.0 if reference_h is None else reference_h
        Nref = int(round(T / href))
        x = x0
        for _ in range(Nref):
            x = midpoint_step(spec.field, x, T / Nref)
        reference = x
    errors = []
    for h, N in zip(h_list, counts):
        x = x0
        for _ in range(N):
            x, _ = kahan_step(spec.field, x, h)
        errors.append(float(np.max(np.abs(x - reference))))
    return np.array(h_list), np.array(errors)


def order_estimate(spec: SystemSpec, x0, T: float, h_list, reference_h: float | None = None, reference=None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    hs, errs = order_errors(spec, x0, T, h_list, reference_h, reference)
    if np.any(errs <= 0):
        raise ValueError("zero error at some step size; the order is undefined")
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(slope)
