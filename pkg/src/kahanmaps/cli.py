"""Command-line interface: ``kahanmaps {run,report,order,verify-family}``.

Exit codes: 0 all conserved invariants within tolerance, 1 conservation
failure, 2 singular step, 3 configuration error. The default tolerance can
be overridden with the ``KAHANMAPS_TOL`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .errors import ConfigError
from .sweeps import nambu_sweep

log = logging.getLogger("kahanmaps")

EXIT_OK, EXIT_CONSERVATION, EXIT_SINGULAR, EXIT_CONFIG = 0, 1, 2, 3


def _write(path, data: bytes):
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _load(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    if args.h is not None:
        cfg.h = args.h
    if args.tol is not None:
        cfg.tol = args.tol
    if getattr(args, "halve_on_singular", False):
        cfg.halve_on_singular = True
    if args.out is not None:
        cfg.output = {**cfg.output, "path": args.out}
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _load(args)
    spec = harness.build_system(cfg)
    traj = harness.run_trajectory(cfg, spec)
    fmt = cfg.output.get("format", "csv")
    report = harness.conservation_report(traj, spec, cfg.tol) if fmt == "json" else None
    _write(cfg.output.get("path"), harness.emit_trajectory(traj, fmt, report=report))
    if traj.failure is not None:
        log.error("singular step at m=%d: %s", traj.failure["step"], traj.failure["message"])
        return EXIT_SINGULAR
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load(args)
    spec = harness.build_system(cfg)
    traj = harness.run_trajectory(cfg, spec)
    report = harness.conservation_report(traj, spec, cfg.tol)
    print(f"{spec.name} scheme={traj.scheme} h={traj.h!r} steps={traj.steps} tol={cfg.tol:g}")
    print(report.table())
    if traj.failure is not None:
        print(f"stopped at step {traj.failure['step']}: {traj.failure['message']}")
    if cfg.output.get("path") is not None:
        _write(cfg.output["path"], harness.emit_trajectory(traj, "json", report=report))
    print("PASS" if report.exit_code == EXIT_OK else "FAIL")
    return report.exit_code


def cmd_order(args) -> int:
    cfg = _load(args)
    spec = harness.build_system(cfg)
    x0 = harness.initial_state(cfg, spec)
    h_list = [float(v) for v in args.h_list.split(",")]
    hs, errs = harness.order_errors(spec, x0, args.T, h_list, args.reference_h)
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    for h, e in zip(hs, errs):
        print(f"h={h:<10g} error={e:.6e}")
    print(f"order={slope:.4f}")
    if args.expect is not None:
        lo, hi = (float(v) for v in args.expect.split(","))
        return EXIT_OK if lo <= slope <= hi else EXIT_CONSERVATION
    return EXIT_OK


def cmd_verify_family(args) -> int:
    tol = harness.default_tol() if args.tol is None else args.tol
    res = nambu_sweep(
        args.count,
        seed=0 if args.seed is None else args.seed,
        steps=1000 if args.steps is None else args.steps,
        h_max=args.h_max,
        jobs=args.jobs,
    )
    summary = {
        "count": res.admissible,
        "drawn": res.drawn,
        "rejected": res.rejected,
        "tol": tol,
        "worst": {k: res.worst(k) for k in res.metrics if k != "flow_measure_residual"},
        "failures": {k: res.failures(k, tol) for k in res.metrics if k != "flow_measure_residual"},
    }
    flow = res.metrics["flow_measure_residual"]
    defined = flow[np.isfinite(flow)]
    summary["worst"]["flow_measure_residual"] = float(defined.max()) if defined.size else 0.0
    summary["failures"]["flow_measure_residual"] = int(np.sum(defined > tol))
    ok = all(v == 0 for v in summary["failures"].values())
    summary["passed"] = ok
    text = json.dumps(summary, indent=2) + "\n"
    if args.out is not None:
        _write(args.out, text.encode())
    for k in sorted(summary["worst"]):
        print(f"{k:<24} worst={summary['worst'][k]:.3e} failures={summary['failures'][k]}")
    print(f"{res.admissible} admissible of {res.drawn} drawn; rejected {res.rejected}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CONSERVATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kahanmaps", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--h", type=float)
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--tol", type=float)

    p = sub.add_parser("run", help="iterate a scheme and write the trajectory")
    common(p)
    p.add_argument("--halve-on-singular", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="conservation report for a run")
    common(p)
    p.add_argument("--halve-on-singular", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("order", help="estimate the convergence order")
    common(p)
    p.add_argument("--T", type=float, default=1.0, help="time horizon")
    p.add_argument("--h-list", default="0.1,0.05,0.025,0.0125")
    p.add_argument("--reference-h", type=float)
    p.add_argument("--expect", help="LO,HI; exit 1 when the order is outside")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("verify-family", help="sweep random Nambu systems")
    common(p, config=False)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--h-max", type=float, default=0.2)
    p.set_defaults(func=cmd_verify_family)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
