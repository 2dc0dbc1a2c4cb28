"""Command line entry point ``regsim``.

Exit codes: 0 success, 1 assumption audit failed, 2 runtime or input error.
``REGSIM_SEED`` in the environment overrides the scenario's seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import AuditFailure, SimulationError, simulate
from .linalg import LinalgError
from .output import emit_plot_script, summarize, write_trace_csv
from .scenario import ScenarioError, bundled_scenario_path, load_scenario
from .verification import audit_assumptions, perturbation_sweep

EXIT_OK, EXIT_AUDIT, EXIT_ERROR = 0, 1, 2


def _resolve(path):
    """A path on disk, or the name of a bundled scenario such as ``section5``."""
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_scenario_path(p.name if p.suffix else p.name + ".scenario")
    return bundled if bundled.exists() else p


def _load(path):
    sc = load_scenario(_resolve(path))
    seed = os.environ.get("REGSIM_SEED")
    if seed is not None:
        try:
            sc = sc.with_sim(seed=int(seed))
        except ValueError as exc:
            raise ScenarioError("REGSIM_SEED", f"not an integer: {seed!r}") from exc
    return sc


def _radii(text):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad radius list {text!r}") from exc
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("radii must be a nonempty list of nonnegative numbers")
    return vals


def cmd_check(args):
    sc = _load(args.scenario)
    report = summarize(None, audit_assumptions(sc))
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK if report.audit["passed"] else EXIT_AUDIT


def cmd_run(args):
    sc = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    audit = audit_assumptions(sc)
    if not audit.passed and not args.force:
        print(summarize(None, audit).to_text(), file=sys.stderr)
        return EXIT_AUDIT
    trace = simulate(sc, force=args.force, record_every=args.decimate)
    csv_path = write_trace_csv(trace, out / "trace.csv")
    report = summarize(trace, audit)
    (out / "summary.json").write_text(report.to_json() + "\n")
    emit_plot_script(csv_path, out / "plot_trace.py")
    print(report.to_text())
    print(f"wrote {csv_path}, {out / 'summary.json'}, {out / 'plot_trace.py'}")
    return EXIT_OK


def cmd_sweep(args):
    sc = _load(args.scenario)
    audit = audit_assumptions(sc)
    if not audit.passed:
        print(summarize(None, audit).to_text(), file=sys.stderr)
        return EXIT_AUDIT
    rows, fixed = perturbation_sweep(sc, args.radius_grid, args.samples, sc.sim.seed, tol=args.tol)
    if args.json:
        print(json.dumps({
            "scenario_perturbation_passes": fixed,
            "rows": [{"radius": r.radius, "fraction": r.fraction, "samples": r.samples} for r in rows],
        }, indent=2))
    else:
        print("scenario perturbation keeps regulation: " + ", ".join(
            f"agent {i + 1}: {'yes' if ok else 'no'}" for i, ok in enumerate(fixed)))
        print("radius     fraction  samples")
        for r in rows:
            print(f"{r.radius:9.4g}  {r.fraction:8.3f}  {r.samples:7d}")
    return EXIT_OK


def cmd_plot(args):
    trace = Path(args.trace)
    out = Path(args.out) if args.out else trace.with_name(trace.stem + "_plot.py")
    emit_plot_script(trace, out)
    print(f"wrote {out}; run it with python3 to render {trace.stem}.png")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="regsim", description="Distributed output regulation simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="audit the standing assumptions of a scenario")
    c.add_argument("scenario")
    c.add_argument("--json", action="store_true", help="print the report as JSON")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="simulate a scenario and write trace, summary and plot script")
    r.add_argument("scenario")
    r.add_argument("--out", default="regsim_out", help="output directory (default: regsim_out)")
    r.add_argument("--decimate", type=int, default=10, help="keep every N-th step (default: 10)")
    r.add_argument("--force", action="store_true", help="simulate even if the audit fails")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="fraction of random data perturbations that keep regulation")
    s.add_argument("scenario")
    s.add_argument("--radius-grid", type=_radii, required=True, help="e.g. '0.01,0.05,0.1'")
    s.add_argument("--samples", type=int, required=True, help="samples per radius and agent")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="generate a matplotlib script for a trace CSV")
    pl.add_argument("trace")
    pl.add_argument("--out", help="script path (default: <trace>_plot.py)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "decimate", 1) < 1:
        print("regsim: --decimate must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except AuditFailure as exc:
        print(f"regsim: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (ScenarioError, SimulationError, LinalgError, ValueError, OSError) as exc:
        print(f"regsim: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
