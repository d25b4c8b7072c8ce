"""Command-line interface: design, simulate, sweep, validate, export.

All outputs land under the chosen output directory (flag --out, or the
BEAMGEN_OUT environment variable, or ./beamgen_out). Every run writes its
manifest before any result file. Numbers are always formatted with dot
decimals regardless of locale.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import design as bd
from . import harness
from .metrics import MetricsError
from .scenario import (ScenarioError, apply_overrides, build_scenario,
                       load_scenario, packaged_scenario_path,
                       read_scenario_file)
from .validate import run_suite

PACKAGED_SCENARIOS = {"desk": "desk.ini", "paper_scale": "paper_scale.ini"}


def _resolve_scenario(args) -> "harness.Scenario":
    name = args.scenario
    if name in PACKAGED_SCENARIOS:
        path = packaged_scenario_path(PACKAGED_SCENARIOS[name])
    else:
        path = Path(name)
        if not path.exists():
            raise ScenarioError(f"scenario file {name!r} not found")
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    if getattr(args, "designs", None):
        overrides.append(f"run.designs={args.designs}")
    if getattr(args, "direction", None):
        overrides.append(f"run.direction={args.direction}")
    raw = read_scenario_file(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return build_scenario(raw)


def _out_dir(args) -> Path:
    root = args.out or os.environ.get("BEAMGEN_OUT") or "beamgen_out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_summary(records) -> None:
    header = (f"{'design':<20} {'dir':<8} {'sweep':<14} {'value':>10} "
              f"{'thr [b/sym]':>12} {'avail':>8} {'disp':>8} {'shannon':>9}")
    print(header)
    print("-" * len(header))
    for rec in records:
        s = rec.summary
        print(f"{rec.design:<20} {rec.direction:<8} {rec.sweep_param:<14} "
              f"{rec.sweep_value:>10.4g} {s.mean_throughput:>12.3f} "
              f"{100.0 * s.availability:>7.1f}% {s.dispersion_index:>8.3f} "
              f"{s.shannon_mean:>9.3f}")


def cmd_design(args) -> int:
    scenario = _resolve_scenario(args)
    out = _out_dir(args)
    kind = args.kind
    if kind == "adaptive":
        print("error: the adaptive design needs a concrete channel draw; "
              "only nominal statistics are available here. Use the robust "
              "or perturbation_aware design for a fixed payload.",
              file=sys.stderr)
        return 1
    alpha = 0.0
    eps_h = 0.0
    clamped = False
    if kind == "reference":
        beam = bd.design_reference(scenario.geometry)
    else:
        calibration = harness.calibrate(scenario)
        surrogate = bd.robust_surrogate(calibration.nominal)
        alpha, eps_h, clamped = (surrogate.alpha_used, surrogate.epsilon_h,
                                 surrogate.alpha_clamped)
        if kind == "robust":
            beam = bd.design_robust(calibration.nominal)
        else:
            beam = bd.design_perturbation_aware(
                calibration.nominal, "empirical", calibration.ensemble)
    residual = bd.check_orthonormal(beam)
    target = out / f"beam_{kind}.txt"
    bd.save_beam_matrix(target, beam, alpha=alpha, epsilon_h=eps_h,
                        alpha_clamped=clamped)
    print(f"wrote {target}")
    print(f"epsilon_h = {eps_h:.6g}")
    print(f"alpha = {alpha:.6g} (clamped: {'yes' if clamped else 'no'})")
    print(f"orthonormality residual = {residual:.3e}")
    return 0


def cmd_simulate(args) -> int:
    scenario = _resolve_scenario(args)
    out = _out_dir(args)
    harness.write_manifest(out / "manifest.json", scenario)
    calibration = harness.calibrate(scenario)
    records = harness.evaluate(scenario, calibration)
    harness.write_records_csv(out / "results.csv", records)
    _print_summary(records)
    print(f"wrote {out / 'results.csv'}")
    return 0


def cmd_sweep(args) -> int:
    overrides = list(args.set or [])
    overrides.append("sweep.param=alpha")
    overrides.append(f"sweep.values={args.values or '0,0.25,0.5,0.75,1'}")
    overrides.append(f"sweep.alpha_relative={'false' if args.absolute else 'true'}")
    args.set = overrides
    scenario = _resolve_scenario(args)
    out = _out_dir(args)
    harness.write_manifest(out / "manifest.json", scenario)
    calibration = harness.calibrate(scenario)
    records = harness.sweep_alpha(scenario, calibration)
    harness.write_records_csv(out / "sweep.csv", records)
    _print_summary(records)
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_validate(args) -> int:
    out = _out_dir(args)
    results = run_suite(seed=args.seed if args.seed is not None else 1,
                        fault=args.inject_fault)
    payload = {
        "passed": all(r.passed for r in results),
        "properties": [
            {"id": r.prop_id, "description": r.description,
             "passed": r.passed, "detail": r.detail}
            for r in results
        ],
    }
    report_path = out / "validation.json"
    with open(report_path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.prop_id}: {r.detail}")
    print(f"wrote {report_path}")
    return 0 if payload["passed"] else 1


def cmd_export(args) -> int:
    out = _out_dir(args)
    metric = args.metric
    if metric not in ("mean_throughput", "availability", "dispersion_index",
                      "shannon_mean"):
        print(f"error: unknown metric {metric!r}", file=sys.stderr)
        return 1
    import csv as _csv
    with open(args.input, "r", encoding="ascii", newline="") as fh:
        rows = list(_csv.DictReader(fh))
    target = out / "plot.csv"
    with open(target, "w", encoding="ascii", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["direction", "design", "sweep_param", "sweep_value",
                         "metric", "value"])
        for row in rows:
            writer.writerow([row["direction"], row["design"],
                             row["sweep_param"], row["sweep_value"],
                             metric, row[metric]])
    print(f"wrote {target}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamgen",
        description="Design fixed on-board beam-generation matrices and "
                    "evaluate them in a link-level Monte Carlo simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        if scenario_required:
            p.add_argument("--scenario", required=True,
                           help="scenario file path, or a packaged name "
                                f"({', '.join(PACKAGED_SCENARIOS)})")
        p.add_argument("--out", help="output directory (default: $BEAMGEN_OUT "
                                     "or ./beamgen_out)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a scenario value (repeatable); unknown "
                            "keys are errors")

    p = sub.add_parser("design", help="write one beam matrix file")
    common(p)
    p.add_argument("--kind", required=True,
                   choices=("reference", "adaptive", "robust",
                            "perturbation_aware"))
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="Monte Carlo sweep over beta or p_fl")
    common(p)
    p.add_argument("--designs", help="comma list of designs to evaluate")
    p.add_argument("--direction", choices=("return", "forward", "both"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="throughput versus uncertainty radius")
    common(p)
    p.add_argument("--designs", help="comma list of designs to evaluate")
    p.add_argument("--direction", choices=("return", "forward", "both"))
    p.add_argument("--values", help="comma list of radii "
                                    "(default 0,0.25,0.5,0.75,1)")
    p.add_argument("--absolute", action="store_true",
                   help="treat radii as absolute instead of fractions of "
                        "the calibrated radius")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the numerical property suite")
    common(p, scenario_required=False)
    p.add_argument("--inject-fault", choices=("scale-b",),
                   help="deliberately break a property (self-test)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="reshape a results CSV for plotting")
    common(p, scenario_required=False)
    p.add_argument("--input", required=True, help="results CSV from simulate/sweep")
    p.add_argument("--metric", default="mean_throughput")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, MetricsError, bd.DesignError,
            harness.HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
