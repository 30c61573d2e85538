"""Command line interface: run / compare / plot."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from codesign import harness, plots


def _add_run(sub):
    p = sub.add_parser("run", help="run an experiment case and write a result bundle")
    p.add_argument("--config", type=Path, default=None, help="YAML config file")
    p.add_argument("--case", choices=harness.CASES, default=None)
    p.add_argument("--waypoints", type=int, default=None)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--formulation", choices=["to", "fk"], default=None,
                   help="shorthand: rewrite the case to the chosen formulation")
    p.add_argument("--out", type=Path, default=Path("runs/out"))


def _run(args) -> int:
    cfg = harness.load_config(args.config)
    exp = {}
    if args.case:
        exp["case"] = args.case
    if args.waypoints:
        exp["waypoints"] = args.waypoints
    if args.starts:
        exp["starts"] = args.starts
    if args.threads:
        exp["threads"] = args.threads
    if args.seed is not None:
        exp["seed"] = args.seed
    if exp:
        cfg = harness._merge(cfg, {"experiment": exp})
    if args.formulation:
        case = cfg["experiment"]["case"].removeprefix("fk-")
        if case in ("design", "placement", "combined"):
            cfg["experiment"]["case"] = case if args.formulation == "to" else f"fk-{case}"
    results = harness.run_experiment(cfg, out_dir=args.out)
    sol = results.get("solution") or results.get("final") or results.get("best_solution")
    print(f"case {results['case']}: bundle written to {args.out}")
    if sol:
        b = sol["breakdown"]
        print(f"  total {b['total']:.6g}  deformation {b['deformation']:.6g}  "
              f"mean tracking {sol['mean_tracking']:.3g}  "
              f"converged {sol['diagnostics']['converged']}")
    return 0


def _compare(args) -> int:
    report = harness.compare(args.run_a, args.run_b)
    out = args.out or (Path(args.run_a) / "comparison.json")
    out.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"comparison ({report['case_a']} vs {report['case_b']}) -> {out}")
    for key, m in report["metrics"].items():
        print(f"  {key:>14}: a={m['a']:.6g}  b={m['b']:.6g}  "
              f"ratio={m['ratio']:.4g}  winner={m['winner']}")
    return 0


def _plot(args) -> int:
    manifest = plots.emit_plots(args.bundle)
    for name in manifest["written"]:
        print(f"wrote {Path(args.bundle) / name}")
    for name, reason in manifest["skipped"]:
        print(f"skipped {name}: {reason}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="codesign",
        description="joint robot-design and workpiece-placement optimization")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)

    p = sub.add_parser("compare", help="compare two result bundles")
    p.add_argument("run_a", type=Path)
    p.add_argument("run_b", type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("plot", help="emit SVG plots from a result bundle")
    p.add_argument("bundle", type=Path)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "compare":
            return _compare(args)
        return _plot(args)
    except (harness.ConfigError, harness.CompareError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # surface solver failures machine-readably
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
