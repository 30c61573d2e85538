"""Experiment runner: config ingestion, case dispatch, result persistence.

A run writes a bundle directory: results.json (deterministic, reproducible
bit-for-bit for a fixed seed), summary.csv, trajectory.csv, assignment.csv
for modular runs, and timings.json (wall times, deliberately kept out of
results.json so the latter stays bitwise reproducible).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from codesign import baseline_fk, search, toolpath as toolpath_mod
from codesign.collocation import DesignProblem, Solution, transcribe
from codesign.costs import CostWeights, StiffnessModel
from codesign.kinematics import DhLink, KinematicChain, enumerate_structures, with_placement
from codesign.search import Module
from codesign.solver import SolverConfig, multi_start

CASES = ("design", "placement", "combined",
         "fk-design", "fk-placement", "fk-combined",
         "structures", "modular")


class ConfigError(ValueError):
    pass


class CompareError(RuntimeError):
    pass


DEFAULT_CONFIG = {
    "experiment": {
        "case": "combined",
        "waypoints": 80,
        "starts": 8,
        "threads": 1,
        "seed": 0,
        "epsilon": 1e-4,          # FK tracking bound
        "track_tol": 1e-3,        # mean per-waypoint tracking feasibility
        "structures_max_dof": 6,
        "structures_waypoints": 20,
        "modular_links": 6,
    },
    "toolpath": {
        "kind": "figure-eight",
        "center": [1.0, 0.0, 0.3],
        "width": 0.4,
        "height": 0.2,
        "duration": 8.0,
        "csv": None,
    },
    "chain": {"links": None, "tool_offset": 0.1},
    "placement": {
        "enabled": True,
        "cuboid": [[-2.0, 2.0], [-2.0, 2.0], [-1.0, 1.0]],
        "rotation_bounds": [[-3.141592653589793, 3.141592653589793],
                            [-3.141592653589793, 3.141592653589793],
                            [-3.141592653589793, 3.141592653589793]],
    },
    "weights": {
        "tracking": 1e4,
        "alpha_force": 100.0,
        "lambda_reg": 1e-3,
        "lambda_mod": 1.0,
        "w_lin": 1.0,
        "w_ang": 0.1,
    },
    "stiffness": 1.0,
    "bounds": {
        "velocity": 2.0,
        "position_rev": 6.283185307179586,
        "position_prism": 3.0,
    },
    "solver": {
        "max_outer_iterations": 12,
        "max_inner_iterations": 200,
        "constraint_tolerance": 1e-6,
        "gradient_tolerance": 1e-3,
        "penalty_growth": 10.0,
    },
    "modules": [
        {"id": 1, "d": 0.0, "a": 0.5, "alpha": 0.0},
        {"id": 2, "d": 0.0, "a": 0.5, "alpha": 1.5707963267948966},
        {"id": 3, "d": 1.0, "a": 0.0, "alpha": 0.0},
        {"id": 4, "d": 1.0, "a": 0.5, "alpha": 0.0},
        {"id": 5, "d": 0.5, "a": 0.5, "alpha": -1.5707963267948966},
    ],
}


def _merge(base, override, path="config"):
    if override is None:
        return base
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(override).__name__}")
        out = dict(base)
        for key, value in override.items():
            if key in base:
                out[key] = _merge(base[key], value, f"{path}.{key}")
            else:
                out[key] = value
        return out
    return override


def default_config() -> dict:
    return json.loads(json.dumps(DEFAULT_CONFIG))


def load_config(path=None) -> dict:
    """Defaults deep-merged with an optional YAML file."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if user is not None:
            cfg = _merge(cfg, user)
    return cfg


def default_chain() -> KinematicChain:
    """6R industrial-arm template; every link's d/a/alpha is a design joint."""
    links = default_links()
    return with_placement(KinematicChain(tuple(links)),
                          cuboid=tuple(map(tuple, DEFAULT_CONFIG["placement"]["cuboid"])))


def default_links():
    half_pi = float(np.pi / 2)
    geom = [
        (0.40, 0.10, -half_pi),
        (0.00, 0.60, 0.0),
        (0.00, 0.12, -half_pi),
        (0.50, 0.00, half_pi),
        (0.00, 0.00, -half_pi),
        (0.10, 0.00, 0.0),
    ]
    return [DhLink(kind="revolute", d=d, a=a, alpha=al,
                   design=frozenset({"d", "a", "alpha"}), label=f"j{i + 1}")
            for i, (d, a, al) in enumerate(geom)]


def _build_links(cfg_links):
    links = []
    for i, row in enumerate(cfg_links):
        try:
            links.append(DhLink(
                kind=row.get("kind", "revolute"),
                theta=float(row.get("theta", 0.0)),
                d=float(row.get("d", 0.0)),
                a=float(row.get("a", 0.0)),
                alpha=float(row.get("alpha", 0.0)),
                design=frozenset(row.get("design", [])),
                bounds={k: tuple(v) for k, v in row.get("bounds", {}).items()},
                label=row.get("label", f"link{i}"),
            ))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"chain.links[{i}]: {exc}") from exc
    return links


def build_toolpath(cfg) -> toolpath_mod.Toolpath:
    tp = cfg["toolpath"]
    n = int(cfg["experiment"]["waypoints"])
    if tp.get("kind", "figure-eight") == "csv" or tp.get("csv"):
        path = toolpath_mod.load_csv(tp["csv"])
        return toolpath_mod.resample(path, n) if len(path) != n else path
    try:
        return toolpath_mod.figure_eight(
            center=tp["center"], width=float(tp["width"]),
            height=float(tp["height"]), n=n, duration=float(tp["duration"]))
    except toolpath_mod.ToolpathError as exc:
        raise ConfigError(f"toolpath: {exc}") from exc


def build_chain(cfg) -> KinematicChain:
    links = (_build_links(cfg["chain"]["links"]) if cfg["chain"].get("links")
             else default_links())
    tool = np.eye(4)
    tool[2, 3] = float(cfg["chain"].get("tool_offset", 0.1))
    chain = KinematicChain(tuple(links), flange_to_tool=tool)
    pl = cfg["placement"]
    if pl.get("enabled", True):
        chain = with_placement(chain, cuboid=tuple(map(tuple, pl["cuboid"])),
                               rotation_bounds=tuple(map(tuple, pl["rotation_bounds"])))
    return chain


def build_problem(cfg, case=None) -> DesignProblem:
    case = case or cfg["experiment"]["case"]
    base = case.removeprefix("fk-")
    if base in ("design", "placement", "combined"):
        optimize_design = base in ("design", "combined")
        optimize_placement = base in ("placement", "combined")
    else:
        optimize_design = optimize_placement = True
    w = cfg["weights"]
    b = cfg["bounds"]
    return DesignProblem(
        chain=build_chain(cfg),
        toolpath=build_toolpath(cfg),
        weights=CostWeights(tracking=float(w["tracking"]),
                            alpha_force=float(w["alpha_force"]),
                            lambda_reg=float(w["lambda_reg"]),
                            lambda_mod=float(w["lambda_mod"]),
                            w_lin=float(w["w_lin"]), w_ang=float(w["w_ang"])),
        stiffness=StiffnessModel(k=cfg["stiffness"]),
        optimize_design=optimize_design,
        optimize_placement=optimize_placement,
        velocity_limit=float(b["velocity"]),
        position_limit_rev=float(b["position_rev"]),
        position_limit_prism=float(b["position_prism"]),
    )


def build_solver_config(cfg) -> SolverConfig:
    s = cfg["solver"]
    e = cfg["experiment"]
    try:
        return SolverConfig(
            max_outer_iterations=int(s["max_outer_iterations"]),
            max_inner_iterations=int(s["max_inner_iterations"]),
            constraint_tolerance=float(s["constraint_tolerance"]),
            gradient_tolerance=float(s["gradient_tolerance"]),
            penalty_growth=float(s["penalty_growth"]),
            multi_start_count=int(e["starts"]),
            seed=int(e["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"solver config: {exc}") from exc


def build_modules(cfg):
    try:
        return tuple(Module(id=int(m["id"]), d=float(m["d"]), a=float(m["a"]),
                            alpha=float(m["alpha"])) for m in cfg["modules"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"modules: {exc}") from exc


# ---------------------------------------------------------------------------
# result serialization


def _solution_record(sol: Solution) -> dict:
    d = sol.diagnostics
    return {
        "objective": sol.objective,
        "breakdown": sol.breakdown,
        "design": {name: float(v) for name, v in zip(sol.design_names, sol.design_values)},
        "mean_tracking": sol.mean_tracking,
        "trajectory": {
            "times": sol.times.tolist(),
            "states": sol.states.tolist(),
            "u_knot": sol.u_knot.tolist(),
            "u_mid": sol.u_mid.tolist(),
        },
        "diagnostics": {
            "outer_iterations": d.outer_iterations,
            "inner_iterations": d.inner_iterations,
            "constraint_violation": d.constraint_violation,
            "gradient_norm": d.gradient_norm,
            "converged": d.converged,
            "start_index": d.start_index,
            "message": d.message,
        },
    }


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _summary_rows(case, record, structure=""):
    b = record["breakdown"]
    return [{
        "case": case,
        "structure": structure,
        "total": b["total"],
        "tracking": b["tracking"],
        "deformation": b["deformation"],
        "regularization": b["regularization"],
        "modular": b["modular"],
        "mean_tracking": record["mean_tracking"],
        "converged": record["diagnostics"]["converged"],
    }]


def _write_summary(path: Path, rows):
    cols = ["case", "structure", "total", "tracking", "deformation",
            "regularization", "modular", "mean_tracking", "converged"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row[k]) for k in cols})


def _csv_cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return v


def _write_trajectory(path: Path, problem: DesignProblem, sol: Solution):
    chain = problem.effective_chain
    from codesign.kinematics import forward_kinematics

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        m = sol.states.shape[1]
        writer.writerow(["t", *[f"q{j}" for j in range(m)],
                         "x", "y", "z", "zx", "zy", "zz", "tracking", "deformation"])
        for k, t in enumerate(sol.times):
            q = chain.assemble(sol.states[k], sol.design_values)
            pose = forward_kinematics(chain, q)
            row = [t, *sol.states[k], *pose.p, *pose.R[:, 2],
                   sol.track_per_knot[k], sol.deform_per_knot[k]]
            writer.writerow([repr(float(v)) for v in row])


def load_results(out_dir) -> dict:
    path = Path(out_dir) / "results.json"
    if not path.exists():
        raise CompareError(f"no results.json in {out_dir}")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# experiment cases


def _solve_case(cfg, case, problem, solver_cfg):
    if case.startswith("fk-"):
        nlp = baseline_fk.fk_transcribe(problem, float(cfg["experiment"]["epsilon"]))
    else:
        nlp = transcribe(problem, len(problem.toolpath))
    return nlp, multi_start(nlp, solver_cfg)


def run_experiment(config=None, out_dir="runs/out", overrides=None) -> dict:
    """Run the configured case and write the result bundle; returns results."""
    t0 = time.perf_counter()
    cfg = default_config() if config is None else config
    if overrides:
        cfg = _merge(cfg, overrides)
    case = cfg["experiment"]["case"]
    if case not in CASES:
        raise ConfigError(f"experiment.case: unknown case {case!r}, valid: {CASES}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    solver_cfg = build_solver_config(cfg)

    results = {
        "case": case,
        "seed": int(cfg["experiment"]["seed"]),
        "waypoints": int(cfg["experiment"]["waypoints"]),
    }
    timings = {}
    summary = []

    if case in ("design", "placement", "combined") or case.startswith("fk-"):
        problem = build_problem(cfg, case)
        results["toolpath_hash"] = problem.toolpath.content_hash()
        nlp, sol = _solve_case(cfg, case, problem, solver_cfg)
        record = _solution_record(sol)
        results["solution"] = record
        summary += _summary_rows(case, record)
        _write_trajectory(out / "trajectory.csv", problem, sol)
        timings["solve"] = sol.diagnostics.wall_time
    elif case == "structures":
        results.update(_run_structures(cfg, out, solver_cfg, summary, timings))
    elif case == "modular":
        results.update(_run_modular(cfg, out, solver_cfg, summary, timings))

    _write_json(out / "results.json", results)
    _write_summary(out / "summary.csv", summary)
    timings["total"] = time.perf_counter() - t0
    _write_json(out / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    return results


def _structures_config(cfg):
    scfg = json.loads(json.dumps(cfg))
    scfg["experiment"]["waypoints"] = int(cfg["experiment"]["structures_waypoints"])
    return scfg


def _run_structures(cfg, out, solver_cfg, summary, timings):
    scfg = _structures_config(cfg)
    template = build_problem(scfg, "combined")
    max_dof = int(cfg["experiment"]["structures_max_dof"])
    structures = enumerate_structures(max_dof)
    t0 = time.perf_counter()
    batch = search.solve_all_structures(
        template, structures, solver_cfg,
        track_tol=float(cfg["experiment"]["track_tol"]),
        threads=int(cfg["experiment"]["threads"]))
    timings["structures_batch"] = time.perf_counter() - t0

    rows = []
    for res in batch:
        entry = {
            "structure": res.structure,
            "feasible": bool(res.feasible),
            "error": res.error,
            "design_cost": (None if res.solution is None else res.design_cost),
            "converged": (False if res.solution is None else res.solution.converged),
            "mean_tracking": (None if res.solution is None else res.solution.mean_tracking),
            "n_prismatic": res.structure.count("P"),
            "dof": len(res.structure),
        }
        rows.append(entry)
        if res.solution is not None:
            record = _solution_record(res.solution)
            summary += _summary_rows("structures", record, structure=res.structure)

    per_count = {}
    for entry in rows:
        if entry["feasible"] and entry["dof"] == max_dof:
            c = entry["n_prismatic"]
            if c not in per_count or entry["design_cost"] < per_count[c]["design_cost"]:
                per_count[c] = {"design_cost": entry["design_cost"],
                                "structure": entry["structure"]}

    results = {
        "toolpath_hash": template.toolpath.content_hash(),
        "structures": rows,
        "per_prismatic_count": {str(k): per_count[k] for k in sorted(per_count)},
        "best": None,
    }
    try:
        best = search.best_feasible(batch)
    except search.SearchError:
        return results
    results["best"] = {"structure": best.structure, "design_cost": best.design_cost}
    results["best_solution"] = _solution_record(best.solution)
    problem = search.structure_problem(template, best.structure)
    _write_trajectory(out / "trajectory.csv", problem, best.solution)
    return results


def _run_modular(cfg, out, solver_cfg, summary, timings):
    template = build_problem(cfg, "combined")
    modules = build_modules(cfg)
    t0 = time.perf_counter()
    result = search.solve_modular(
        template, modules, int(cfg["experiment"]["modular_links"]), solver_cfg,
        track_tol=float(cfg["experiment"]["track_tol"]))
    timings["modular"] = time.perf_counter() - t0

    cont = _solution_record(result.continuous)
    final = _solution_record(result.final)
    summary += _summary_rows("modular-continuous", cont)
    summary += _summary_rows("modular-final", final)

    with open(out / "assignment.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        ids = [m.id for m in modules]
        writer.writerow(["link", "module", "d", "a", "alpha",
                         *[f"dist_module_{i}" for i in ids]])
        for row in result.assignment:
            vals = row["values"]
            writer.writerow([row["link"], row["module"],
                             *[repr(float(vals[p])) for p in ("d", "a", "alpha")],
                             *[repr(row["distances"][i]) for i in ids]])

    final_problem = replace(template, chain=result.rounded_chain)
    _write_trajectory(out / "trajectory.csv", final_problem, result.final)
    return {
        "toolpath_hash": template.toolpath.content_hash(),
        "continuous": cont,
        "final": final,
        "feasible": bool(result.feasible),
        "assignment": result.assignment,
        "rounded_modules": [row["module"] for row in result.assignment],
    }


# ---------------------------------------------------------------------------
# comparison


def _flat_metrics(results: dict) -> dict:
    if "solution" in results:
        b = results["solution"]["breakdown"]
        return {"total": b["total"], "tracking": b["tracking"],
                "deformation": b["deformation"],
                "mean_tracking": results["solution"]["mean_tracking"]}
    if "final" in results:
        b = results["final"]["breakdown"]
        return {"total": b["total"], "tracking": b["tracking"],
                "deformation": b["deformation"],
                "mean_tracking": results["final"]["mean_tracking"]}
    if "best" in results:
        return {"deformation": results["best"]["design_cost"]}
    raise CompareError("results bundle has no comparable solution section")


def compare(dir_a, dir_b) -> dict:
    """Cost ratios and per-metric winners between two run bundles.

    Refuses to compare bundles whose toolpaths differ (hash mismatch).
    """
    res_a, res_b = load_results(dir_a), load_results(dir_b)
    if res_a.get("toolpath_hash") != res_b.get("toolpath_hash"):
        raise CompareError("toolpath hash mismatch: runs are not comparable")
    ma, mb = _flat_metrics(res_a), _flat_metrics(res_b)
    metrics = {}
    for key in sorted(set(ma) & set(mb)):
        a, b = ma[key], mb[key]
        ratio = a / b if b != 0 else np.inf
        metrics[key] = {"a": a, "b": b, "ratio": ratio,
                        "winner": "a" if a < b else ("b" if b < a else "tie")}
    deltas = _per_waypoint_deltas(dir_a, dir_b)
    return {"case_a": res_a["case"], "case_b": res_b["case"],
            "toolpath_hash": res_a["toolpath_hash"], "metrics": metrics,
            "per_waypoint": deltas}


def _per_waypoint_deltas(dir_a, dir_b):
    rows = []
    for d in (dir_a, dir_b):
        path = Path(d) / "trajectory.csv"
        if not path.exists():
            return None
        with open(path, newline="") as fh:
            rows.append(list(csv.DictReader(fh)))
    a, b = rows
    if len(a) != len(b):
        return None
    return {
        "tracking_delta": [float(x["tracking"]) - float(y["tracking"])
                           for x, y in zip(a, b)],
        "deformation_delta": [float(x["deformation"]) - float(y["deformation"])
                              for x, y in zip(a, b)],
    }
