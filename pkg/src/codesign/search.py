"""Discrete layers above the continuous solver: enumerate-and-solve over
kinematic structures, and the relax / round / replace modular pipeline."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from codesign import costs as costs_mod
from codesign.collocation import DesignProblem, Solution, transcribe
from codesign.kinematics import KinematicChain, structure_chain
from codesign.solver import SolverConfig, minimize, multi_start

# mean per-waypoint tracking cost at or below this counts as "can track"
DEFAULT_TRACK_TOL = 1e-3

# relative slack when picking the best structure: solved costs within this
# band are treated as tied and the tie breaks lexicographically
COST_TIE_REL = 1e-4


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Module:
    """Catalog entry: fixed (d, a, alpha); theta stays the moving variable."""

    id: int
    d: float
    a: float
    alpha: float

    def dh(self) -> tuple:
        return (self.d, self.a, self.alpha)


# catalog used by the milling case study
DEFAULT_MODULES = (
    Module(1, 0.0, 0.5, 0.0),
    Module(2, 0.0, 0.5, np.pi / 2),
    Module(3, 1.0, 0.0, 0.0),
    Module(4, 1.0, 0.5, 0.0),
    Module(5, 0.5, 0.5, -np.pi / 2),
)


@dataclass(eq=False)
class StructureResult:
    structure: str
    solution: Solution = None
    feasible: bool = False
    error: str = ""

    @property
    def design_cost(self) -> float:
        if self.solution is None:
            return np.inf
        return self.solution.breakdown["deformation"]

    def __post_init__(self):
        if self.feasible and (self.solution is None or not self.solution.converged):
            raise SearchError("feasible results must come from converged solves")


def _child_config(config: SolverConfig, tag: str) -> SolverConfig:
    """Per-task solver config with a deterministic derived seed."""
    digest = hashlib.sha256(f"{config.seed}:{tag}".encode()).digest()
    return replace(config, seed=int.from_bytes(digest[:4], "little"))


def placement_prefix(chain: KinematicChain) -> tuple:
    return tuple(link for link in chain.links if link.placement)


def structure_problem(template: DesignProblem, structure: str) -> DesignProblem:
    """Swap the template's robot for a joint-type sequence.

    The placement prefix, tool transform, toolpath, weights and flags carry
    over unchanged; each structure link exposes its free DH parameters as
    design joints (theta or d moves, the rest is design).
    """
    robot = structure_chain(structure)
    chain = KinematicChain(placement_prefix(template.chain) + robot.links,
                           template.chain.base_pose, robot.flange_to_tool)
    return replace(template, chain=chain)


def _solve_structure(args):
    template, structure, config, track_tol = args
    try:
        problem = structure_problem(template, structure)
        nlp = transcribe(problem, len(problem.toolpath))
        sol = multi_start(nlp, _child_config(config, structure))
    except Exception as exc:  # recorded per structure, never aborts the batch
        return StructureResult(structure=structure, error=f"{type(exc).__name__}: {exc}")
    feasible = sol.converged and sol.mean_tracking <= track_tol
    return StructureResult(structure=structure, solution=sol, feasible=feasible)


def solve_all_structures(template: DesignProblem, structures, config: SolverConfig,
                         track_tol: float = DEFAULT_TRACK_TOL,
                         threads: int = 1) -> list:
    """One continuous multi-start solve per structure, as a parallel batch.

    Individual failures are recorded per structure and never abort the batch.
    Output is sorted by (design cost, structure) regardless of worker order.
    """
    structures = list(structures)
    if not structures:
        raise SearchError("empty structure list")
    jobs = [(template, s, config, track_tol) for s in structures]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_solve_structure, jobs))
    else:
        results = [_solve_structure(j) for j in jobs]
    results.sort(key=lambda r: (r.design_cost, r.structure))
    return results


def best_feasible(results) -> StructureResult:
    """Minimum design cost over feasible results.

    Costs within COST_TIE_REL of the minimum count as tied (solver noise),
    and ties break toward the lexicographically smallest structure.
    """
    feasible = [r for r in results if r.feasible]
    if not feasible:
        raise SearchError("no feasible structure result")
    lowest = min(r.design_cost for r in feasible)
    cutoff = lowest * (1.0 + COST_TIE_REL) + 1e-15
    return min((r for r in feasible if r.design_cost <= cutoff),
               key=lambda r: r.structure)


def modular_chain(template: DesignProblem, n_links: int) -> KinematicChain:
    """Relaxed modular robot: n revolute links with (d, a, alpha) design."""
    if n_links < 1:
        raise SearchError(f"n_links must be >= 1, got {n_links}")
    robot = structure_chain("R" * n_links)
    return KinematicChain(placement_prefix(template.chain) + robot.links,
                          template.chain.base_pose, robot.flange_to_tool)


def round_chain_to_modules(chain: KinematicChain, q_d, modules, weights):
    """Replace each link's geometric design joints by its nearest module.

    Returns (rounded chain, assignment rows).  The rounded parameters become
    fixed constants; re-rounding a rounded chain is the identity.  Ties take
    the lowest module id.
    """
    q_d = np.asarray(q_d, dtype=float)
    rows = {}
    for row, idx in enumerate(chain.design_indices):
        v = chain.variables[idx]
        if not chain.links[v.link].placement and v.param in ("d", "a", "alpha"):
            rows.setdefault(v.link, {})[v.param] = row
    catalog = [m.dh() for m in modules]
    links = list(chain.links)
    assignment = []
    for link_idx in sorted(rows):
        got = rows[link_idx]
        link = chain.links[link_idx]
        values = {p: (q_d[got[p]] if p in got else link.value(p))
                  for p in ("d", "a", "alpha")}
        best, dists = costs_mod.nearest_module(values, catalog, weights)
        chosen = modules[best]
        links[link_idx] = replace(
            link, d=chosen.d, a=chosen.a, alpha=chosen.alpha,
            design=link.design - {"d", "a", "alpha"})
        assignment.append({
            "link": link_idx,
            "module": chosen.id,
            "values": values,
            "distances": {m.id: float(dist) for m, dist in zip(modules, dists)},
        })
    rounded = KinematicChain(tuple(links), chain.base_pose, chain.flange_to_tool)
    return rounded, assignment


@dataclass(eq=False)
class ModularResult:
    continuous: Solution
    rounded_chain: KinematicChain
    final: Solution
    assignment: list
    feasible: bool


def solve_modular(template: DesignProblem, modules, n_links: int,
                  config: SolverConfig, track_tol: float = DEFAULT_TRACK_TOL) -> ModularResult:
    """Relax, round, replace.

    1. solve the continuous problem with the modular attraction cost on;
    2. round every link's design joints to the nearest catalog module;
    3. re-solve placement with the robot frozen (warm-started from step 1,
       plus the usual multi-start sweep).
    """
    if not modules:
        raise SearchError("empty module catalog")
    chain = modular_chain(template, n_links)
    relaxed = replace(template, chain=chain, modular_cost_enabled=True,
                      modules=tuple(m.dh() for m in modules))
    nlp = transcribe(relaxed, len(relaxed.toolpath))
    continuous = multi_start(nlp, _child_config(config, "modular-continuous"))

    eff = relaxed.effective_chain
    rounded, assignment = round_chain_to_modules(
        eff, continuous.design_values, modules, template.weights)

    final_problem = replace(template, chain=rounded, modular_cost_enabled=False,
                            modules=())
    final_nlp = transcribe(final_problem, len(final_problem.toolpath))
    candidates = [multi_start(final_nlp, _child_config(config, "modular-placement"))]
    warm = _warm_start(final_nlp, eff, continuous)
    if warm is not None:
        candidates.append(minimize(final_nlp, warm,
                                   _child_config(config, "modular-warm")))
    final = min(candidates,
                key=lambda s: (not s.converged, s.objective, s.diagnostics.start_index))
    feasible = final.converged and final.mean_tracking <= track_tol
    return ModularResult(continuous=continuous, rounded_chain=rounded,
                         final=final, assignment=assignment, feasible=feasible)


def _warm_start(final_nlp, relaxed_chain, continuous: Solution):
    """Carry placement values and the moving trajectory into the re-solve."""
    final_chain = final_nlp.chain
    names = relaxed_chain.design_names()
    keep = {name: val for name, val in zip(names, continuous.design_values)}
    try:
        design = np.array([keep[n] for n in final_chain.design_names()])
    except KeyError:
        return None
    x = np.zeros(final_nlp.layout.n_vars)
    x[final_nlp.layout.states] = continuous.states.ravel()
    x[final_nlp.layout.u_knot] = continuous.u_knot.ravel()
    x[final_nlp.layout.u_mid] = continuous.u_mid.ravel()
    x[final_nlp.layout.design] = design
    return np.clip(x, final_nlp.lb, final_nlp.ub)
