"""Gradient-based solve layer: augmented Lagrangian with a quasi-Newton
bound-constrained inner solver (L-BFGS-B), plus deterministic multi-start.

Equality defects use the classic multiplier update lam += mu c; one-sided
inequalities g <= 0 use the Powell-Hestenes-Rockafellar form.  Everything is
deterministic for a fixed seed and config.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from codesign.collocation import EvaluationError, Solution, SolverDiagnostics, initial_vector


class SolverError(RuntimeError):
    pass


class MultiStartError(SolverError):
    """Every start failed with an evaluation error."""

    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"start {i}: {msg}" for i, msg in failures)
        super().__init__(f"all {len(failures)} starts failed: {lines}")


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iterations: int = 12
    max_inner_iterations: int = 500
    constraint_tolerance: float = 1e-6
    gradient_tolerance: float = 1e-6
    penalty_growth: float = 10.0
    multi_start_count: int = 8
    seed: int = 0
    initial_penalty: float = 10.0
    # warm up with a tracking-only solve when the problem offers one; the
    # deformation term's gradient at far-from-path postures otherwise traps
    # the combined descent in fold-the-arm basins
    tracking_presolve_outers: int = 3

    def __post_init__(self):
        if min(self.max_outer_iterations, self.max_inner_iterations,
               self.multi_start_count) < 1:
            raise ValueError("iteration and start counts must be positive")
        if not (0 < self.constraint_tolerance < 1 and 0 < self.gradient_tolerance < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.penalty_growth <= 1 or self.initial_penalty <= 0:
            raise ValueError("penalty parameters must be positive (growth > 1)")
        if self.tracking_presolve_outers < 0:
            raise ValueError("tracking_presolve_outers must be >= 0")


def _violation(c_eq, g_ineq) -> float:
    v = 0.0
    if c_eq.size:
        v = max(v, float(np.abs(c_eq).max()))
    if g_ineq.size:
        v = max(v, float(np.maximum(g_ineq, 0.0).max()))
    return v


def _projected_gradient_norm(x, grad, lb, ub) -> float:
    return float(np.abs(x - np.clip(x - grad, lb, ub)).max())


def _al_loop(nlp, x, config: SolverConfig, max_outer: int, diag: SolverDiagnostics):
    """Augmented-Lagrangian iterations on one NLP; returns the final and the
    best-seen iterate plus the convergence flag.

    The objective is normalized by max(1, |f|) at entry, so
    gradient_tolerance reads relative to the initial cost scale.
    """
    lam_eq = np.zeros(nlp.n_eq)
    lam_in = np.zeros(nlp.n_ineq)
    mu = config.initial_penalty
    scale = 1.0 / max(1.0, abs(nlp.objective(x)))

    def scaled_merit(z, l_eq, l_in, m):
        # s f + l c + m/2 c^2 == s * merit(z, l/s, l_in/s, m/s)
        phi, grad = nlp.merit(z, l_eq / scale, l_in / scale, m / scale)
        return scale * phi, scale * grad

    best_x = x.copy()
    best_obj = np.inf
    best_viol = np.inf
    prev_viol = np.inf
    converged = False

    for _ in range(max_outer):
        merit0, _ = scaled_merit(x, lam_eq, lam_in, mu)

        res = scipy_minimize(
            scaled_merit, x, args=(lam_eq, lam_in, mu), jac=True, method="L-BFGS-B",
            bounds=np.column_stack([nlp.lb, nlp.ub]),
            options={"maxiter": config.max_inner_iterations,
                     "ftol": 1e-16, "gtol": config.gradient_tolerance * 0.1},
        )
        x = np.clip(res.x, nlp.lb, nlp.ub)
        diag.inner_iterations += int(res.nit)
        diag.merit_history.append((float(merit0), float(res.fun)))

        obj = nlp.objective(x)
        c_eq = nlp.eq_constraints(x)
        g_in = nlp.ineq_constraints(x)
        viol = _violation(c_eq, g_in)

        # remember the best iterate: feasibility first, then objective
        feas_ok = viol <= config.constraint_tolerance
        best_ok = best_viol <= config.constraint_tolerance
        if (feas_ok and (not best_ok or obj < best_obj)) or \
           (not best_ok and (viol, obj) < (best_viol, best_obj)):
            best_x, best_obj, best_viol = x.copy(), obj, viol

        # first-order multiplier updates
        lam_eq = lam_eq + mu * c_eq
        lam_in = np.maximum(0.0, lam_in + mu * g_in)

        _, grad_L = scaled_merit(x, lam_eq, lam_in, mu)
        pg = _projected_gradient_norm(x, grad_L, nlp.lb, nlp.ub)
        diag.outer_iterations += 1
        diag.constraint_violation = viol
        diag.gradient_norm = pg

        if viol <= config.constraint_tolerance and pg <= config.gradient_tolerance:
            converged = True
            best_x = x.copy()
            break

        if viol > 0.25 * prev_viol and viol > config.constraint_tolerance:
            mu *= config.penalty_growth
        prev_viol = viol

    return x, best_x, converged


def minimize(nlp, init, config: SolverConfig, start_index: int = -1) -> Solution:
    """Augmented-Lagrangian minimization from one starting point.

    When the NLP offers a tracking-only stage, a short presolve on it warms
    up the iterate before the full solve.  Returns the best iterate seen
    (lowest objective among the most feasible), with converged=True iff the
    defects meet constraint_tolerance and the projected gradient of the
    normalized augmented Lagrangian meets gradient_tolerance.  Evaluation
    failures (NaN) abort with EvaluationError.
    """
    t_start = time.perf_counter()
    x = np.clip(np.asarray(init, dtype=float), nlp.lb, nlp.ub)
    nlp.check_x(x)

    diag = SolverDiagnostics(start_index=start_index)
    stage = getattr(nlp, "tracking_stage", None)
    if stage is not None and config.tracking_presolve_outers > 0:
        pre_nlp = stage()
        if pre_nlp is not nlp:
            x, _, _ = _al_loop(pre_nlp, x, config,
                               config.tracking_presolve_outers, diag)

    _, best_x, converged = _al_loop(nlp, x, config, config.max_outer_iterations, diag)

    diag.converged = converged
    diag.message = "converged" if converged else "max outer iterations reached"
    diag.wall_time = time.perf_counter() - t_start
    return nlp.build_solution(best_x, diag)


def start_vectors(nlp, config: SolverConfig):
    """Deterministic multi-start initial points.

    Start 0 puts the design joints at their (sampling-box) bound midpoints;
    later starts draw them uniformly inside the box.  Moving joints and
    controls always start at zero.
    """
    lo, hi = nlp.sampling_bounds()
    d = nlp.layout.design
    rng = np.random.default_rng(config.seed)
    starts = [initial_vector(nlp, (lo[d] + hi[d]) / 2.0)]
    for _ in range(config.multi_start_count - 1):
        starts.append(initial_vector(nlp, rng.uniform(lo[d], hi[d])))
    return starts


def multi_start(nlp, config: SolverConfig) -> Solution:
    """Best Solution over multi_start_count starts.

    Converged solutions win over non-converged ones; ties break by lower
    total objective, then lower start index.  If every start raises an
    evaluation error, a MultiStartError lists the per-start diagnostics.
    """
    solutions = []
    failures = []
    for i, x0 in enumerate(start_vectors(nlp, config)):
        try:
            solutions.append(minimize(nlp, x0, config, start_index=i))
        except EvaluationError as exc:
            failures.append((i, str(exc)))
    if not solutions:
        raise MultiStartError(failures)
    return min(solutions,
               key=lambda s: (not s.converged, s.objective, s.diagnostics.start_index))


def solve(problem, config: SolverConfig) -> Solution:
    """Transcribe + multi-start solve of the collocation form."""
    from codesign.collocation import transcribe

    nlp = transcribe(problem, len(problem.toolpath))
    return multi_start(nlp, config)
