"""Direct-collocation transcription: cubic moving-joint trajectories between
toolpath-aligned knots, design joints as single degree-0 variables.

The dynamics are q_m' = u.  Hermite-Simpson defects tie neighbouring knot
states to knot and midpoint controls; keeping each design joint as one
decision variable enforces its zero time derivative exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from codesign import costs as costs_mod
from codesign import kernels
from codesign.costs import CostWeights, StiffnessModel
from codesign.kinematics import KinematicChain, PRISMATIC, REVOLUTE
from codesign.toolpath import Toolpath

# Default decision-variable boxes (config-overridable via DesignProblem).
DEFAULT_VELOCITY_LIMIT = 2.0
DEFAULT_POSITION_LIMIT_REV = 2.0 * np.pi
DEFAULT_POSITION_LIMIT_PRISM = 3.0


class TranscriptionError(ValueError):
    pass


class EvaluationError(RuntimeError):
    """Objective or constraint evaluation produced non-finite values."""


def _apply_modes(chain: KinematicChain, optimize_design: bool,
                 optimize_placement: bool) -> KinematicChain:
    """Freeze design flags the requested case does not optimize."""
    links = []
    for link in chain.links:
        active = optimize_placement if link.placement else optimize_design
        links.append(link if active else replace(link, design=frozenset()))
    return KinematicChain(tuple(links), chain.base_pose, chain.flange_to_tool)


@dataclass(eq=False)
class DesignProblem:
    """Chain template + toolpath + weights + bounds + mode flags.

    ``chain`` carries the full design parameterization (placement prefix
    included when the scenario has one); the mode flags select which design
    groups stay free.  ``effective_chain`` is what the NLP actually sees.
    """

    chain: KinematicChain
    toolpath: Toolpath
    weights: CostWeights = field(default_factory=CostWeights)
    stiffness: StiffnessModel = field(default_factory=StiffnessModel)
    optimize_design: bool = True
    optimize_placement: bool = True
    modular_cost_enabled: bool = False
    modules: tuple = ()
    velocity_limit: float = DEFAULT_VELOCITY_LIMIT
    position_limit_rev: float = DEFAULT_POSITION_LIMIT_REV
    position_limit_prism: float = DEFAULT_POSITION_LIMIT_PRISM

    def __post_init__(self):
        self.effective_chain = _apply_modes(self.chain, self.optimize_design,
                                            self.optimize_placement)
        if self.effective_chain.n_moving < 1:
            raise TranscriptionError("problem needs at least one moving joint")
        if self.modular_cost_enabled and not self.modules:
            raise TranscriptionError("modular cost enabled but no module catalog given")
        self.modules = tuple(tuple(m) for m in self.modules)

    def moving_bounds(self) -> np.ndarray:
        """(n_moving, 2) position boxes by joint kind."""
        chain = self.effective_chain
        out = np.empty((chain.n_moving, 2))
        for row, idx in enumerate(chain.moving_indices):
            v = chain.variables[idx]
            kind = chain.links[v.link].kind
            lim = self.position_limit_rev if kind == REVOLUTE else self.position_limit_prism
            out[row] = (-lim, lim)
        return out


@dataclass(eq=False)
class NlpLayout:
    """Index map of the flat decision vector."""

    n_knots: int
    n_moving: int
    n_design: int
    with_controls: bool

    def __post_init__(self):
        N, m = self.n_knots, self.n_moving
        self.n_states = N * m
        self.n_uknot = N * m if self.with_controls else 0
        self.n_umid = (N - 1) * m if self.with_controls else 0
        self.states = slice(0, self.n_states)
        self.u_knot = slice(self.n_states, self.n_states + self.n_uknot)
        self.u_mid = slice(self.u_knot.stop, self.u_knot.stop + self.n_umid)
        self.design = slice(self.u_mid.stop, self.u_mid.stop + self.n_design)
        self.n_vars = self.design.stop

    def states_of(self, x) -> np.ndarray:
        return x[self.states].reshape(self.n_knots, self.n_moving)

    def u_knot_of(self, x) -> np.ndarray:
        return x[self.u_knot].reshape(-1, self.n_moving)

    def u_mid_of(self, x) -> np.ndarray:
        return x[self.u_mid].reshape(-1, self.n_moving)

    def design_of(self, x) -> np.ndarray:
        return x[self.design]


@dataclass(eq=False)
class SolverDiagnostics:
    outer_iterations: int = 0
    inner_iterations: int = 0
    constraint_violation: float = np.inf
    gradient_norm: float = np.inf
    converged: bool = False
    merit_history: list = field(default_factory=list)
    start_index: int = -1
    message: str = ""
    wall_time: float = 0.0  # volatile; kept out of reproducible result files


@dataclass(eq=False)
class Solution:
    """Optimized design values plus the moving trajectory and cost breakdown."""

    x: np.ndarray
    objective: float
    breakdown: dict
    design_names: list
    design_values: np.ndarray
    times: np.ndarray
    states: np.ndarray
    u_knot: np.ndarray
    u_mid: np.ndarray
    track_per_knot: np.ndarray
    deform_per_knot: np.ndarray
    diagnostics: SolverDiagnostics

    def __post_init__(self):
        parts = (self.breakdown["tracking"] + self.breakdown["deformation"]
                 + self.breakdown["regularization"] + self.breakdown["modular"])
        if abs(self.breakdown["total"] - parts) > 1e-10 * max(1.0, abs(parts)):
            raise ValueError("cost breakdown does not sum to the reported total")

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    @property
    def mean_tracking(self) -> float:
        return float(np.mean(self.track_per_knot))


class TranscribedNlp:
    """A transcribed problem: flat decision vector, objective and gradient,
    equality defects, one-sided inequality constraints, simple bounds.

    Shared base for the collocation and the per-waypoint FK forms; the solver
    only touches this surface.
    """

    def __init__(self, problem: DesignProblem, layout: NlpLayout):
        self.problem = problem
        self.layout = layout
        chain = problem.effective_chain
        self.chain = chain
        self.packed = chain.packed()
        path = problem.toolpath
        self.times = path.times
        self.st = path.positions
        self.sz = path.axes
        self.force = np.array([costs_mod.milling_force(w.tangent, problem.weights.alpha_force)
                               for w in path])
        self.kinv = 1.0 / problem.stiffness.for_chain(chain)
        h = np.diff(self.times)
        tau = np.zeros(len(path))
        tau[:-1] += h / 2.0
        tau[1:] += h / 2.0
        self.tau = tau
        self.lb, self.ub = self._build_bounds()
        self.n_eq = 0
        self.n_ineq = 0

    # -- bounds ---------------------------------------------------------
    def _build_bounds(self):
        lo = np.full(self.layout.n_vars, -np.inf)
        hi = np.full(self.layout.n_vars, np.inf)
        mb = self.problem.moving_bounds()
        N = self.layout.n_knots
        lo[self.layout.states] = np.tile(mb[:, 0], N)
        hi[self.layout.states] = np.tile(mb[:, 1], N)
        if self.layout.with_controls:
            v = self.problem.velocity_limit
            lo[self.layout.u_knot.start:self.layout.u_mid.stop] = -v
            hi[self.layout.u_knot.start:self.layout.u_mid.stop] = v
        db = self.chain.design_bounds()
        lo[self.layout.design] = db[:, 0]
        hi[self.layout.design] = db[:, 1]
        return lo, hi

    def sampling_bounds(self):
        """Finite surrogate boxes for drawing starts (angles default to +-pi)."""
        lo = np.where(np.isfinite(self.lb), self.lb, -np.pi)
        hi = np.where(np.isfinite(self.ub), self.ub, np.pi)
        return lo, hi

    def check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.layout.n_vars,):
            raise TranscriptionError(
                f"expected decision vector of length {self.layout.n_vars}, got {x.shape}")
        return x

    # -- shared cost machinery -------------------------------------------
    def _design_extra(self, qd, need_grad):
        """Regularization plus optional modular cost on the design block."""
        w = self.problem.weights
        value = costs_mod.size_regularization(self.chain, qd, w.lambda_reg)
        grad = (costs_mod.size_regularization_grad(self.chain, qd, w.lambda_reg)
                if need_grad else None)
        if self.problem.modular_cost_enabled:
            if need_grad:
                mc, mg = costs_mod.modular_cost_grad(self.chain, qd, self.problem.modules, w)
                grad = grad + w.lambda_mod * mg
            else:
                mc = costs_mod.modular_cost(self.chain, qd, self.problem.modules, w)
            value += w.lambda_mod * mc
        return value, grad

    def _batch(self, states, qd, wt, wd, need_grad):
        out = kernels.batch_eval(self.packed, states, qd, self.st, self.sz,
                                 self.force, self.kinv, wt, wd, need_grad)
        if not (np.all(np.isfinite(out[0])) and np.all(np.isfinite(out[1]))):
            raise EvaluationError("non-finite cost encountered during evaluation")
        return out

    def cost_breakdown(self, x) -> dict:
        x = self.check_x(x)
        states = self.states_at_knots(x)
        qd = self.layout.design_of(x)
        Lt, Ld, _, _ = self._batch(states, qd, self.tau, self.tau, False)
        w = self.problem.weights
        reg = costs_mod.size_regularization(self.chain, qd, w.lambda_reg)
        mod = (w.lambda_mod * costs_mod.modular_cost(self.chain, qd, self.problem.modules, w)
               if self.problem.modular_cost_enabled else 0.0)
        tracking = float(w.tracking * (self.tau @ Lt))
        deformation = float(self.tau @ Ld)
        return {
            "tracking": tracking,
            "deformation": deformation,
            "regularization": float(reg),
            "modular": float(mod),
            "total": tracking + deformation + float(reg) + float(mod),
            "tracking_integral_unweighted": float(self.tau @ Lt),
            "mean_tracking": float(np.mean(Lt)),
        }

    def per_knot_costs(self, x):
        x = self.check_x(x)
        Lt, Ld, _, _ = self._batch(self.states_at_knots(x), self.layout.design_of(x),
                                   self.tau, self.tau, False)
        return Lt, Ld

    def build_solution(self, x, diagnostics: SolverDiagnostics) -> Solution:
        x = self.check_x(x)
        layout = self.layout
        Lt, Ld = self.per_knot_costs(x)
        return Solution(
            x=x.copy(),
            objective=self.objective(x),
            breakdown=self.cost_breakdown(x),
            design_names=self.chain.design_names(),
            design_values=layout.design_of(x).copy(),
            times=self.times.copy(),
            states=self.states_at_knots(x).copy(),
            u_knot=layout.u_knot_of(x).copy(),
            u_mid=layout.u_mid_of(x).copy(),
            track_per_knot=Lt,
            deform_per_knot=Ld,
            diagnostics=diagnostics,
        )

    # -- surface the subclasses fill in ----------------------------------
    def states_at_knots(self, x) -> np.ndarray:
        return self.layout.states_of(x)

    def objective(self, x) -> float:
        raise NotImplementedError

    def objective_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def eq_constraints(self, x) -> np.ndarray:
        return np.zeros(0)

    def ineq_constraints(self, x) -> np.ndarray:
        return np.zeros(0)

    def merit(self, x, lam_eq, lam_ineq, mu):
        """Augmented-Lagrangian value and gradient in one fused pass."""
        raise NotImplementedError

    def evaluate(self, x):
        """(objective, defect vector); raises EvaluationError on NaN."""
        x = self.check_x(x)
        obj = self.objective(x)
        c = self.eq_constraints(x)
        if not (np.isfinite(obj) and np.all(np.isfinite(c))):
            raise EvaluationError("non-finite objective or defects")
        return obj, c


class CollocationNlp(TranscribedNlp):
    """Hermite-Simpson transcription of the co-design trajectory problem."""

    def __init__(self, problem: DesignProblem, tracking_only: bool = False):
        N = len(problem.toolpath)
        chain = problem.effective_chain
        layout = NlpLayout(n_knots=N, n_moving=chain.n_moving,
                           n_design=chain.n_design, with_controls=True)
        super().__init__(problem, layout)
        self.h = np.diff(self.times)
        self.n_eq = (N - 1) * layout.n_moving
        # tracking-only variant: deformation and design extras off; used by
        # the solver's presolve to reach the tracking basin first
        self.tracking_only = tracking_only
        self._deform_scale = 0.0 if tracking_only else 1.0

    def tracking_stage(self) -> "CollocationNlp":
        if self.tracking_only:
            return self
        return CollocationNlp(self.problem, tracking_only=True)

    # defects are linear: q_{k+1} - q_k - h/6 (u_k + 4 u_mid + u_{k+1})
    def eq_constraints(self, x) -> np.ndarray:
        x = self.check_x(x)
        S = self.layout.states_of(x)
        U = self.layout.u_knot_of(x)
        M = self.layout.u_mid_of(x)
        c = S[1:] - S[:-1] - (self.h / 6.0)[:, None] * (U[:-1] + 4.0 * M + U[1:])
        return c.ravel()

    def _eq_grad_accum(self, V, out):
        """out += A^T V for the linear defect map (V of shape (N-1, n_m))."""
        layout = self.layout
        gs = out[layout.states].reshape(layout.n_knots, layout.n_moving)
        gu = out[layout.u_knot].reshape(layout.n_knots, layout.n_moving)
        gm = out[layout.u_mid].reshape(layout.n_knots - 1, layout.n_moving)
        coeff = (self.h / 6.0)[:, None] * V
        gs[1:] += V
        gs[:-1] -= V
        gu[:-1] -= coeff
        gu[1:] -= coeff
        gm -= 4.0 * coeff

    def objective(self, x) -> float:
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        w = self.problem.weights
        s = self._deform_scale
        Lt, Ld, _, _ = self._batch(self.layout.states_of(x), qd, self.tau, self.tau, False)
        extra = 0.0 if self.tracking_only else self._design_extra(qd, need_grad=False)[0]
        return float(w.tracking * (self.tau @ Lt) + s * (self.tau @ Ld) + extra)

    def objective_grad(self, x) -> np.ndarray:
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        w = self.problem.weights
        s = self._deform_scale
        _, _, gx, gd = self._batch(self.layout.states_of(x), qd,
                                   w.tracking * self.tau, s * self.tau, True)
        extra_grad = (np.zeros(self.layout.n_design) if self.tracking_only
                      else self._design_extra(qd, need_grad=True)[1])
        grad = np.zeros(self.layout.n_vars)
        grad[self.layout.states] = gx.ravel()
        grad[self.layout.design] = gd + extra_grad
        return grad

    def merit(self, x, lam_eq, lam_ineq, mu):
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        w = self.problem.weights
        s = self._deform_scale
        Lt, Ld, gx, gd = self._batch(self.layout.states_of(x), qd,
                                     w.tracking * self.tau, s * self.tau, True)
        if self.tracking_only:
            extra, extra_grad = 0.0, np.zeros(self.layout.n_design)
        else:
            extra, extra_grad = self._design_extra(qd, need_grad=True)
        f = float(w.tracking * (self.tau @ Lt) + s * (self.tau @ Ld) + extra)
        c = self.eq_constraints(x)
        phi = f + lam_eq @ c + 0.5 * mu * (c @ c)
        grad = np.zeros(self.layout.n_vars)
        grad[self.layout.states] = gx.ravel()
        grad[self.layout.design] = gd + extra_grad
        V = (lam_eq + mu * c).reshape(self.layout.n_knots - 1, self.layout.n_moving)
        self._eq_grad_accum(V, grad)
        if not np.isfinite(phi):
            raise EvaluationError("non-finite merit value")
        return phi, grad


def transcribe(problem: DesignProblem, n_knots: int) -> CollocationNlp:
    """Transcribe with knots aligned 1:1 to the toolpath waypoints."""
    if n_knots < 2:
        raise TranscriptionError(f"need at least 2 knots, got {n_knots}")
    if n_knots != len(problem.toolpath):
        raise TranscriptionError(
            f"knots ({n_knots}) must match the {len(problem.toolpath)}-waypoint toolpath; "
            "resample the toolpath instead")
    return CollocationNlp(problem)


def evaluate(nlp: TranscribedNlp, x):
    """(objective scalar, defect vector) at a decision vector."""
    return nlp.evaluate(x)


def initial_vector(nlp: TranscribedNlp, design_values) -> np.ndarray:
    """Canonical start: moving joints and controls at zero, design as given."""
    x = np.zeros(nlp.layout.n_vars)
    x[nlp.layout.design] = design_values
    return np.clip(x, nlp.lb, nlp.ub)


def hermite_interpolate(times, states, u_knot, t):
    """Cubic Hermite evaluation of the knot trajectory at times t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
    h = (times[k + 1] - times[k])[:, None]
    xi = ((t - times[k]) / (times[k + 1] - times[k]))[:, None]
    h00 = 2 * xi**3 - 3 * xi**2 + 1
    h10 = xi**3 - 2 * xi**2 + xi
    h01 = -2 * xi**3 + 3 * xi**2
    h11 = xi**3 - xi**2
    return (h00 * states[k] + h10 * h * u_knot[k]
            + h01 * states[k + 1] + h11 * h * u_knot[k + 1])
