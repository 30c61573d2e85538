"""Per-waypoint benchmark formulation: independent joint variables at every
waypoint, shared design joints, tracking as an epsilon-inequality.

This reproduces the forward-kinematics style of design optimization the
trajectory formulation is benchmarked against: subsequent robot positions
are treated as uncorrelated, so there are no controls, no defects, and no
smoothness between waypoints (that lack is the point of the comparison).
"""

from __future__ import annotations

import numpy as np

from codesign.collocation import (
    DesignProblem,
    EvaluationError,
    NlpLayout,
    Solution,
    TranscribedNlp,
    TranscriptionError,
)
from codesign.solver import SolverConfig, multi_start

DEFAULT_EPSILON = 1e-4


class FkNlp(TranscribedNlp):
    """Decision vector: q_m at each waypoint plus one design block.

    Objective: quadrature-weighted deformation plus the design extras
    (identical cost code path to the collocation form, so design-cost terms
    compare apples to apples).  Tracking enters as one inequality
    L_t(q_k, q_d) <= epsilon per waypoint, handled by the solver's
    augmented-Lagrangian machinery.
    """

    def __init__(self, problem: DesignProblem, epsilon: float):
        if epsilon <= 0:
            raise TranscriptionError(f"epsilon must be positive, got {epsilon}")
        N = len(problem.toolpath)
        chain = problem.effective_chain
        layout = NlpLayout(n_knots=N, n_moving=chain.n_moving,
                           n_design=chain.n_design, with_controls=False)
        super().__init__(problem, layout)
        self.epsilon = float(epsilon)
        self.n_ineq = N

    def objective(self, x) -> float:
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        zeros = np.zeros(self.layout.n_knots)
        _, Ld, _, _ = self._batch(self.layout.states_of(x), qd, zeros, self.tau, False)
        extra, _ = self._design_extra(qd, need_grad=False)
        return float(self.tau @ Ld + extra)

    def objective_grad(self, x) -> np.ndarray:
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        zeros = np.zeros(self.layout.n_knots)
        _, _, gx, gd = self._batch(self.layout.states_of(x), qd, zeros, self.tau, True)
        extra_grad = self._design_extra(qd, need_grad=True)[1]
        grad = np.zeros(self.layout.n_vars)
        grad[self.layout.states] = gx.ravel()
        grad[self.layout.design] = gd + extra_grad
        return grad

    def ineq_constraints(self, x) -> np.ndarray:
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        zeros = np.zeros(self.layout.n_knots)
        Lt, _, _, _ = self._batch(self.layout.states_of(x), qd, zeros, zeros, False)
        return Lt - self.epsilon

    def merit(self, x, lam_eq, lam_ineq, mu):
        # Powell-Hestenes-Rockafellar terms for g = L_t - eps <= 0; the
        # active coefficients feed straight into the batched tracking weights
        x = self.check_x(x)
        qd = self.layout.design_of(x)
        zeros = np.zeros(self.layout.n_knots)
        Lt, Ld, _, _ = self._batch(self.layout.states_of(x), qd, zeros, self.tau, False)
        g = Lt - self.epsilon
        coeff = np.maximum(0.0, lam_ineq + mu * g)
        _, _, gx, gd = self._batch(self.layout.states_of(x), qd, coeff, self.tau, True)
        extra, extra_grad = self._design_extra(qd, need_grad=True)
        f = float(self.tau @ Ld + extra)
        phi = f + float(np.sum(coeff**2 - lam_ineq**2)) / (2.0 * mu)
        grad = np.zeros(self.layout.n_vars)
        grad[self.layout.states] = gx.ravel()
        grad[self.layout.design] = gd + extra_grad
        if not np.isfinite(phi):
            raise EvaluationError("non-finite merit value")
        return phi, grad


def fk_transcribe(problem: DesignProblem, epsilon: float = DEFAULT_EPSILON) -> FkNlp:
    """Per-waypoint transcription with an epsilon tracking constraint."""
    return FkNlp(problem, epsilon)


def solve_fk(problem: DesignProblem, epsilon: float = DEFAULT_EPSILON,
             config: SolverConfig = None) -> Solution:
    """Multi-start solve of the per-waypoint benchmark formulation."""
    if config is None:
        config = SolverConfig()
    return multi_start(fk_transcribe(problem, epsilon), config)
