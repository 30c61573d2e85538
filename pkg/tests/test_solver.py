import numpy as np
import pytest

from codesign.collocation import (
    DesignProblem,
    EvaluationError,
    NlpLayout,
    Solution,
    SolverDiagnostics,
    transcribe,
)
from codesign.kinematics import DhLink, KinematicChain
from codesign.solver import (
    MultiStartError,
    SolverConfig,
    minimize,
    multi_start,
    start_vectors,
)

from test_collocation import line_path


class ToyNlp:
    """Minimal duck-typed NLP: objective f, optional linear equality Ax=b."""

    def __init__(self, f, grad, n, lb=None, ub=None, A=None, b=None, nan_at=None):
        self.f = f
        self.grad = grad
        self.layout = NlpLayout(n_knots=1, n_moving=n, n_design=0, with_controls=False)
        self.lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
        self.A = A
        self.b = b
        self.n_eq = 0 if A is None else len(b)
        self.n_ineq = 0
        self.nan_at = nan_at

    def check_x(self, x):
        return np.asarray(x, float)

    def sampling_bounds(self):
        lo = np.where(np.isfinite(self.lb), self.lb, -np.pi)
        hi = np.where(np.isfinite(self.ub), self.ub, np.pi)
        return lo, hi

    def objective(self, x):
        return self.f(x)

    def eq_constraints(self, x):
        if self.A is None:
            return np.zeros(0)
        return self.A @ x - self.b

    def ineq_constraints(self, x):
        return np.zeros(0)

    def merit(self, x, lam_eq, lam_ineq, mu):
        if self.nan_at is not None and np.linalg.norm(x - self.nan_at) < 10.0:
            raise EvaluationError("synthetic NaN")
        c = self.eq_constraints(x)
        phi = self.f(x) + lam_eq @ c + 0.5 * mu * (c @ c)
        g = self.grad(x)
        if self.A is not None:
            g = g + self.A.T @ (lam_eq + mu * c)
        return phi, g

    def build_solution(self, x, diag):
        obj = self.f(x)
        breakdown = {"tracking": obj, "deformation": 0.0, "regularization": 0.0,
                     "modular": 0.0, "total": obj}
        m = self.layout.n_moving
        return Solution(
            x=np.asarray(x, float).copy(), objective=obj, breakdown=breakdown,
            design_names=[], design_values=np.zeros(0),
            times=np.zeros(1), states=np.asarray(x, float).reshape(1, m),
            u_knot=np.zeros((0, m)), u_mid=np.zeros((0, m)),
            track_per_knot=np.zeros(1), deform_per_knot=np.zeros(1),
            diagnostics=diag,
        )


def quadratic_with_equality(c, a, b):
    c, a = np.asarray(c, float), np.asarray(a, float)
    nlp = ToyNlp(
        f=lambda x: float((x - c) @ (x - c)),
        grad=lambda x: 2.0 * (x - c),
        n=len(c),
        A=a.reshape(1, -1),
        b=np.array([b]),
    )
    # analytic projection of c onto the constraint plane
    x_star = c + a * (b - a @ c) / (a @ a)
    return nlp, x_star


class TestMinimize:
    def test_projects_onto_linear_equality(self):
        nlp, x_star = quadratic_with_equality([1.0, 2.0, -0.5], [1.0, 1.0, 1.0], 1.0)
        cfg = SolverConfig(constraint_tolerance=1e-10, gradient_tolerance=1e-9,
                           max_outer_iterations=30)
        sol = minimize(nlp, np.zeros(3), cfg)
        assert np.abs(sol.x - x_star).max() <= 1e-8
        assert sol.converged
        assert sol.diagnostics.constraint_violation <= 1e-10

    def test_objective_not_above_feasible_init(self):
        nlp, _ = quadratic_with_equality([0.3, -0.2], [1.0, -1.0], 0.0)
        x0 = np.array([0.7, 0.7])  # feasible
        sol = minimize(nlp, x0, SolverConfig())
        assert sol.objective <= nlp.objective(x0) + 1e-12

    def test_merit_nonincreasing_per_outer(self):
        nlp, _ = quadratic_with_equality([1.0, 2.0, -0.5], [1.0, 1.0, 1.0], 1.0)
        sol = minimize(nlp, np.zeros(3), SolverConfig())
        for before, after in sol.diagnostics.merit_history:
            assert after <= before + 1e-10

    def test_bounds_respected(self):
        nlp = ToyNlp(f=lambda x: float(x @ x), grad=lambda x: 2 * x, n=2,
                     lb=[0.5, -1.0], ub=[2.0, 1.0])
        sol = minimize(nlp, np.array([1.5, 0.2]), SolverConfig())
        assert np.all(sol.x >= nlp.lb - 1e-12) and np.all(sol.x <= nlp.ub + 1e-12)
        assert sol.x[0] == pytest.approx(0.5, abs=1e-8)

    def test_deterministic_rerun(self):
        problem = DesignProblem(
            chain=KinematicChain((DhLink(kind="revolute", a=0.5,
                                         design=frozenset({"a"})),)),
            toolpath=line_path(n=5),
        )
        nlp = transcribe(problem, 5)
        cfg = SolverConfig(multi_start_count=3, seed=11)
        s1 = multi_start(nlp, cfg)
        s2 = multi_start(nlp, cfg)
        np.testing.assert_array_equal(s1.x, s2.x)
        assert s1.objective == s2.objective

    def test_nan_aborts_with_diagnostic(self):
        nlp = ToyNlp(f=lambda x: float(x @ x), grad=lambda x: 2 * x, n=2,
                     nan_at=np.zeros(2))
        with pytest.raises(EvaluationError):
            minimize(nlp, np.array([0.1, 0.1]), SolverConfig())


class TestMultiStart:
    def test_single_start_equals_midpoint_minimize(self):
        nlp = ToyNlp(f=lambda x: float((x - 0.3) @ (x - 0.3)), grad=lambda x: 2 * (x - 0.3),
                     n=2, lb=[-1, -1], ub=[1, 1])
        cfg = SolverConfig(multi_start_count=1, seed=5)
        sol_ms = multi_start(nlp, cfg)
        sol_mid = minimize(nlp, start_vectors(nlp, cfg)[0], cfg, start_index=0)
        np.testing.assert_array_equal(sol_ms.x, sol_mid.x)

    def test_convex_starts_agree(self):
        # convex problem: all starts land on the same optimum
        nlp, _ = quadratic_with_equality([0.5, -0.5], [1.0, 2.0], 0.3)
        cfg = SolverConfig(multi_start_count=4, seed=3)
        sols = [minimize(nlp, x0, cfg, start_index=i)
                for i, x0 in enumerate(start_vectors(nlp, cfg))]
        objs = [s.objective for s in sols]
        assert max(objs) - min(objs) <= 1e-6

    def test_two_well_finds_lower_well(self):
        # wells near +-1; the linear tilt makes x=-1 strictly deeper
        def f(x):
            return float((x[0] ** 2 - 1.0) ** 2 + 0.1 * x[0])

        def grad(x):
            return np.array([4.0 * x[0] * (x[0] ** 2 - 1.0) + 0.1])

        nlp = ToyNlp(f=f, grad=grad, n=1, lb=[-2.0], ub=[2.0])
        sol = multi_start(nlp, SolverConfig(multi_start_count=8, seed=2))
        assert sol.x[0] == pytest.approx(-1.0124, abs=1e-2)

    def test_all_failed_raises_structured(self):
        nlp = ToyNlp(f=lambda x: float(x @ x), grad=lambda x: 2 * x, n=2,
                     lb=[-1, -1], ub=[1, 1], nan_at=np.zeros(2))
        with pytest.raises(MultiStartError) as err:
            multi_start(nlp, SolverConfig(multi_start_count=3, seed=0))
        assert len(err.value.failures) == 3


class TestGridOracle:
    def test_placement_shift_matches_grid_search(self):
        # 2R arm + one base x-shift design joint on a short line path:
        # a coarse full-solve grid over the shift bounds the achievable cost
        shift = DhLink(kind="fixed", design=frozenset({"a"}),
                       bounds={"a": (-1.0, 1.0)}, placement=True)
        arm = (DhLink(kind="revolute", a=0.5), DhLink(kind="revolute", a=0.5))
        path = line_path(n=12)
        cfg = SolverConfig(multi_start_count=6, seed=7)

        def frozen_cost(v):
            chain = KinematicChain((shift,) + arm).with_design([v])
            problem = DesignProblem(chain=chain, toolpath=path)
            nlp = transcribe(problem, 12)
            return minimize(nlp, np.zeros(nlp.layout.n_vars), cfg).objective

        grid = np.linspace(-1.0, 1.0, 21)
        oracle_best = min(frozen_cost(v) for v in grid)

        problem = DesignProblem(chain=KinematicChain((shift,) + arm), toolpath=path)
        nlp = transcribe(problem, 12)
        sol = multi_start(nlp, cfg)
        assert sol.objective <= oracle_best * 1.01


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(max_outer_iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(constraint_tolerance=2.0)
        with pytest.raises(ValueError):
            SolverConfig(penalty_growth=0.5)
