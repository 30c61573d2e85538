import numpy as np
import pytest

from codesign.collocation import (
    DesignProblem,
    TranscriptionError,
    evaluate,
    hermite_interpolate,
    initial_vector,
    transcribe,
)
from codesign.costs import (
    CostWeights,
    StiffnessModel,
    deformation_cost,
    modular_cost,
    size_regularization,
    tracking_cost,
)
from codesign.kinematics import DhLink, KinematicChain, forward_kinematics, with_placement
from codesign.toolpath import Toolpath, Waypoint, figure_eight

from test_costs import TABLE_MODULES


def line_path(n=12, start=(0.3, 0.4, 0.0), end=(0.9, 0.4, 0.0), duration=4.0):
    start, end = np.asarray(start, float), np.asarray(end, float)
    tangent = (end - start) / duration
    pts = [Waypoint(t=duration * k / (n - 1),
                    position=start + (end - start) * k / (n - 1),
                    target_axis=(0, 0, 1), tangent=tangent) for k in range(n)]
    return Toolpath(tuple(pts))


def rr_chain(design=False):
    # planar 2R arm working in the z=0 plane, tool z up
    flags = frozenset({"a"}) if design else frozenset()
    return KinematicChain((
        DhLink(kind="revolute", a=0.5, design=flags),
        DhLink(kind="revolute", a=0.5, design=flags),
    ))


def small_problem(n=6, design=True, placement=False, modules=False):
    chain = rr_chain(design=design)
    if placement:
        chain = with_placement(chain, cuboid=((-1, 1), (-1, 1), (-0.5, 0.5)))
    return DesignProblem(
        chain=chain,
        toolpath=line_path(n=n),
        weights=CostWeights(tracking=100.0, alpha_force=10.0),
        stiffness=StiffnessModel(),
        optimize_placement=placement,
        modular_cost_enabled=modules,
        modules=TABLE_MODULES if modules else (),
    )


class TestLayout:
    def test_single_joint_three_knots(self):
        chain = KinematicChain((DhLink(kind="revolute", a=0.5,
                                       design=frozenset({"d", "a"})),))
        problem = DesignProblem(chain=chain, toolpath=line_path(n=3))
        nlp = transcribe(problem, 3)
        # 3 states + (3 knot + 2 midpoint) controls + 2 design
        assert nlp.layout.n_vars == 3 + 5 + 2
        assert nlp.n_eq == 2

    def test_knot_waypoint_mismatch(self):
        problem = small_problem(n=6)
        with pytest.raises(TranscriptionError):
            transcribe(problem, 7)

    def test_needs_moving_joint(self):
        from codesign.kinematics import placement_links

        chain = KinematicChain(placement_links())
        with pytest.raises(TranscriptionError):
            DesignProblem(chain=chain, toolpath=line_path())

    def test_defect_count(self):
        problem = small_problem(n=6)
        nlp = transcribe(problem, 6)
        assert nlp.n_eq == (6 - 1) * 2


class TestDefects:
    def test_constant_state_zero_control(self):
        nlp = transcribe(small_problem(n=6), 6)
        x = initial_vector(nlp, np.full(nlp.layout.n_design, 0.4))
        x[nlp.layout.states] = np.tile([0.3, -0.2], 6)
        np.testing.assert_array_equal(nlp.eq_constraints(x), 0.0)

    def test_defect_linear_in_state(self):
        nlp = transcribe(small_problem(n=6), 6)
        rng = np.random.default_rng(0)
        x = rng.normal(size=nlp.layout.n_vars)
        c0 = nlp.eq_constraints(x)
        delta = 0.37
        x2 = x.copy()
        x2[nlp.layout.states.start + 2 * 2] += delta  # state of joint 0 at knot 2
        c1 = nlp.eq_constraints(x2)
        diff = c1 - c0
        # exactly two defect entries touched, by +delta and -delta
        nz = np.nonzero(diff)[0]
        assert len(nz) == 2
        np.testing.assert_allclose(np.sort(diff[nz]), [-delta, delta], atol=1e-14)

    def test_sparsity_design_not_in_defects(self):
        nlp = transcribe(small_problem(n=6), 6)
        rng = np.random.default_rng(1)
        x = rng.normal(size=nlp.layout.n_vars)
        c0 = nlp.eq_constraints(x)
        x[nlp.layout.design] += rng.normal(size=nlp.layout.n_design)
        np.testing.assert_array_equal(nlp.eq_constraints(x), c0)

    def test_sparsity_defect_depends_on_own_segment(self):
        nlp = transcribe(small_problem(n=6), 6)
        rng = np.random.default_rng(2)
        x = rng.normal(size=nlp.layout.n_vars)
        c0 = nlp.eq_constraints(x).reshape(5, 2)
        # perturb segment 4's variables: only defect row 4 may change
        x2 = x.copy()
        S = nlp.layout.states_of(x2)
        U = nlp.layout.u_knot_of(x2)
        M = nlp.layout.u_mid_of(x2)
        S[4] += 0.1
        U[4] -= 0.2
        M[4] += 0.3
        c1 = nlp.eq_constraints(x2).reshape(5, 2)
        assert np.abs(c1[:3] - c0[:3]).max() == 0.0
        assert np.abs(c1[3:] - c0[3:]).max() > 0.0


class TestObjective:
    def quadrature_oracle(self, nlp, x):
        """Independent recomputation through the public cost functions."""
        problem = nlp.problem
        chain = problem.effective_chain
        states = nlp.layout.states_of(x)
        qd = nlp.layout.design_of(x)
        times = problem.toolpath.times
        h = np.diff(times)
        tau = np.zeros(len(times))
        tau[:-1] += h / 2
        tau[1:] += h / 2
        total = 0.0
        for k, w in enumerate(problem.toolpath):
            q = chain.assemble(states[k], qd)
            pose = forward_kinematics(chain, q)
            lt = tracking_cost(pose, w)
            ld = deformation_cost(chain, q, w, problem.weights, problem.stiffness)
            total += tau[k] * (problem.weights.tracking * lt + ld)
        total += size_regularization(chain, qd, problem.weights.lambda_reg)
        if problem.modular_cost_enabled:
            total += problem.weights.lambda_mod * modular_cost(
                chain, qd, problem.modules, problem.weights)
        return total

    def test_matches_independent_quadrature(self):
        rng = np.random.default_rng(3)
        for modules in (False, True):
            nlp = transcribe(small_problem(n=8, modules=modules), 8)
            for _ in range(5):
                x = rng.normal(size=nlp.layout.n_vars)
                assert nlp.objective(x) == pytest.approx(
                    self.quadrature_oracle(nlp, x), abs=1e-10, rel=1e-12)

    def test_perfect_tracking_leaves_design_cost(self):
        # a trajectory pinned on the toolpath: objective = design terms only
        nlp = transcribe(small_problem(n=6, design=False), 6)
        # solve 2R inverse kinematics per waypoint analytically
        states = []
        for w in nlp.problem.toolpath:
            x, y = w.position[:2]
            r2 = x * x + y * y
            c2 = (r2 - 0.5) / 0.5
            t2 = np.arccos(np.clip(c2, -1, 1))
            t1 = np.arctan2(y, x) - np.arctan2(0.5 * np.sin(t2), 0.5 + 0.5 * np.cos(t2))
            states.append([t1, t2])
        x = np.zeros(nlp.layout.n_vars)
        x[nlp.layout.states] = np.asarray(states).ravel()
        Lt, Ld = nlp.per_knot_costs(x)
        assert Lt.max() < 1e-12
        design_only = nlp.tau @ Ld
        assert nlp.objective(x) == pytest.approx(design_only, rel=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        nlp = transcribe(small_problem(n=5, placement=True, modules=True), 5)
        for _ in range(3):
            x = rng.uniform(-0.5, 0.5, nlp.layout.n_vars)
            grad = nlp.objective_grad(x)
            step = 1e-6
            for i in rng.choice(nlp.layout.n_vars, size=25, replace=False):
                xp, xm = x.copy(), x.copy()
                xp[i] += step
                xm[i] -= step
                fd = (nlp.objective(xp) - nlp.objective(xm)) / (2 * step)
                assert grad[i] == pytest.approx(fd, abs=2e-6, rel=1e-4)

    def test_merit_gradient_consistent(self):
        rng = np.random.default_rng(5)
        nlp = transcribe(small_problem(n=5), 5)
        lam = rng.normal(size=nlp.n_eq)
        mu = 7.0
        x = rng.uniform(-0.5, 0.5, nlp.layout.n_vars)
        phi, grad = nlp.merit(x, lam, np.zeros(0), mu)
        step = 1e-6
        for i in rng.choice(nlp.layout.n_vars, size=20, replace=False):
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            fp, _ = nlp.merit(xp, lam, np.zeros(0), mu)
            fm, _ = nlp.merit(xm, lam, np.zeros(0), mu)
            fd = (fp - fm) / (2 * step)
            assert grad[i] == pytest.approx(fd, abs=2e-6, rel=1e-4)

    def test_evaluate_returns_pair(self):
        nlp = transcribe(small_problem(n=6), 6)
        x = initial_vector(nlp, np.full(nlp.layout.n_design, 0.3))
        obj, defects = evaluate(nlp, x)
        assert np.isfinite(obj)
        assert defects.shape == (nlp.n_eq,)


class TestDesignConstancy:
    def test_design_appears_once(self):
        nlp = transcribe(small_problem(n=6, placement=True), 6)
        n_design = nlp.layout.n_design
        # states + controls + exactly one copy of the design block
        assert nlp.layout.n_vars == (6 + 6 + 5) * 2 + n_design

    def test_interpolated_design_constant(self):
        # the design trajectory is the degree-0 polynomial by construction:
        # reconstructing q at arbitrary times always reuses the same block
        nlp = transcribe(small_problem(n=6), 6)
        rng = np.random.default_rng(6)
        x = rng.normal(size=nlp.layout.n_vars)
        qd = nlp.layout.design_of(x)
        for t in np.linspace(nlp.times[0], nlp.times[-1], 17):
            np.testing.assert_array_equal(nlp.layout.design_of(x), qd)


class TestRefinement:
    def test_doubling_knots_changes_quadrature_little(self):
        # smooth candidate evaluated on N and 2N-1 aligned grids
        chain = rr_chain(design=False)
        for n in (10,):
            path_lo = line_path(n=n)
            path_hi = line_path(n=2 * n - 1)
            prob_lo = DesignProblem(chain=chain, toolpath=path_lo)
            prob_hi = DesignProblem(chain=chain, toolpath=path_hi)
            nlp_lo = transcribe(prob_lo, n)
            nlp_hi = transcribe(prob_hi, 2 * n - 1)

            def smooth_states(times):
                return np.column_stack([np.sin(0.5 * times), 0.3 * np.cos(times)])

            x_lo = np.zeros(nlp_lo.layout.n_vars)
            x_lo[nlp_lo.layout.states] = smooth_states(path_lo.times).ravel()
            x_hi = np.zeros(nlp_hi.layout.n_vars)
            x_hi[nlp_hi.layout.states] = smooth_states(path_hi.times).ravel()
            f_lo, f_hi = nlp_lo.objective(x_lo), nlp_hi.objective(x_hi)
            assert abs(f_hi - f_lo) <= 0.05 * abs(f_lo)


class TestHermite:
    def test_interpolates_knots(self):
        times = np.array([0.0, 1.0, 2.5])
        states = np.array([[0.0], [1.0], [0.5]])
        u = np.array([[1.0], [0.0], [-1.0]])
        out = hermite_interpolate(times, states, u, times)
        np.testing.assert_allclose(out, states, atol=1e-14)

    def test_endpoint_derivatives(self):
        times = np.array([0.0, 2.0])
        states = np.array([[0.0], [1.0]])
        u = np.array([[0.5], [0.25]])
        eps = 1e-7
        d0 = (hermite_interpolate(times, states, u, eps)
              - hermite_interpolate(times, states, u, 0.0)) / eps
        assert d0[0, 0] == pytest.approx(0.5, abs=1e-5)
