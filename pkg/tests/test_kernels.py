"""The compiled backend must reproduce the pure-Python reference bit-for-bit
(same operations, same order) or at worst to ~1e-15 where summation order
differs."""

import numpy as np
import pytest

from codesign.kernels import get_backend, pybackend

from test_kinematics import random_chain

try:
    native = get_backend("native")
except ImportError:
    native = None

needs_native = pytest.mark.skipif(native is None, reason="native backend not built")


def random_batch(rng, chain, N):
    states = rng.uniform(-1.5, 1.5, (N, chain.n_moving))
    qd = rng.uniform(-1.0, 1.0, chain.n_design)
    st = rng.normal(size=(N, 3))
    sz = rng.normal(size=(N, 3))
    sz /= np.linalg.norm(sz, axis=1, keepdims=True)
    F = rng.normal(size=(N, 3)) * 20
    kinv = 1.0 / rng.uniform(0.5, 2.0, chain.n_moving)
    wt = rng.uniform(0, 2, N)
    wd = rng.uniform(0, 2, N)
    return states, qd, st, sz, F, kinv, wt, wd


@needs_native
class TestBackendEquivalence:
    def test_fk_pose(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            chain = random_chain(rng)
            q = rng.uniform(-2, 2, chain.n_vars)
            p1, R1 = pybackend.fk_pose(chain.packed(), q)
            p2, R2 = native.fk_pose(chain.packed(), q)
            np.testing.assert_allclose(p2, p1, atol=1e-14)
            np.testing.assert_allclose(R2, R1, atol=1e-14)

    def test_fk_jacobian(self):
        rng = np.random.default_rng(22)
        for _ in range(30):
            chain = random_chain(rng)
            q = rng.uniform(-2, 2, chain.n_vars)
            _, _, J1 = pybackend.fk_jacobian(chain.packed(), q)
            _, _, J2 = native.fk_jacobian(chain.packed(), q)
            np.testing.assert_allclose(J2, J1, atol=1e-14)

    def test_batch_eval(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            chain = random_chain(rng)
            if chain.n_moving == 0:
                continue
            batch = random_batch(rng, chain, N=7)
            out1 = pybackend.batch_eval(chain.packed(), *batch, True)
            out2 = native.batch_eval(chain.packed(), *batch, True)
            for a, b in zip(out1, out2):
                np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)

    def test_batch_eval_no_grad(self):
        rng = np.random.default_rng(24)
        chain = random_chain(rng, n_links=5)
        batch = random_batch(rng, chain, N=5)
        Lt1, Ld1, g1, d1 = pybackend.batch_eval(chain.packed(), *batch, False)
        Lt2, Ld2, g2, d2 = native.batch_eval(chain.packed(), *batch, False)
        np.testing.assert_allclose(Lt2, Lt1, atol=1e-14)
        np.testing.assert_allclose(Ld2, Ld1, rtol=1e-13, atol=1e-14)
        assert g1 is None and g2 is None and d1 is None and d2 is None
