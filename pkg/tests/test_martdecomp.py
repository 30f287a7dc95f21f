import math

import numpy as np
import pytest

from brca._rng import generator, split_streams
from brca.coeffgen import FixedKernel, GaussianProcess, IIDGridGaussian, TwoRegimeBernoulli, normalized_kernel
from brca.errors import ConvergenceError, InvalidArgument, NotInvertibleError
from brca.funspace import L2, GridFunction, LinearOp, grid_function, identity_op, make_uniform_grid, named_kernel, op_norm, zero_op
from brca.martdecomp import (
    NeumannConfig,
    decompose,
    direct_inverse,
    martingale_mean_test,
    neumann_inverse,
    telescoping_residual,
)
from brca.models import build_model, functional_model, null_model, scalar_model
from brca.process import BRCAModel, SimConfig, Trajectory, iterate_states, simulate_recursive

from oracles import batch_means


def contraction(m, norm, seed):
    g = make_uniform_grid(m)
    M = np.random.default_rng(seed).standard_normal((m, m))
    A = LinearOp.from_matrix(g, M)
    return LinearOp.from_matrix(g, M * norm / op_norm(A, L2))


class TestNeumann:
    def test_zero(self):
        g = make_uniform_grid(5)
        np.testing.assert_array_equal(neumann_inverse(zero_op(g)).matrix, np.eye(5))

    def test_half_identity(self):
        g = make_uniform_grid(6)
        R = neumann_inverse(LinearOp.from_matrix(g, 0.5 * np.eye(6)))
        np.testing.assert_allclose(R.matrix, 2 * np.eye(6), atol=1e-11)

    @pytest.mark.parametrize("norm", [0.3, 0.7, 0.9])
    def test_residual_and_direct_solve(self, norm):
        P = contraction(16, norm, 1)
        R = neumann_inverse(P)
        I = np.eye(16)
        assert op_norm(LinearOp.from_matrix(P.grid, R.matrix @ (I - P.matrix) - I), L2) < 1e-10
        assert np.max(np.abs(R.matrix - direct_inverse(P).matrix)) < 1e-9

    def test_tolerance_respected(self):
        cfg = NeumannConfig(tol=1e-8)
        P = contraction(8, 0.6, 2)
        R = neumann_inverse(P, cfg)
        resid = R.matrix @ (np.eye(8) - P.matrix) - np.eye(8)
        assert op_norm(LinearOp.from_matrix(P.grid, resid), L2) < 10 * cfg.tol

    def test_not_invertible(self):
        g = make_uniform_grid(4)
        with pytest.raises(NotInvertibleError):
            neumann_inverse(identity_op(g))

    def test_too_many_terms(self):
        with pytest.raises(ConvergenceError):
            neumann_inverse(contraction(4, 0.99, 3), NeumannConfig(max_terms=10))

    def test_config_validation(self):
        with pytest.raises(InvalidArgument):
            NeumannConfig(tol=0.0)
        with pytest.raises(InvalidArgument):
            NeumannConfig(max_terms=0)


class TestDecompose:
    def test_null(self):
        model = null_model(m=6)
        traj = simulate_recursive(model, SimConfig(n=30, seed=1))
        cob = decompose(traj, model.mean_operator())
        assert not np.any(cob.N)
        np.testing.assert_array_equal(cob.M, traj.centered[1:])

    def test_scalar_hand_computation(self):
        model = scalar_model(0.0, 1.0, mu=2.0)  # rho_bar = 0.5
        traj = simulate_recursive(model, SimConfig(n=100, seed=2))
        cob = decompose(traj, model.mean_operator())
        Y = traj.centered[:, 0]
        np.testing.assert_allclose(cob.N[:, 0], Y, rtol=1e-11, atol=1e-12)
        np.testing.assert_allclose(cob.M[:, 0], 2 * Y[1:] - Y[:-1], rtol=1e-11, atol=1e-11)

    def test_deterministic_recursion_has_zero_increments(self):
        g = make_uniform_grid(8)
        c = 0.6
        model = BRCAModel(grid_function(g, 1.0), FixedKernel(g, c * np.diag(1 / g.weights)), IIDGridGaussian(g, 0.0))
        f = grid_function(g, np.sin).values
        values = np.array([c**k * f for k in range(20)]) + 1.0
        traj = Trajectory(model, values)
        cob = decompose(traj, model.mean_operator())
        assert np.max(np.abs(cob.M)) < 1e-12
        assert cob.M_fn(1).grid == g and cob.N_fn(0).values.shape == (8,)

    def test_lengths(self):
        model = functional_model(m=4)
        traj = simulate_recursive(model, SimConfig(n=25, seed=3))
        cob = decompose(traj, model.mean_operator())
        assert cob.N.shape == (26, 4) and cob.M.shape == (25, 4)


def random_models():
    out = []
    rng = np.random.default_rng(0)
    for k in range(6):
        m = [1, 8, 32][k % 3]
        out.append(functional_model(m=m, high=float(rng.uniform(0.2, 0.9)),
                                    **{"mu.kind": "sine", "operator.kernel": ["exponential", "gaussian"][k % 2]}))
    return out


class TestTelescoping:
    @pytest.mark.parametrize("k", range(6))
    def test_identity(self, k):
        model = random_models()[k]
        traj = simulate_recursive(model, SimConfig(n=2000, seed=k))
        assert telescoping_residual(traj, decompose(traj, model.mean_operator())) < 1e-9

    def test_null_exact(self):
        model = null_model(m=8)
        traj = simulate_recursive(model, SimConfig(n=1000, seed=4))
        assert telescoping_residual(traj, decompose(traj, model.mean_operator())) < 1e-12

    def test_scalar_long(self):
        model = scalar_model()
        traj = simulate_recursive(model, SimConfig(n=10_000, seed=5))
        assert telescoping_residual(traj, decompose(traj, model.mean_operator())) < 1e-9


class TestMartingaleMean:
    def test_noiseless_fixed(self):
        g = make_uniform_grid(8)
        model = BRCAModel(grid_function(g, 0.0), FixedKernel(g, 0.4 * np.diag(1 / g.weights)), IIDGridGaussian(g, 0.0))
        mean, se = martingale_mean_test(model, grid_function(g, np.exp), 1000, generator(0))
        assert mean == 0.0 and se == 0.0

    def test_null_operator(self):
        model = null_model(m=8)
        mean, se = martingale_mean_test(model, grid_function(model.grid, 3.0), 10_000, generator(1))
        assert mean < 4 * se

    def test_two_regime(self):
        g = make_uniform_grid(8)
        Ka = 0.8 * normalized_kernel(g, "exponential")
        Kb = -0.5 * normalized_kernel(g, "gaussian")
        model = BRCAModel(grid_function(g, 0.0), TwoRegimeBernoulli(g, Ka, Kb, 0.4),
                          GaussianProcess(g, named_kernel(g, "exponential")))
        x_prev = GridFunction(g, generator(2).standard_normal(8) * 3)
        mean, se = martingale_mean_test(model, x_prev, 100_000, generator(3))
        assert mean < 4 * se

    def test_resample_floor(self):
        model = null_model(m=4)
        with pytest.raises(InvalidArgument):
            martingale_mean_test(model, grid_function(model.grid, 0.0), 999, generator(0))


def _increments(model, Ys):
    rb = model.mean_operator().matrix
    R = np.linalg.inv(np.eye(model.m) - rb)
    return [(Ys[k] - Ys[k - 1] @ rb.T) @ R.T for k in range(1, len(Ys))]


def test_increments_uncorrelated():
    model = functional_model(m=8)
    w = model.grid.weights
    rho_rng, eps_rng = split_streams(7)
    Ys = list(iterate_states(model, 3, 2000, rho_rng, eps_rng, burnin=300))
    M = [x @ w for x in _increments(model, Ys)]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        prod = M[i] * M[j]
        assert abs(prod.mean()) < 4 * prod.std() / math.sqrt(prod.size)


def test_increments_stationary():
    model = functional_model(m=8)
    w = model.grid.weights
    traj = simulate_recursive(model, SimConfig(n=40_000, seed=8))
    cob = decompose(traj, model.mean_operator())
    x = (cob.M @ w) ** 2
    a, sa = batch_means(x[:20_000], 20)
    b, sb = batch_means(x[20_000:], 20)
    assert abs(a - b) < 4 * math.hypot(sa, sb)
