import numpy as np
import pytest

from defw import (
    L1Ball,
    LassoAgentData,
    LassoProblem,
    MatrixCompletionProblem,
    McAgentData,
    TraceBall,
    estimate_constants,
    gen_lasso_instance,
    gen_mc_instance,
    lasso_local_eval,
    mc_gauss_local_eval,
    mc_square_local_eval,
)


def finite_difference_grad(value_fn, theta, step=1e-6):
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    it = np.nditer(theta, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus = theta.copy()
        plus[idx] += step
        minus = theta.copy()
        minus[idx] -= step
        grad[idx] = (value_fn(plus) - value_fn(minus)) / (2 * step)
        it.iternext()
    return grad


class TestLassoEval:
    def test_exact_fit_is_zero(self):
        problem, theta_true = gen_lasso_instance(3, 6, 10, 10, 0.0, seed=0)
        for i in range(3):
            value, grad = problem.local_value_grad(i, theta_true)
            assert value == pytest.approx(0.0, abs=1e-12)
            assert np.abs(grad).max() < 1e-9

    def test_identity_design_hand_values(self):
        data = LassoAgentData(A=np.eye(2), y=np.array([1.0, 0.0]))
        value, grad = lasso_local_eval(data, np.zeros(2))
        assert value == pytest.approx(0.5)
        assert np.allclose(grad, [-1.0, 0.0])

    def test_finite_differences(self):
        rng = np.random.default_rng(1)
        data = LassoAgentData(A=rng.standard_normal((5, 8)), y=rng.standard_normal(5))
        for _ in range(10):
            theta = rng.standard_normal(8)
            _, grad = lasso_local_eval(data, theta)
            fd = finite_difference_grad(lambda th: lasso_local_eval(data, th)[0], theta)
            assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4

    def test_dimension_mismatch(self):
        data = LassoAgentData(A=np.eye(2), y=np.zeros(2))
        with pytest.raises(ValueError, match="dimension"):
            lasso_local_eval(data, np.zeros(3))

    def test_gram_and_direct_paths_agree(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 9))
        y = rng.standard_normal(6)
        with_gram = LassoAgentData(A=a, y=y)
        direct = LassoAgentData(A=a, y=y)
        direct._gram = None
        theta = rng.standard_normal(9)
        v1, g1 = lasso_local_eval(with_gram, theta)
        v2, g2 = lasso_local_eval(direct, theta)
        assert v1 == pytest.approx(v2, rel=1e-12)
        assert np.allclose(g1, g2, rtol=1e-12)


class TestMcSquare:
    def test_zero_at_observations(self):
        theta = np.arange(12, dtype=float).reshape(3, 4)
        data = McAgentData(rows=[0, 2], cols=[1, 3], values=[theta[0, 1], theta[2, 3]],
                           loss="square", scale=1.0)
        value, grad = mc_square_local_eval(data, theta)
        assert value == 0.0
        assert not grad.any()

    def test_single_observation_hand_values(self):
        data = McAgentData(rows=[0], cols=[0], values=[1.0], loss="square", scale=1.0)
        value, grad = mc_square_local_eval(data, np.zeros((2, 2)))
        assert value == pytest.approx(1.0)
        assert grad[0, 0] == pytest.approx(-2.0)
        assert np.count_nonzero(grad) == 1

    def test_support_contained_in_observations(self):
        rng = np.random.default_rng(3)
        problem, _, _ = gen_mc_instance(4, 8, 9, 2, 0.3, None, seed=3)
        theta = rng.standard_normal((8, 9))
        for i, data in enumerate(problem.agents):
            _, grad = problem.local_value_grad(i, theta)
            support = set(zip(*np.nonzero(grad)))
            observed = set(zip(data.rows.tolist(), data.cols.tolist()))
            assert support <= observed

    def test_variant_mismatch(self):
        data = McAgentData(rows=[0], cols=[0], values=[1.0], loss="neg-gauss", scale=1.0)
        with pytest.raises(ValueError, match="square"):
            mc_square_local_eval(data, np.zeros((1, 1)))


class TestMcGauss:
    def test_zero_at_observations(self):
        data = McAgentData(rows=[0, 1], cols=[0, 1], values=[2.0, -1.0],
                           loss="neg-gauss", scale=1.0)
        theta = np.array([[2.0, 0.0], [0.0, -1.0]])
        value, grad = mc_gauss_local_eval(data, theta)
        assert value == pytest.approx(0.0)
        assert not grad.any()

    def test_bounded_influence_limit(self):
        data = McAgentData(rows=[0], cols=[0], values=[0.0], loss="neg-gauss", scale=1.0)
        theta = np.array([[50.0]])
        value, grad = mc_gauss_local_eval(data, theta)
        assert value == pytest.approx(1.0, abs=1e-12)
        assert abs(grad[0, 0]) < 1e-12

    def test_per_entry_value_in_unit_interval(self):
        rng = np.random.default_rng(4)
        data = McAgentData(rows=[0, 1, 2], cols=[0, 1, 0], values=rng.standard_normal(3),
                           loss="neg-gauss", scale=2.0)
        for _ in range(20):
            theta = rng.standard_normal((3, 2)) * 5
            value, _ = mc_gauss_local_eval(data, theta)
            assert 0.0 <= value < 3.0

    def test_finite_differences(self):
        rng = np.random.default_rng(5)
        data = McAgentData(rows=[0, 1, 2], cols=[1, 0, 2], values=rng.standard_normal(3),
                           loss="neg-gauss", scale=1.5)
        for _ in range(10):
            theta = rng.standard_normal((3, 3))
            _, grad = mc_gauss_local_eval(data, theta)
            fd = finite_difference_grad(lambda th: mc_gauss_local_eval(data, th)[0], theta)
            assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4

    def test_scale_validation(self):
        with pytest.raises(ValueError, match="scale"):
            McAgentData(rows=[0], cols=[0], values=[1.0], loss="neg-gauss", scale=0.0)


class TestProblemInvariants:
    def test_global_objective_permutation_invariant(self):
        problem, _ = gen_lasso_instance(5, 4, 8, 3, 0.1, seed=6)
        rng = np.random.default_rng(6)
        theta = rng.standard_normal(8)
        shuffled = LassoProblem([problem.agents[i] for i in (3, 1, 4, 0, 2)])
        assert problem.value(theta) == pytest.approx(shuffled.value(theta), rel=1e-12)

    def test_aggregated_gradient_support_union(self):
        problem, _, _ = gen_mc_instance(3, 6, 7, 2, 0.4, None, seed=7)
        rng = np.random.default_rng(7)
        theta = rng.standard_normal((6, 7))
        grad = problem.grad(theta)
        union = set()
        for data in problem.agents:
            union |= set(zip(data.rows.tolist(), data.cols.tolist()))
        assert set(zip(*np.nonzero(grad))) <= union

    def test_duplicate_pairs_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            McAgentData(rows=[0, 0], cols=[1, 1], values=[1.0, 2.0])


class TestEstimateConstants:
    def test_identity_design(self):
        agents = [LassoAgentData(A=np.eye(3), y=np.zeros(3)) for _ in range(4)]
        problem = LassoProblem(agents)
        est = estimate_constants(problem, L1Ball(1.0, 3), n_samples=50)
        assert est.L == pytest.approx(1.0, rel=1e-10)
        assert est.mu == pytest.approx(1.0, rel=1e-10)

    def test_mc_square_curvature(self):
        problem, _, _ = gen_mc_instance(3, 5, 5, 2, 0.4, None, seed=8,
                                        loss="square", loss_scale=1.0)
        est = estimate_constants(problem, TraceBall(1.0, 5, 5), n_samples=20)
        assert est.L == pytest.approx(2.0)

    def test_neg_gauss_second_derivative_bound(self):
        # grid-maximize |f''| for f(r) = 1 - exp(-r^2 / sigma)
        sigma = 1.7
        r = np.linspace(-10, 10, 400001)
        second = np.exp(-r * r / sigma) * (2.0 / sigma) * (1.0 - 2.0 * r * r / sigma)
        assert np.abs(second).max() == pytest.approx(2.0 / sigma, rel=1e-6)
        problem, _, _ = gen_mc_instance(3, 5, 5, 2, 0.4, None, seed=9,
                                        loss="neg-gauss", loss_scale=sigma)
        est = estimate_constants(problem, TraceBall(1.0, 5, 5), n_samples=20)
        assert est.L == pytest.approx(2.0 / sigma)

    def test_g_estimate_positive_and_deterministic(self):
        problem, theta_true = gen_lasso_instance(3, 4, 6, 2, 0.1, seed=10)
        cset = L1Ball(1.1 * np.abs(theta_true).sum(), 6)
        a = estimate_constants(problem, cset, n_samples=100, seed=1)
        b = estimate_constants(problem, cset, n_samples=100, seed=1)
        assert a == b
        assert a.G > 0
