import numpy as np
import pytest

from defw import LassoProblem, gen_lasso_instance, gen_path, metropolis_weights


@pytest.fixture
def path3():
    """Path 0-1-2 with Metropolis weights: W12 = W23 = 1/3, lambda2 = 2/3."""
    return metropolis_weights(gen_path(3))


@pytest.fixture
def small_lasso():
    problem, theta_true = gen_lasso_instance(4, 8, 12, 4, 0.01, seed=3)
    return problem, theta_true


def naive_defw_average_trajectory(problem, weights, cset, gammas, n_iters):
    """Straight-line reference: the three-phase loop written out with plain
    dense sums, independent of the engine's state handling."""
    n = weights.shape[0]
    theta = [np.zeros(cset.shape) for _ in range(n)]
    tracked = None
    prev_local = None
    averages = []
    trackeds = []
    for t in range(1, n_iters + 1):
        theta_bar = [
            sum(weights[i, j] * theta[j] for j in range(n)) for i in range(n)
        ]
        local = [problem.local_value_grad(i, theta_bar[i])[1] for i in range(n)]
        if t == 1:
            surrogate = local
        else:
            surrogate = [tracked[i] + local[i] - prev_local[i] for i in range(n)]
        tracked = [
            sum(weights[i, j] * surrogate[j] for j in range(n)) for i in range(n)
        ]
        prev_local = local
        averages.append(sum(theta) / n)
        trackeds.append([g.copy() for g in tracked])
        gamma = gammas(t)
        atoms = [cset.lo(tracked[i]).dense() for i in range(n)]
        theta = [
            (1.0 - gamma) * theta_bar[i] + gamma * atoms[i] for i in range(n)
        ]
    return averages, trackeds


def homogeneous_problem(agent, n_agents):
    return LassoProblem([agent] * n_agents)
