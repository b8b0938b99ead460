"""Per-agent objective families: distributed LASSO, matrix-completion square
loss, and matrix-completion negated Gaussian loss.

The global objective is always the mean ``F(theta) = (1/N) sum_i f_i(theta)``
of the local losses; harness presets that mirror sum-form figures simply
rescale reported values by N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LassoAgentData",
    "McAgentData",
    "SmoothnessEstimate",
    "LassoProblem",
    "MatrixCompletionProblem",
    "lasso_local_eval",
    "mc_square_local_eval",
    "mc_gauss_local_eval",
    "estimate_constants",
]

# precompute the d x d Gram matrix below this dimension (fast repeated evals)
_GRAM_MAX_DIM = 1024


@dataclass
class LassoAgentData:
    """Local least-squares data ``f_i(theta) = 0.5 * ||y - A theta||^2``."""

    A: np.ndarray
    y: np.ndarray
    _gram: np.ndarray | None = field(default=None, repr=False)
    _aty: np.ndarray | None = field(default=None, repr=False)
    _yty: float = field(default=0.0, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.A.ndim != 2 or self.y.ndim != 1 or self.A.shape[0] != self.y.size:
            raise ValueError("A must be m x d with y of length m")
        if self.A.shape[1] <= _GRAM_MAX_DIM:
            self._gram = self.A.T @ self.A
            self._aty = self.A.T @ self.y
            self._yty = float(self.y @ self.y)


def lasso_local_eval(data, theta):
    """Value and gradient of the local least-squares loss at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.A.shape[1],):
        raise ValueError(
            f"theta has dimension {theta.shape}, expected ({data.A.shape[1]},)"
        )
    if data._gram is not None:
        gtheta = data._gram @ theta
        value = 0.5 * (theta @ gtheta - 2.0 * (theta @ data._aty) + data._yty)
        grad = gtheta - data._aty
    else:
        residual = data.A @ theta - data.y
        value = 0.5 * float(residual @ residual)
        grad = data.A.T @ residual
    return float(value), grad


@dataclass
class McAgentData:
    """Local matrix-completion observations on the index set Omega_i.

    ``loss`` selects the entrywise penalty: "square" with per-agent noise
    variance ``scale`` = sigma_i^2, or "neg-gauss" (smoothed l0, bounded in
    [0, 1) per entry) with width ``scale`` = sigma_i.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    loss: str = "square"
    scale: float = 1.0

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=int)
        self.cols = np.asarray(self.cols, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if not (self.rows.shape == self.cols.shape == self.values.shape):
            raise ValueError("rows, cols, values must have matching lengths")
        if self.loss not in ("square", "neg-gauss"):
            raise ValueError(f"unknown matrix-completion loss {self.loss!r}")
        if self.scale <= 0:
            raise ValueError("loss scale must be positive")
        pairs = set(zip(self.rows.tolist(), self.cols.tolist()))
        if len(pairs) != self.rows.size:
            raise ValueError("duplicate observation pairs within one agent")


def mc_square_local_eval(data, theta):
    """Square loss ``sum (1/sigma^2)(Y - theta)^2`` with gradient supported
    exactly on the agent's observation set."""
    if data.loss != "square":
        raise ValueError("agent data does not carry the square loss")
    theta = np.asarray(theta, dtype=float)
    entries = theta[data.rows, data.cols]
    residual = entries - data.values
    inv_var = 1.0 / data.scale
    value = inv_var * float(residual @ residual)
    grad = np.zeros_like(theta)
    grad[data.rows, data.cols] = 2.0 * inv_var * residual
    return value, grad


def mc_gauss_local_eval(data, theta):
    """Negated Gaussian loss ``sum (1 - exp(-(theta - Y)^2 / sigma))``.

    Each entry contributes a value in [0, 1); the gradient influence of a
    large residual decays to zero (robustness to outliers).
    """
    if data.loss != "neg-gauss":
        raise ValueError("agent data does not carry the negated Gaussian loss")
    theta = np.asarray(theta, dtype=float)
    residual = theta[data.rows, data.cols] - data.values
    expo = np.exp(-residual * residual / data.scale)
    value = float((1.0 - expo).sum())
    grad = np.zeros_like(theta)
    grad[data.rows, data.cols] = (2.0 / data.scale) * residual * expo
    return value, grad


class LassoProblem:
    """Distributed LASSO instance: one (A_i, y_i) block per agent, common d."""

    kind = "lasso"

    def __init__(self, agents):
        if not agents:
            raise ValueError("need at least one agent")
        dims = {a.A.shape[1] for a in agents}
        if len(dims) != 1:
            raise ValueError("agents disagree on the parameter dimension")
        self.agents = list(agents)
        self.dim = dims.pop()
        self.shape = (self.dim,)

    @property
    def n_agents(self):
        return len(self.agents)

    def local_value_grad(self, i, theta):
        return lasso_local_eval(self.agents[i], theta)

    def value(self, theta):
        return sum(self.local_value_grad(i, theta)[0] for i in range(self.n_agents)) / self.n_agents

    def grad(self, theta):
        g = np.zeros(self.dim)
        for i in range(self.n_agents):
            g += self.local_value_grad(i, theta)[1]
        return g / self.n_agents


class MatrixCompletionProblem:
    """Decentralized matrix completion with per-agent observation sets."""

    def __init__(self, agents, shape):
        if not agents:
            raise ValueError("need at least one agent")
        losses = {a.loss for a in agents}
        if len(losses) != 1:
            raise ValueError("agents must share one loss family")
        self.agents = list(agents)
        self.shape = (int(shape[0]), int(shape[1]))
        self.loss = losses.pop()
        self.kind = "mc-square" if self.loss == "square" else "mc-gauss"
        m1, m2 = self.shape
        for a in agents:
            if a.rows.size and (a.rows.min() < 0 or a.rows.max() >= m1
                                or a.cols.min() < 0 or a.cols.max() >= m2):
                raise ValueError("observation indices outside the matrix shape")

    @property
    def n_agents(self):
        return len(self.agents)

    def local_value_grad(self, i, theta):
        data = self.agents[i]
        if data.loss == "square":
            return mc_square_local_eval(data, theta)
        return mc_gauss_local_eval(data, theta)

    def value(self, theta):
        return sum(self.local_value_grad(i, theta)[0] for i in range(self.n_agents)) / self.n_agents

    def grad(self, theta):
        g = np.zeros(self.shape)
        for i in range(self.n_agents):
            g += self.local_value_grad(i, theta)[1]
        return g / self.n_agents


@dataclass(frozen=True)
class SmoothnessEstimate:
    """Estimated smoothness data: gradient Lipschitz constant L, function
    Lipschitz constant G over the constraint set (sampled), and strong
    convexity mu (0 when absent).  All values are estimates, not certified
    suprema."""

    L: float
    G: float
    mu: float


def _sample_feasible_points(cset, n_samples, rng):
    # atoms and random convex combinations of a few atoms
    points = []
    for _ in range(n_samples):
        k = int(rng.integers(1, 4))
        weights = rng.dirichlet(np.ones(k))
        if cset.kind == "l1":
            idx = rng.integers(0, cset.dim, size=k)
            signs = rng.choice([-1.0, 1.0], size=k)
            pt = np.zeros(cset.dim)
            for w, j, s in zip(weights, idx, signs):
                pt[j] += w * s * cset.radius
        else:
            m1, m2 = cset.shape
            pt = np.zeros((m1, m2))
            for w in weights:
                u = rng.standard_normal(m1)
                v = rng.standard_normal(m2)
                u /= np.linalg.norm(u)
                v /= np.linalg.norm(v)
                pt += w * cset.radius * np.outer(u, v)
        points.append(pt)
    return points


def estimate_constants(problem, cset, n_samples=1000, seed=0):
    """Estimate (L, G, mu) for a problem over a constraint set.

    LASSO: L is the largest per-agent Gram eigenvalue and mu the smallest
    eigenvalue of the average Hessian (exact symmetric eigensolves at desk
    scale).  Matrix completion: L comes from the entrywise second-derivative
    bound (2/sigma^2 for the square loss, 2/sigma for the negated Gaussian).
    G is the maximum dual-norm gradient over sampled feasible points.
    """
    rng = np.random.default_rng(seed)
    if isinstance(problem, LassoProblem):
        l_vals = []
        hess_mean = np.zeros((problem.dim, problem.dim))
        for data in problem.agents:
            gram = data._gram if data._gram is not None else data.A.T @ data.A
            if problem.dim <= 2048:
                l_vals.append(float(np.linalg.eigvalsh(gram)[-1]))
            else:
                l_vals.append(_power_eig(gram, rng))
            hess_mean += gram
        hess_mean /= problem.n_agents
        if problem.dim <= 2048:
            mu = float(max(np.linalg.eigvalsh(hess_mean)[0], 0.0))
        else:
            mu = 0.0
        lip = max(l_vals)
    elif isinstance(problem, MatrixCompletionProblem):
        scale = min(a.scale for a in problem.agents)
        lip = 2.0 / scale
        mu = 0.0
    else:
        raise ValueError(f"unsupported problem type {type(problem).__name__}")

    g_max = 0.0
    for pt in _sample_feasible_points(cset, n_samples, rng):
        for i in range(problem.n_agents):
            _, grad = problem.local_value_grad(i, pt)
            g_max = max(g_max, cset.dual_norm(grad))
    return SmoothnessEstimate(L=float(lip), G=float(g_max), mu=float(mu))


def _power_eig(mat, rng, iters=200):
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        v = mat @ v
        lam = np.linalg.norm(v)
        if lam == 0.0:
            return 0.0
        v /= lam
    return float(lam)
