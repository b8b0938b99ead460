"""Baselines: the centralized Frank-Wolfe loop (also the suboptimality
oracle for rate checks) and the decentralized projected-gradient method."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .constraints import duality_gap
from .engine import numerical_rank, step_size
from .metrics import CommLedger, RunMetrics
from .network import ac_round

__all__ = ["centralized_fw", "DpgConfig", "dpg_step", "run_dpg"]


def centralized_fw(problem, cset, schedule, n_iters, theta0=None, gap_tol=None,
                   record_every=1, seed=0, timing=False, on_iteration=None):
    """Two-line Frank-Wolfe on the full objective.

    Per iteration: LO atom against the exact gradient, then the convex
    combination step.  Stops early once the duality gap falls below
    ``gap_tol`` (used for long oracle runs that pin the optimal value).
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    theta = np.zeros(cset.shape) if theta0 is None else np.array(theta0, dtype=float)
    if not cset.contains(theta):
        raise ValueError("initial point must be feasible")
    metrics = RunMetrics(kind="centralized-fw")
    gap = np.inf
    for t in range(1, n_iters + 1):
        start = time.perf_counter() if timing else 0.0
        grad = problem.grad(theta)
        gap = duality_gap(grad, theta, cset, seed=seed)
        wall = (time.perf_counter() - start) * 1e3 if timing else 0.0
        if record_every and (t % record_every == 0 or t == 1 or t == n_iters):
            _record_centralized(metrics, problem, cset, theta, t, gap, wall)
        if gap_tol is not None and gap < gap_tol:
            if not (metrics.n_rows and metrics.columns["iter"][-1] == t):
                _record_centralized(metrics, problem, cset, theta, t, gap, wall)
            break
        atom = cset.lo(grad, seed=seed)
        gamma = step_size(schedule, t)
        theta = (1.0 - gamma) * theta + gamma * atom.dense()
        if on_iteration is not None:
            on_iteration(t, theta)
    metrics.final_average = theta
    metrics.extras["final_gap"] = float(gap)
    metrics.extras["final_value"] = float(problem.value(theta))
    return metrics


def _record_centralized(metrics, problem, cset, theta, t, gap, wall):
    nnz = int(np.count_nonzero(theta)) if cset.kind == "l1" else numerical_rank(theta)
    metrics.append({
        "iter": t,
        "objective": problem.value(theta),
        "gap": gap,
        "consensus_err": 0.0,
        "grad_consensus_err": 0.0,
        "bound_cp": None,
        "bound_cg": None,
        "nnz_or_rank": nnz,
        "comm_reals": 0,
        "comm_indices": 0,
        "wall_ms": wall,
        "tracking_err": 0.0,
    })


@dataclass(frozen=True)
class DpgConfig:
    """Step rule for the projected-gradient baseline.

    "lasso" uses ``alpha_t = 1/t``; "mc" uses ``alpha_t = c1 N / (sqrt(t)+1)``
    with the experiment-default constant c1 = 0.1.
    """

    rule: str = "lasso"
    c1: float = 0.1

    def __post_init__(self):
        if self.rule not in ("lasso", "mc"):
            raise ValueError(f"unknown projected-gradient step rule {self.rule!r}")

    def alpha_t(self, t, n_agents):
        if t < 1:
            raise ValueError("iterations are 1-based")
        if self.rule == "lasso":
            return 1.0 / t
        return self.c1 * n_agents / (np.sqrt(t) + 1.0)


def dpg_step(theta, problem, net, cset, alpha):
    """One projected-gradient round: mix neighbor iterates, take a local
    gradient step at the mixed point, project onto the constraint set."""
    mixed = ac_round(theta, net)
    nxt = np.empty_like(theta)
    for i in range(net.n_agents):
        _, grad = problem.local_value_grad(i, mixed[i])
        nxt[i] = cset.project(mixed[i] - alpha * grad)
    return nxt


def run_dpg(problem, net, cset, config, n_iters, record_every=1, timing=False,
            seed=0, on_iteration=None):
    """Run the decentralized projected-gradient baseline."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    n = net.n_agents
    metrics = RunMetrics(kind="baseline-dpg")
    ledger = CommLedger(n)
    theta = np.zeros((n,) + tuple(cset.shape))
    for t in range(1, n_iters + 1):
        start = time.perf_counter() if timing else 0.0
        nnz = np.array([np.count_nonzero(theta[i]) for i in range(n)])
        ledger.add_reals(nnz * net.degrees)
        theta = dpg_step(theta, problem, net, cset, config.alpha_t(t, n))
        wall = (time.perf_counter() - start) * 1e3 if timing else 0.0
        if record_every and (t % record_every == 0 or t == 1 or t == n_iters):
            _record_dpg(metrics, problem, cset, theta, t, ledger, wall, seed)
        if on_iteration is not None:
            on_iteration(t, theta)
    metrics.final_theta_bar = theta
    metrics.final_average = theta.mean(axis=0)
    return metrics


def _record_dpg(metrics, problem, cset, theta, t, ledger, wall, seed):
    avg = theta.mean(axis=0)
    grad = problem.grad(avg)
    gap = duality_gap(grad, avg, cset, seed=seed)
    cons = max(float(np.linalg.norm(theta[i] - avg)) for i in range(theta.shape[0]))
    nnz = int(np.count_nonzero(avg)) if cset.kind == "l1" else numerical_rank(avg)
    metrics.append({
        "iter": t,
        "objective": problem.value(avg),
        "gap": gap,
        "consensus_err": cons,
        "grad_consensus_err": None,
        "bound_cp": None,
        "bound_cg": None,
        "nnz_or_rank": nnz,
        "comm_reals": ledger.mean_reals,
        "comm_indices": ledger.mean_indices,
        "wall_ms": wall,
        "tracking_err": None,
    })
    viol = max(0.0, cset.norm(avg) - cset.radius)
    for i in range(theta.shape[0]):
        viol = max(viol, cset.norm(theta[i]) - cset.radius)
    metrics.max_feasibility_violation = max(metrics.max_feasibility_violation, viol)
