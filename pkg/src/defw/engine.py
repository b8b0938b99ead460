"""Decentralized Frank-Wolfe engine: consensus iterate averaging, tracked
gradient aggregation, the projection-free update step, and closed-form
convergence certificates.

Each iteration runs three phases over all agents (consensus | aggregate |
Frank-Wolfe step).  The simulator recomputes exact network averages
centrally for instrumentation; agents never read them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .constraints import duality_gap
from .metrics import CommLedger, RunMetrics
from .network import ac_round, t0_alpha
from .objectives import estimate_constants

__all__ = [
    "StepSchedule",
    "step_size",
    "AgentState",
    "consensus_step",
    "aggregate_step",
    "fw_step",
    "run_defw",
    "RateCertificate",
    "compute_certificate",
    "rate_bound",
    "numerical_rank",
]


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing step size: "convex" gives 2/(t+1), "power" gives t^-alpha."""

    kind: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("convex", "power"):
            raise ValueError(f"unknown step schedule {self.kind!r}")
        if self.kind == "power" and not 0.0 < self.alpha <= 1.0:
            raise ValueError("power schedule needs alpha in (0, 1]")

    def gamma(self, t):
        return step_size(self, t)


def step_size(schedule, t):
    """Step size gamma_t in (0, 1] for iteration t >= 1."""
    if t < 1:
        raise ValueError("iterations are 1-based")
    if schedule.kind == "convex":
        return 2.0 / (t + 1.0)
    return float(t) ** (-schedule.alpha)


@dataclass
class AgentState:
    """Stacked per-agent algorithm state (axis 0 indexes agents)."""

    theta: np.ndarray
    theta_bar: np.ndarray | None = None
    local_grad: np.ndarray | None = None
    grad_surrogate: np.ndarray | None = None
    grad_tracked: np.ndarray | None = None
    prev_local_grad: np.ndarray | None = None

    @property
    def n_agents(self):
        return self.theta.shape[0]


def _mix(values, net, rounds=1, ledger=None):
    out = values
    for _ in range(rounds):
        if ledger is not None:
            nnz = np.array([np.count_nonzero(out[i]) for i in range(net.n_agents)])
            ledger.add_reals(nnz * net.degrees)
        out = ac_round(out, net)
    return out


def consensus_step(state, net, rounds=1, ledger=None):
    """Mix local iterates: ``theta_bar_i = sum_j W[i, j] theta_j``.

    Mixing preserves the network average of the iterates.
    """
    state.theta_bar = _mix(state.theta, net, rounds=rounds, ledger=ledger)
    return state


def aggregate_step(state, problem, net, t, rounds=1, ledger=None):
    """Track the average gradient through one mixing round.

    Each agent forms the recursive surrogate
    ``prev_tracked + grad_i(theta_bar_t) - grad_i(theta_bar_{t-1})``
    (the fresh local gradient at t = 1) and mixes it.  The network-average
    gradient is preserved exactly by this update.
    """
    if state.theta_bar is None:
        raise ValueError("consensus_step must run before aggregate_step")
    local = np.stack(
        [problem.local_value_grad(i, state.theta_bar[i])[1] for i in range(state.n_agents)]
    )
    if t == 1 or state.prev_local_grad is None:
        surrogate = local
    else:
        surrogate = state.grad_tracked + local - state.prev_local_grad
    state.local_grad = local
    state.grad_surrogate = surrogate
    state.grad_tracked = _mix(surrogate, net, rounds=rounds, ledger=ledger)
    state.prev_local_grad = local
    return state


def fw_step(state, cset, gamma, seed=0):
    """Frank-Wolfe update: step toward each agent's LO atom.

    ``theta_{t+1}_i = (1 - gamma) theta_bar_i + gamma * atom_i`` stays
    feasible as a convex combination of feasible points.
    """
    if state.grad_tracked is None:
        raise ValueError("aggregate_step must run before fw_step")
    atoms = [cset.lo(state.grad_tracked[i], seed=seed) for i in range(state.n_agents)]
    nxt = np.empty_like(state.theta)
    for i, atom in enumerate(atoms):
        nxt[i] = (1.0 - gamma) * state.theta_bar[i] + gamma * atom.dense()
    state.theta = nxt
    return state, atoms


def numerical_rank(mat, rel_tol=1e-8):
    s = np.linalg.svd(np.asarray(mat, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int((s > rel_tol * s[0]).sum())


def _support_size(cset, avg):
    if cset.kind == "l1":
        return int(np.count_nonzero(avg))
    return numerical_rank(avg)


def _record_iteration(metrics, problem, cset, state, t, cert, alpha_cert, ledger,
                      wall_ms, test_set, seed):
    avg = state.theta.mean(axis=0)
    objective = problem.value(avg)
    true_grad = problem.grad(avg)
    gap = duality_gap(true_grad, avg, cset, seed=seed)
    cons = max(
        float(np.linalg.norm(state.theta_bar[i] - avg)) for i in range(state.n_agents)
    )
    mean_local = state.local_grad.mean(axis=0)
    gcons = max(
        float(np.linalg.norm(state.grad_tracked[i] - mean_local))
        for i in range(state.n_agents)
    )
    mean_tracked = state.grad_tracked.mean(axis=0)
    denom = max(float(np.linalg.norm(mean_local)), 1e-300)
    tracking = float(np.linalg.norm(mean_tracked - mean_local)) / denom

    row = {
        "iter": t,
        "objective": objective,
        "gap": gap,
        "consensus_err": cons,
        "grad_consensus_err": gcons,
        "bound_cp": cert.c_p / t ** alpha_cert if cert is not None else None,
        "bound_cg": cert.c_g / t ** alpha_cert if cert is not None else None,
        "nnz_or_rank": _support_size(cset, avg),
        "comm_reals": ledger.mean_reals,
        "comm_indices": ledger.mean_indices,
        "wall_ms": wall_ms,
        "tracking_err": tracking,
    }
    if test_set is not None:
        from .harness import mse_test, worst_case_mse

        row["mse"] = mse_test(avg, test_set)
        row["mse_worst"] = worst_case_mse(state.theta_bar, test_set)
    metrics.append(row)

    # feasibility audit over the averaged iterate and every agent
    viol = max(0.0, cset.norm(avg) - cset.radius)
    for i in range(state.n_agents):
        viol = max(viol, cset.norm(state.theta_bar[i]) - cset.radius)
    metrics.max_feasibility_violation = max(metrics.max_feasibility_violation, viol)
    return avg


def run_defw(problem, net, cset, schedule, n_iters, seed=0, ac_rounds=1,
             certificate=None, test_set=None, record_every=1, timing=False,
             on_iteration=None):
    """Run the decentralized Frank-Wolfe loop for ``n_iters`` iterations.

    Per iteration: consensus mixing of iterates, tracked-gradient
    aggregation, then the LO step at every agent.  Metrics are recorded at
    the true network average before the step.  ``certificate`` (optional
    :class:`RateCertificate`) populates the consensus-bound columns.
    ``on_iteration(t, state, atoms)`` is invoked after the step for test
    instrumentation.  Identical inputs produce identical metrics; wall
    times are recorded only when ``timing`` is set.

    Returns a :class:`RunMetrics` carrying per-agent final iterates.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    kind = getattr(problem, "kind", "lasso")
    if kind not in ("mc-square", "mc-gauss"):
        kind = "lasso"
    metrics = RunMetrics(kind=kind)
    metrics.certificate = certificate
    alpha_cert = certificate.alpha if certificate is not None else 1.0
    ledger = CommLedger(net.n_agents)
    state = AgentState(theta=np.zeros((net.n_agents,) + tuple(cset.shape)))

    for t in range(1, n_iters + 1):
        start = time.perf_counter() if timing else 0.0
        gamma = step_size(schedule, t)
        try:
            consensus_step(state, net, rounds=ac_rounds, ledger=ledger)
            aggregate_step(state, problem, net, t, rounds=ac_rounds, ledger=ledger)
        except ValueError as exc:
            raise ValueError(f"iteration {t}: {exc}") from exc
        wall = (time.perf_counter() - start) * 1e3 if timing else 0.0
        if record_every and (t % record_every == 0 or t == 1 or t == n_iters):
            _record_iteration(metrics, problem, cset, state, t, certificate,
                              alpha_cert, ledger, wall, test_set, seed)
        start = time.perf_counter() if timing else 0.0
        state, atoms = fw_step(state, cset, gamma, seed=seed)
        if timing and metrics.n_rows and metrics.columns["iter"][-1] == t:
            metrics.columns["wall_ms"][-1] += (time.perf_counter() - start) * 1e3
        if on_iteration is not None:
            on_iteration(t, state, atoms)

    metrics.final_theta_bar = state.theta_bar
    metrics.final_average = state.theta.mean(axis=0)
    return metrics


@dataclass(frozen=True)
class RateCertificate:
    """Computable constants entering the convergence-rate bounds.

    ``c_p = t0^alpha sqrt(N) rho_bar`` bounds the iterate consensus error
    as c_p / t^alpha; ``c_g`` plays the same role for tracked gradients.
    """

    alpha: float
    t0: int
    c_p: float
    c_g: float
    b1: float
    L: float
    G: float
    mu: float
    rho: float
    rho_bar: float
    delta_lb: float = 0.0


def compute_certificate(problem, net, cset, alpha, theta_init=None,
                        theta_star=None, n_samples=1000, seed=0):
    """Evaluate the consensus-error certificate constants for a run.

    ``b1`` is the largest initial local-gradient norm after the first
    consensus round; ``delta_lb`` is the interior-distance lower bound
    ``(R - ||theta*||_1) / sqrt(d)`` when an optimum is supplied for an
    l1 ball (0 otherwise).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    consts = estimate_constants(problem, cset, n_samples=n_samples, seed=seed)
    n = net.n_agents
    lam = net.lambda2
    t0 = t0_alpha(lam, alpha)
    rho_bar = cset.rho_bar
    c_p = t0 ** alpha * np.sqrt(n) * rho_bar

    if theta_init is None:
        theta_init = np.zeros((n,) + tuple(cset.shape))
    theta_bar1 = ac_round(theta_init, net)
    b1 = max(
        float(np.linalg.norm(problem.local_value_grad(i, theta_bar1[i])[1]))
        for i in range(n)
    )
    c_g = np.sqrt(n) * max(
        2.0 * (2.0 * c_p + rho_bar) * consts.L,
        t0 ** alpha * lam * (consts.L * rho_bar / (1.0 - lam) + b1) if lam < 1.0 else np.inf,
    )
    delta_lb = 0.0
    if theta_star is not None and cset.kind == "l1":
        delta_lb = max(0.0, (cset.radius - cset.norm(theta_star)) / np.sqrt(cset.dim))
    return RateCertificate(
        alpha=alpha, t0=t0, c_p=float(c_p), c_g=float(c_g), b1=b1,
        L=consts.L, G=consts.G, mu=consts.mu, rho=cset.rho,
        rho_bar=rho_bar, delta_lb=float(delta_lb),
    )


def rate_bound(cert, t, variant):
    """Right-hand sides of the convergence-rate guarantees.

    variant "convex": suboptimality bound (8 rho_bar (C_g + L C_p) +
    2 L rho_bar^2) / (t + 1).  variant "strongly-convex": the squared
    interior-optimum bound, requiring mu > 0 and a positive interior
    distance.  variant "nonconvex": the min-gap bound over (T/2, T] for the
    power step schedule, branching at alpha = 0.5.  The nonconvex bound is
    evaluated for any horizon T >= 6 (the expression is well defined and
    monotone there, including odd T).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    rb = cert.rho_bar
    drift = cert.c_g + cert.L * cert.c_p
    if variant == "convex":
        return (8.0 * rb * drift + 2.0 * cert.L * rb * rb) / (t + 1.0)
    if variant == "strongly-convex":
        if cert.delta_lb <= 0.0 or cert.mu <= 0.0:
            raise ValueError("interior distance unavailable (delta_lb or mu is zero)")
        num = (4.0 * rb * drift + cert.L * rb * rb) ** 2
        return num / (2.0 * cert.delta_lb ** 2 * cert.mu) * 9.0 / (t + 1.0) ** 2
    if variant == "nonconvex":
        alpha = cert.alpha
        if t < 6:
            raise ValueError("nonconvex gap bound needs horizon T >= 6")
        if not 0.0 < alpha < 1.0:
            raise ValueError("nonconvex bound branches cover alpha in (0, 1)")
        lead = (1.0 - alpha) / (1.0 - (2.0 / 3.0) ** (1.0 - alpha))
        curvature = cert.L * rb * rb / 2.0 + 2.0 * rb * drift
        if alpha >= 0.5:
            return lead / t ** (1.0 - alpha) * (cert.G * cert.rho + curvature * np.log(2.0))
        tail = (1.0 - 0.5 ** (1.0 - 2.0 * alpha)) / (1.0 - 2.0 * alpha)
        return lead / t ** alpha * (cert.G * cert.rho + curvature * tail)
    raise ValueError(f"unknown bound variant {variant!r}")
