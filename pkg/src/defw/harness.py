"""Experiment harness: configuration loading and validation, synthetic
instance generation, MovieLens ingestion, test-set MSE, log-log rate
fitting, and the experiment dispatcher behind the CLI."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .baselines import DpgConfig, centralized_fw, run_dpg
from .constraints import L1Ball, TraceBall
from .engine import StepSchedule, compute_certificate, run_defw
from .network import (
    gen_complete,
    gen_erdos_renyi,
    gen_path,
    gen_ring,
    metropolis_weights,
    save_edge_list,
    save_weights_csv,
)
from .objectives import LassoAgentData, LassoProblem, MatrixCompletionProblem, McAgentData
from .sparsified import CoordSelection, run_sparsified_defw

__all__ = [
    "TestSet",
    "gen_lasso_instance",
    "gen_mc_instance",
    "load_movielens",
    "build_mc_problem",
    "mse_test",
    "worst_case_mse",
    "RateFit",
    "fit_rate",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "materialize_instance",
    "PRESETS",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = (
    "lasso",
    "mc-square",
    "mc-gauss",
    "sparsified-lasso",
    "baseline-dpg",
    "centralized-fw",
)


# ---------------------------------------------------------------------------
# data generation


@dataclass(frozen=True)
class TestSet:
    """Held-out entries of the true matrix used for MSE evaluation."""

    __test__ = False  # not a pytest collection target

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray


def gen_lasso_instance(n_agents, m, d, s, sigma2, seed):
    """Synthetic sparse-regression instance.

    Sensing blocks have standard-normal entries, the s-sparse ground truth
    has standard-normal values on a uniformly drawn support, and
    observations carry N(0, sigma2) noise.  Fully seed-deterministic.
    """
    if s > d:
        raise ValueError("sparsity s cannot exceed dimension d")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(d, size=s, replace=False))
    theta_true = np.zeros(d)
    theta_true[support] = rng.standard_normal(s)
    agents = []
    for _ in range(n_agents):
        a = rng.standard_normal((m, d))
        y = a @ theta_true
        if sigma2 > 0:
            y = y + np.sqrt(sigma2) * rng.standard_normal(m)
        agents.append(LassoAgentData(A=a, y=y))
    return LassoProblem(agents), theta_true


def gen_mc_instance(n_agents, m1, m2, rank, train_frac, noise, seed,
                    loss="square", loss_scale=1.0):
    """Synthetic low-rank matrix-completion instance.

    The ground truth is the normalized sum of ``rank`` standard-normal
    outer products.  A uniform fraction of entries forms the training set
    (split into equal contiguous blocks across agents after shuffling); the
    rest is the test set.  ``noise`` is None or a (prob, var) pair placing
    sparse N(0, var) corruption on training observations.
    """
    if rank > min(m1, m2):
        raise ValueError("rank cannot exceed min(m1, m2)")
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((m1, rank))
    right = rng.standard_normal((m2, rank))
    theta_true = left @ right.T / rank

    n_total = m1 * m2
    n_train = int(round(train_frac * n_total))
    perm = rng.permutation(n_total)
    train_idx = perm[:n_train]
    test_idx = np.sort(perm[n_train:])
    values = theta_true.ravel()[train_idx].copy()
    if noise is not None:
        prob, var = noise
        hits = rng.random(n_train) < prob
        bumps = np.sqrt(var) * rng.standard_normal(n_train)
        values = values + hits * bumps
    blocks = np.array_split(np.arange(n_train), n_agents)
    agents = [
        McAgentData(
            rows=train_idx[b] // m2,
            cols=train_idx[b] % m2,
            values=values[b],
            loss=loss,
            scale=loss_scale,
        )
        for b in blocks
    ]
    problem = MatrixCompletionProblem(agents, (m1, m2))
    test = TestSet(
        rows=test_idx // m2, cols=test_idx % m2, values=theta_true.ravel()[test_idx]
    )
    return problem, theta_true, test


def load_movielens(path, n_agents, seed, m1=943, m2=1682, train_size=80000):
    """Parse a ``u.data``-format ratings file (tab-separated
    ``user item rating timestamp`` with 1-based ids).

    Returns ``(train_parts, test, shape)`` where ``train_parts`` holds one
    (rows, cols, values) triple per agent from a seeded shuffle (equal
    contiguous blocks) and ``test`` covers the remaining ratings.
    """
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 'user<TAB>item<TAB>rating[<TAB>ts]', "
                    f"got {line!r}"
                )
            try:
                user, item, rating = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed fields: {exc}") from exc
            if not (1 <= user <= m1) or not (1 <= item <= m2):
                raise ValueError(
                    f"{path}:{lineno}: ids ({user}, {item}) outside declared "
                    f"range ({m1}, {m2})"
                )
            rows.append(user - 1)
            cols.append(item - 1)
            vals.append(rating)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = np.asarray(vals, dtype=float)
    if train_size >= rows.size:
        raise ValueError(
            f"train_size {train_size} must leave a nonempty test set "
            f"(file has {rows.size} ratings)"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(rows.size)
    train = perm[:train_size]
    test = perm[train_size:]
    parts = [
        (rows[b], cols[b], vals[b]) for b in np.array_split(train, n_agents)
    ]
    test_set = TestSet(rows=rows[test], cols=cols[test], values=vals[test])
    return parts, test_set, (m1, m2)


def build_mc_problem(train_parts, shape, loss="square", loss_scale=1.0):
    """Assemble a matrix-completion problem from per-agent triples."""
    agents = [
        McAgentData(rows=r, cols=c, values=v, loss=loss, scale=loss_scale)
        for r, c, v in train_parts
    ]
    return MatrixCompletionProblem(agents, shape)


def mse_test(theta, test):
    """Mean squared deviation over the test entries."""
    if test.values.size == 0:
        raise ValueError("test set is empty")
    diff = np.asarray(theta)[test.rows, test.cols] - test.values
    return float(diff @ diff) / test.values.size


def worst_case_mse(thetas, test):
    """Max over agents of the per-agent test MSE."""
    return max(mse_test(thetas[i], test) for i in range(len(thetas)))


# ---------------------------------------------------------------------------
# rate fitting


@dataclass(frozen=True)
class RateFit:
    """Least-squares line on (log t, log value) over a window."""

    t_lo: float
    t_hi: float
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    n_excluded: int = 0


def fit_rate(iters, values, window):
    """Fit a log-log slope over ``window = (t_lo, t_hi)``.

    Nonpositive values inside the window are excluded with a warning; at
    least 10 positive points must remain.
    """
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise ValueError("window must satisfy t_lo < t_hi")
    iters = np.asarray(iters, dtype=float)
    values = np.asarray(values, dtype=float)
    in_win = (iters >= t_lo) & (iters <= t_hi)
    pos = in_win & (values > 0.0) & np.isfinite(values)
    n_excluded = int(in_win.sum() - pos.sum())
    if n_excluded:
        warnings.warn(
            f"fit_rate: excluded {n_excluded} nonpositive/invalid values in window",
            stacklevel=2,
        )
    if pos.sum() < 10:
        raise ValueError(
            f"fit_rate needs >= 10 positive values in the window (got {int(pos.sum())})"
        )
    x = np.log(iters[pos])
    y = np.log(values[pos])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(
        t_lo=float(t_lo), t_hi=float(t_hi), slope=float(slope),
        intercept=float(intercept), r_squared=r2, n_points=int(pos.sum()),
        n_excluded=n_excluded,
    )


# ---------------------------------------------------------------------------
# configuration


_GRAPH_KINDS = ("erdos-renyi", "ring", "path", "complete")


@dataclass
class ExperimentConfig:
    """Validated experiment description (see README for the file schema)."""

    kind: str
    seed: int = 0
    n_iters: int = 100
    record_every: int = 1
    ac_rounds: int = 1
    certificate: bool = False
    timing: bool = False
    out: str | None = None
    network: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    sparsify: dict = field(default_factory=dict)
    dpg: dict = field(default_factory=dict)
    gap_tol: float | None = None
    problem_kind: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(
                f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.record_every < 0:
            raise ValueError("record_every must be >= 0")
        if self.ac_rounds < 1:
            raise ValueError("ac_rounds must be >= 1")
        g = self.network.get("graph", "erdos-renyi")
        if g not in _GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {g!r}; expected one of {_GRAPH_KINDS}")
        s = self.schedule.get("kind", "convex")
        if s not in ("convex", "power"):
            raise ValueError(f"unknown schedule kind {s!r}")


_TOP_LEVEL_KEYS = {
    "kind", "seed", "n_iters", "record_every", "ac_rounds", "certificate",
    "timing", "out", "network", "schedule", "problem", "sparsify", "dpg",
    "gap_tol", "problem_kind",
}


def config_from_dict(raw):
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in raw:
        raise ValueError("config must declare an experiment 'kind'")
    return ExperimentConfig(**raw)


def load_config(path):
    """Load a TOML (primary) or JSON experiment config."""
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        raw = json.loads(text.decode())
    else:
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        raw = tomllib.loads(text.decode())
    return config_from_dict(raw)


PRESETS = {
    "desk": {
        "lasso": {
            "kind": "lasso", "seed": 7, "n_iters": 300, "certificate": True,
            "network": {"graph": "erdos-renyi", "n": 10, "p": 0.4},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 500, "s": 20, "sigma2": 0.01, "radius_scale": 1.1},
        },
        "mc-square": {
            "kind": "mc-square", "seed": 7, "n_iters": 200,
            "network": {"graph": "erdos-renyi", "n": 10, "p": 0.4},
            "schedule": {"kind": "convex"},
            "problem": {"m1": 40, "m2": 60, "rank": 3, "train_frac": 0.2,
                        "noise": "none", "loss_scale": 1.0, "radius_scale": 1.2},
        },
        "mc-gauss": {
            "kind": "mc-gauss", "seed": 7, "n_iters": 200,
            "network": {"graph": "erdos-renyi", "n": 10, "p": 0.4},
            "schedule": {"kind": "power", "alpha": 0.75},
            "problem": {"m1": 40, "m2": 60, "rank": 3, "train_frac": 0.2,
                        "noise": "sparse", "noise_prob": 0.2, "noise_var": 5.0,
                        "loss_scale": 1.0, "radius_scale": 1.2},
        },
        "sparsified-lasso": {
            "kind": "sparsified-lasso", "seed": 7, "n_iters": 200,
            "network": {"graph": "erdos-renyi", "n": 10, "p": 0.4},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 500, "s": 20, "sigma2": 0.01, "radius_scale": 1.1},
            "sparsify": {"scheme": "random", "alpha_comm": 0.05, "c_l": 1.0,
                         "ell_mode": "experiment"},
        },
        "baseline-dpg": {
            "kind": "baseline-dpg", "seed": 7, "n_iters": 500, "problem_kind": "lasso",
            "network": {"graph": "erdos-renyi", "n": 10, "p": 0.4},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 500, "s": 20, "sigma2": 0.01, "radius_scale": 1.1},
            "dpg": {"rule": "lasso", "c1": 0.1},
        },
        "centralized-fw": {
            "kind": "centralized-fw", "seed": 7, "n_iters": 500, "problem_kind": "lasso",
            "network": {"n": 10},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 500, "s": 20, "sigma2": 0.01, "radius_scale": 1.1},
        },
    },
    "paper": {
        "lasso": {
            "kind": "lasso", "seed": 7, "n_iters": 500, "certificate": False,
            "network": {"graph": "erdos-renyi", "n": 50, "p": 0.1},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 10000, "s": 50, "sigma2": 0.01, "radius_scale": 1.1},
        },
        "mc-square": {
            "kind": "mc-square", "seed": 7, "n_iters": 300,
            "network": {"graph": "erdos-renyi", "n": 50, "p": 0.1},
            "schedule": {"kind": "convex"},
            "problem": {"m1": 100, "m2": 250, "rank": 5, "train_frac": 0.2,
                        "noise": "none", "loss_scale": 1.0, "radius_scale": 1.2},
        },
        "mc-gauss": {
            "kind": "mc-gauss", "seed": 7, "n_iters": 300,
            "network": {"graph": "erdos-renyi", "n": 50, "p": 0.1},
            "schedule": {"kind": "power", "alpha": 0.75},
            "problem": {"m1": 100, "m2": 250, "rank": 5, "train_frac": 0.2,
                        "noise": "sparse", "noise_prob": 0.2, "noise_var": 5.0,
                        "loss_scale": 1.0, "radius_scale": 1.2},
        },
        "sparsified-lasso": {
            "kind": "sparsified-lasso", "seed": 7, "n_iters": 300,
            "network": {"graph": "erdos-renyi", "n": 50, "p": 0.1},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 10000, "s": 50, "sigma2": 0.01, "radius_scale": 1.1},
            "sparsify": {"scheme": "random", "alpha_comm": 0.05, "c_l": 1.0,
                         "ell_mode": "experiment"},
        },
        "baseline-dpg": {
            "kind": "baseline-dpg", "seed": 7, "n_iters": 500, "problem_kind": "lasso",
            "network": {"graph": "erdos-renyi", "n": 50, "p": 0.1},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 10000, "s": 50, "sigma2": 0.01, "radius_scale": 1.1},
            "dpg": {"rule": "lasso", "c1": 0.1},
        },
        "centralized-fw": {
            "kind": "centralized-fw", "seed": 7, "n_iters": 2000, "problem_kind": "lasso",
            "network": {"n": 50},
            "schedule": {"kind": "convex"},
            "problem": {"m": 20, "d": 10000, "s": 50, "sigma2": 0.01, "radius_scale": 1.1},
        },
    },
}


# ---------------------------------------------------------------------------
# experiment dispatch


def _build_network(cfg):
    net_cfg = cfg.network
    graph = net_cfg.get("graph", "erdos-renyi")
    n = int(net_cfg.get("n", 10))
    if graph == "erdos-renyi":
        adj = gen_erdos_renyi(n, float(net_cfg.get("p", 0.3)),
                              int(net_cfg.get("seed", cfg.seed)))
    elif graph == "ring":
        adj = gen_ring(n)
    elif graph == "path":
        adj = gen_path(n)
    else:
        adj = gen_complete(n)
    return metropolis_weights(adj)


def _n_agents(cfg):
    # centralized runs still build the full multi-agent instance so their
    # optimal value can serve as the oracle for a matching decentralized run
    return int(cfg.network.get("n", 10))


def _build_lasso(cfg, n_agents):
    p = cfg.problem
    problem, theta_true = gen_lasso_instance(
        n_agents, int(p.get("m", 20)), int(p.get("d", 500)), int(p.get("s", 20)),
        float(p.get("sigma2", 0.01)), cfg.seed,
    )
    radius = p.get("radius")
    if radius is None:
        radius = float(p.get("radius_scale", 1.1)) * np.abs(theta_true).sum()
    cset = L1Ball(radius=float(radius), dim=problem.dim)
    return problem, theta_true, cset, None


def _build_mc(cfg, n_agents, loss):
    p = cfg.problem
    scale = float(p.get("loss_scale", 1.0))
    ml_path = p.get("movielens")
    if ml_path:
        parts, test, shape = load_movielens(
            ml_path, n_agents, cfg.seed,
            m1=int(p.get("m1", 943)), m2=int(p.get("m2", 1682)),
            train_size=int(p.get("train_size", 80000)),
        )
        problem = build_mc_problem(parts, shape, loss=loss, loss_scale=scale)
        radius = float(p.get("radius", 1e5))
        return problem, None, TraceBall(radius, *shape), test
    noise = None
    if p.get("noise", "none") == "sparse":
        noise = (float(p.get("noise_prob", 0.2)), float(p.get("noise_var", 5.0)))
    problem, theta_true, test = gen_mc_instance(
        n_agents, int(p.get("m1", 40)), int(p.get("m2", 60)), int(p.get("rank", 3)),
        float(p.get("train_frac", 0.2)), noise, cfg.seed, loss=loss, loss_scale=scale,
    )
    radius = p.get("radius")
    if radius is None:
        nuclear = np.linalg.svd(theta_true, compute_uv=False).sum()
        radius = float(p.get("radius_scale", 1.2)) * nuclear
    return problem, theta_true, TraceBall(float(radius), *theta_true.shape), test


def _build_problem(cfg, n_agents):
    kind = cfg.problem_kind or cfg.kind
    if kind in ("baseline-dpg", "centralized-fw"):
        kind = "lasso"
    if kind in ("lasso", "sparsified-lasso"):
        return _build_lasso(cfg, n_agents)
    if kind == "mc-square":
        return _build_mc(cfg, n_agents, "square")
    if kind == "mc-gauss":
        return _build_mc(cfg, n_agents, "neg-gauss")
    raise ValueError(f"cannot build a problem for kind {kind!r}")


def _build_schedule(cfg):
    s = cfg.schedule
    return StepSchedule(kind=s.get("kind", "convex"), alpha=float(s.get("alpha", 1.0)))


def run_experiment(cfg):
    """Execute one configured experiment and return its RunMetrics."""
    schedule = _build_schedule(cfg)
    if cfg.kind == "centralized-fw":
        problem, theta_true, cset, test = _build_problem(cfg, _n_agents(cfg))
        metrics = centralized_fw(
            problem, cset, schedule, cfg.n_iters, gap_tol=cfg.gap_tol,
            record_every=cfg.record_every, seed=cfg.seed, timing=cfg.timing,
        )
    else:
        net = _build_network(cfg)
        problem, theta_true, cset, test = _build_problem(cfg, net.n_agents)
        if cfg.kind in ("lasso", "mc-square", "mc-gauss"):
            cert = None
            if cfg.certificate:
                alpha = schedule.alpha if schedule.kind == "power" else 1.0
                cert = compute_certificate(problem, net, cset, alpha, seed=cfg.seed)
            metrics = run_defw(
                problem, net, cset, schedule, cfg.n_iters, seed=cfg.seed,
                ac_rounds=cfg.ac_rounds, certificate=cert, test_set=test,
                record_every=cfg.record_every, timing=cfg.timing,
            )
        elif cfg.kind == "sparsified-lasso":
            sp = cfg.sparsify
            selection = CoordSelection(
                scheme=sp.get("scheme", "random"),
                alpha_comm=float(sp.get("alpha_comm", 0.05)),
                seed=cfg.seed,
            )
            metrics = run_sparsified_defw(
                problem, net, cset, schedule, selection, cfg.n_iters,
                seed=cfg.seed, c_l=float(sp.get("c_l", 1.0)),
                ell_mode=sp.get("ell_mode", "experiment"),
                record_every=cfg.record_every, timing=cfg.timing,
            )
        elif cfg.kind == "baseline-dpg":
            dp = cfg.dpg
            config = DpgConfig(rule=dp.get("rule", "lasso"), c1=float(dp.get("c1", 0.1)))
            metrics = run_dpg(
                problem, net, cset, config, cfg.n_iters,
                record_every=cfg.record_every, timing=cfg.timing, seed=cfg.seed,
            )
        else:
            raise ValueError(f"unhandled kind {cfg.kind!r}")
    metrics.extras["radius"] = cset.radius
    if theta_true is not None:
        metrics.extras["theta_true_norm"] = float(cset.norm(theta_true))
    if cfg.out:
        metrics.write_csv(cfg.out)
    return metrics


def materialize_instance(cfg, out_prefix):
    """Write the configured instance (and network) to disk for inspection.

    Produces ``<prefix>.instance.npz`` plus ``<prefix>.edges.txt`` and
    ``<prefix>.weights.csv`` for decentralized kinds; returns the paths.
    """
    paths = []
    kind = cfg.problem_kind or cfg.kind
    n_agents = _n_agents(cfg)
    problem, theta_true, cset, test = _build_problem(cfg, n_agents)
    npz_path = f"{out_prefix}.instance.npz"
    if isinstance(problem, LassoProblem):
        np.savez_compressed(
            npz_path,
            kind=kind,
            theta_true=theta_true,
            radius=cset.radius,
            A=np.stack([a.A for a in problem.agents]),
            y=np.stack([a.y for a in problem.agents]),
        )
    else:
        np.savez_compressed(
            npz_path,
            kind=kind,
            theta_true=theta_true if theta_true is not None else np.zeros(0),
            radius=cset.radius,
            agent_rows=np.concatenate([a.rows for a in problem.agents]),
            agent_cols=np.concatenate([a.cols for a in problem.agents]),
            agent_values=np.concatenate([a.values for a in problem.agents]),
            agent_sizes=np.array([a.rows.size for a in problem.agents]),
            test_rows=test.rows, test_cols=test.cols, test_values=test.values,
        )
    paths.append(npz_path)
    if cfg.kind != "centralized-fw":
        net = _build_network(cfg)
        edge_path = f"{out_prefix}.edges.txt"
        weight_path = f"{out_prefix}.weights.csv"
        save_edge_list(net.adjacency, edge_path)
        save_weights_csv(net, weight_path)
        paths.extend([edge_path, weight_path])
    return paths
