"""Simulated agent networks: graph sampling, Metropolis-Hastings mixing
weights, spectral quantities, and average-consensus (AC) message rounds.

All randomness is seeded and every per-agent reduction runs in a fixed
ascending-index order, so repeated builds and AC sweeps are bit-identical
for a given seed regardless of BLAS threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkModel",
    "SpanningTree",
    "gen_erdos_renyi",
    "gen_ring",
    "gen_path",
    "gen_complete",
    "is_connected",
    "metropolis_weights",
    "lambda2",
    "t0_alpha",
    "t0_alpha_ceiling",
    "ac_round",
    "ac_multi_round",
    "build_spanning_tree",
    "save_edge_list",
    "load_edge_list",
    "save_weights_csv",
]

STOCHASTIC_TOL = 1e-12

# full symmetric eigensolve below this size, deflated power iteration above
_EIG_DENSE_MAX = 512


class NetworkModel:
    """Undirected agent network with a doubly stochastic mixing matrix.

    Attributes
    ----------
    n_agents : int
        Number of agents N.
    adjacency : (N, N) bool ndarray
        Symmetric edge relation with an empty diagonal.
    weights : (N, N) float ndarray
        Symmetric doubly stochastic mixing matrix W; W[i, j] > 0 only on
        edges or the diagonal.
    lambda2 : float
        Second largest eigenvalue magnitude of W (the per-round AC
        contraction factor).
    degrees : (N,) int ndarray
    neighbor_lists : tuple of int ndarrays
        Ascending neighbor indices per agent (determinism contract).
    """

    def __init__(self, adjacency, weights):
        adjacency = np.asarray(adjacency, dtype=bool)
        weights = np.asarray(weights, dtype=float)
        n = adjacency.shape[0]
        if adjacency.ndim != 2 or adjacency.shape != (n, n):
            raise ValueError("adjacency must be a square matrix")
        if weights.shape != (n, n):
            raise ValueError("weights shape does not match adjacency")
        if adjacency.diagonal().any():
            raise ValueError("adjacency must have an empty diagonal")
        if not np.array_equal(adjacency, adjacency.T):
            raise ValueError("adjacency must be symmetric")
        if not np.array_equal(weights, weights.T):
            raise ValueError("weights must be symmetric")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        row = weights.sum(axis=1)
        col = weights.sum(axis=0)
        if np.abs(row - 1.0).max() > STOCHASTIC_TOL or np.abs(col - 1.0).max() > STOCHASTIC_TOL:
            raise ValueError("weights must be doubly stochastic (row/col sums 1 within 1e-12)")
        off_support = weights * ~(adjacency | np.eye(n, dtype=bool))
        if off_support.any():
            raise ValueError("positive weights allowed only on edges or the diagonal")

        self.n_agents = n
        self.adjacency = adjacency
        self.weights = weights
        self.degrees = adjacency.sum(axis=1)
        self.neighbor_lists = tuple(np.flatnonzero(adjacency[i]) for i in range(n))
        # reduction order per agent: ascending over {i} union neighbors
        self._mix_order = tuple(
            np.sort(np.append(self.neighbor_lists[i], i)) for i in range(n)
        )
        self.lambda2 = lambda2(weights, check=False)
        if is_connected(adjacency) and not self.lambda2 < 1.0:
            raise ValueError("mixing matrix violates |lambda2| < 1 on a connected graph")

    def __repr__(self):
        return (
            f"NetworkModel(n_agents={self.n_agents}, "
            f"edges={int(self.adjacency.sum()) // 2}, lambda2={self.lambda2:.6f})"
        )


@dataclass
class SpanningTree:
    """BFS spanning tree used to account index-broadcast cost.

    ``parent[root] == -1``; every other agent reaches the root through the
    parent chain, and every tree edge is a graph edge.
    """

    root: int
    parent: np.ndarray
    depth: np.ndarray

    def edges(self):
        return [(i, int(self.parent[i])) for i in range(len(self.parent)) if self.parent[i] >= 0]


def is_connected(adjacency):
    """BFS connectivity check on a boolean adjacency matrix."""
    adjacency = np.asarray(adjacency, dtype=bool)
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adjacency[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def gen_erdos_renyi(n, p, seed, max_retries=100):
    """Sample a connected Erdos-Renyi graph; returns the adjacency matrix.

    Each unordered pair is included independently with probability ``p``
    under the seeded generator.  Disconnected samples are resampled with an
    incremented seed, up to ``max_retries`` attempts.
    """
    if n < 2:
        raise ValueError("need at least 2 agents")
    if not 0.0 < p <= 1.0:
        raise ValueError("edge probability must lie in (0, 1]")
    iu = np.triu_indices(n, k=1)
    for attempt in range(max_retries):
        rng = np.random.default_rng(seed + attempt)
        mask = rng.random(len(iu[0])) < p
        adj = np.zeros((n, n), dtype=bool)
        adj[iu[0][mask], iu[1][mask]] = True
        adj |= adj.T
        if is_connected(adj):
            return adj
    raise ValueError(
        f"disconnected topology: no connected Erdos-Renyi sample with "
        f"n={n}, p={p} after {max_retries} attempts"
    )


def gen_ring(n):
    """Ring topology on ``n`` agents."""
    if n < 3:
        raise ValueError("ring needs at least 3 agents")
    adj = np.zeros((n, n), dtype=bool)
    idx = np.arange(n)
    adj[idx, (idx + 1) % n] = True
    adj |= adj.T
    return adj


def gen_path(n):
    """Path topology 0-1-...-(n-1)."""
    if n < 2:
        raise ValueError("path needs at least 2 agents")
    adj = np.zeros((n, n), dtype=bool)
    idx = np.arange(n - 1)
    adj[idx, idx + 1] = True
    adj |= adj.T
    return adj


def gen_complete(n):
    """Complete topology on ``n`` agents."""
    if n < 2:
        raise ValueError("complete graph needs at least 2 agents")
    return ~np.eye(n, dtype=bool)


def metropolis_weights(adjacency):
    """Build a :class:`NetworkModel` with Metropolis-Hastings weights.

    For an edge (i, j): ``W[i, j] = 1 / (1 + max(deg_i, deg_j))``; the
    diagonal absorbs the remaining mass so W is doubly stochastic.
    Requires a connected topology.
    """
    adjacency = np.asarray(adjacency, dtype=bool)
    if not is_connected(adjacency):
        raise ValueError("metropolis_weights requires a connected topology")
    n = adjacency.shape[0]
    deg = adjacency.sum(axis=1)
    w = np.zeros((n, n))
    ii, jj = np.nonzero(np.triu(adjacency, k=1))
    for i, j in zip(ii, jj):
        wij = 1.0 / (1.0 + max(deg[i], deg[j]))
        w[i, j] = wij
        w[j, i] = wij
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return NetworkModel(adjacency, w)


def lambda2(weights, check=True, tol=1e-10):
    """Second largest (in magnitude) eigenvalue of a symmetric doubly
    stochastic matrix, in [0, 1]."""
    weights = np.asarray(weights, dtype=float)
    if check:
        if not np.allclose(weights, weights.T, atol=1e-12, rtol=0.0):
            raise ValueError("lambda2 requires a symmetric matrix")
        if np.abs(weights.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("lambda2 requires a (doubly) stochastic matrix")
    n = weights.shape[0]
    if n <= _EIG_DENSE_MAX:
        mags = np.sort(np.abs(np.linalg.eigvalsh(weights)))
        lam = float(mags[-2]) if n >= 2 else 0.0
    else:
        lam = _lambda2_power(weights, tol=tol)
    return float(min(max(lam, 0.0), 1.0))


def _lambda2_power(weights, tol=1e-10, max_iter=100000):
    # power iteration on W deflated by the known top eigenvector 1/sqrt(N)
    n = weights.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        v = weights @ v
        v -= v.mean()
        s = np.linalg.norm(v)
        if s == 0.0:
            return 0.0
        v /= s
        if abs(s - prev) <= tol * max(s, 1.0):
            return s
        prev = s
    return prev


def t0_alpha(lam, alpha):
    """Smallest integer t >= 1 with ``lam <= (t/(t+1))^alpha / (1 + t^-alpha)``.

    This is the burn-in index entering the consensus-error certificates;
    found by linear scan, which always terminates since the right-hand side
    increases to 1.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda2 must lie in [0, 1)")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    t = 1
    while lam > (t / (t + 1.0)) ** alpha / (1.0 + t ** (-alpha)):
        t += 1
    return t


def t0_alpha_ceiling(lam, alpha):
    """Closed-form ceiling estimate ``ceil(1 / (lam^(-1/(1+alpha)) - 1))``.

    Agrees with the scanned minimum at alpha = 1; underestimates it for
    alpha < 1 (the scan in :func:`t0_alpha` is authoritative).
    """
    if lam == 0.0:
        return 1
    return max(1, int(np.ceil(1.0 / (lam ** (-1.0 / (1.0 + alpha)) - 1.0))))


def _as_agent_stack(values, net):
    try:
        vals = np.asarray(values, dtype=float)
    except ValueError as exc:
        raise ValueError(f"agents hold values of mismatched dimension: {exc}") from exc
    if vals.dtype == object:
        raise ValueError("agents hold values of mismatched dimension")
    if vals.ndim < 1 or vals.shape[0] != net.n_agents:
        raise ValueError(
            f"expected one value per agent (got shape {vals.shape} for "
            f"{net.n_agents} agents)"
        )
    return vals


def ac_round(values, net):
    """One round of the AC update: ``out_i = sum_j W[i, j] * values_j``.

    ``values`` stacks one array per agent along axis 0.  Each agent's
    weighted sum is accumulated sequentially over its sorted neighbor list
    plus itself, so the result is independent of threading.  The mean across
    agents is preserved, and the stacked deviation-from-mean norm contracts
    by at most ``net.lambda2``.
    """
    vals = _as_agent_stack(values, net)
    out = np.zeros_like(vals)
    w = net.weights
    for i in range(net.n_agents):
        acc = np.zeros(vals.shape[1:], dtype=float)
        for j in net._mix_order[i]:
            acc += w[i, j] * vals[j]
        out[i] = acc
    return out


def ac_multi_round(values, net, rounds):
    """Apply :func:`ac_round` ``rounds`` times (mixing by W^rounds)."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    out = _as_agent_stack(values, net)
    for _ in range(rounds):
        out = ac_round(out, net)
    return out


def build_spanning_tree(net, root=0):
    """Deterministic BFS spanning tree (sorted-neighbor traversal)."""
    adjacency = net.adjacency if isinstance(net, NetworkModel) else np.asarray(net, dtype=bool)
    if not is_connected(adjacency):
        raise ValueError("cannot build a spanning tree on a disconnected graph")
    n = adjacency.shape[0]
    parent = np.full(n, -1, dtype=int)
    depth = np.full(n, -1, dtype=int)
    depth[root] = 0
    queue = [root]
    while queue:
        nxt = []
        for i in queue:
            for j in np.flatnonzero(adjacency[i]):
                if depth[j] < 0:
                    depth[j] = depth[i] + 1
                    parent[j] = i
                    nxt.append(j)
        queue = nxt
    return SpanningTree(root=root, parent=parent, depth=depth)


def save_edge_list(adjacency, path):
    """Write the topology as one ``i j`` pair per line (0-based)."""
    adjacency = np.asarray(adjacency, dtype=bool)
    ii, jj = np.nonzero(np.triu(adjacency, k=1))
    with open(path, "w") as fh:
        for i, j in zip(ii, jj):
            fh.write(f"{i} {j}\n")


def load_edge_list(path, n_agents=None):
    """Read an edge-list file; returns the boolean adjacency matrix."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            i, j = int(parts[0]), int(parts[1])
            if i == j or i < 0 or j < 0:
                raise ValueError(f"{path}:{lineno}: invalid edge ({i}, {j})")
            pairs.append((i, j))
    if n_agents is None:
        n_agents = 1 + max(max(i, j) for i, j in pairs)
    adj = np.zeros((n_agents, n_agents), dtype=bool)
    for i, j in pairs:
        if i >= n_agents or j >= n_agents:
            raise ValueError(f"edge ({i}, {j}) outside declared agent range {n_agents}")
        adj[i, j] = adj[j, i] = True
    return adj


def save_weights_csv(net, path):
    """Dump the dense mixing matrix as CSV for inspection."""
    np.savetxt(path, net.weights, delimiter=",", fmt="%.17g")
