"""Run instrumentation: per-iteration metric records, communication
accounting, and the stable CSV schema shared by all experiment kinds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CommLedger", "RunMetrics", "BASE_COLUMNS", "columns_for_kind", "read_metrics_csv"]

# fixed header prefix for every experiment kind
BASE_COLUMNS = [
    "iter",
    "objective",
    "gap",
    "consensus_err",
    "grad_consensus_err",
    "bound_cp",
    "bound_cg",
    "nnz_or_rank",
    "comm_reals",
    "comm_indices",
    "wall_ms",
    "tracking_err",
]

_EXTRA_COLUMNS = {
    "mc-square": ["mse", "mse_worst"],
    "mc-gauss": ["mse", "mse_worst"],
    "sparsified-lasso": ["agg_err_inf", "xi", "n_coords", "ac_rounds_used"],
}


def columns_for_kind(kind):
    return BASE_COLUMNS + _EXTRA_COLUMNS.get(kind, [])


class CommLedger:
    """Cumulative per-agent counts of exchanged payload.

    ``reals`` counts nonzero real numbers an agent transmits (payload nnz
    times the number of neighbors served); ``indices`` counts integer
    coordinate indices moved over the spanning tree.  Both are
    nondecreasing.
    """

    def __init__(self, n_agents):
        self.n_agents = n_agents
        self.reals = np.zeros(n_agents, dtype=np.int64)
        self.indices = np.zeros(n_agents, dtype=np.int64)

    def add_reals(self, per_agent):
        per_agent = np.asarray(per_agent, dtype=np.int64)
        if (per_agent < 0).any():
            raise ValueError("communication counts cannot decrease")
        self.reals += per_agent

    def add_indices(self, per_agent):
        per_agent = np.asarray(per_agent, dtype=np.int64)
        if (per_agent < 0).any():
            raise ValueError("communication counts cannot decrease")
        self.indices += per_agent

    @property
    def mean_reals(self):
        return float(self.reals.mean())

    @property
    def mean_indices(self):
        return float(self.indices.mean())


@dataclass
class RunMetrics:
    """Column-oriented per-iteration records plus run-level artifacts."""

    kind: str
    columns: dict = field(default_factory=dict)
    certificate: object = None
    final_theta_bar: np.ndarray | None = None
    final_average: np.ndarray | None = None
    max_feasibility_violation: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.columns:
            self.columns = {name: [] for name in columns_for_kind(self.kind)}

    def append(self, row):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown metric columns: {sorted(unknown)}")
        for name in self.columns:
            self.columns[name].append(row.get(name))

    def column(self, name):
        vals = [np.nan if v is None else v for v in self.columns[name]]
        return np.asarray(vals, dtype=float)

    @property
    def n_rows(self):
        return len(self.columns["iter"])

    def write_csv(self, path):
        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for r in range(self.n_rows):
                writer.writerow([_format_cell(self.columns[n][r]) for n in names])


def _format_cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def read_metrics_csv(path):
    """Read a metrics CSV back into {column: float ndarray} (NaN for blanks)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [line for line in reader if line]
    out = {}
    for k, name in enumerate(header):
        out[name] = np.array(
            [float(r[k]) if r[k] != "" else np.nan for r in rows], dtype=float
        )
    return out
