"""Figure rendering for the CLI report paths (written next to the delimited
output; headless Agg backend)."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_rate_fit", "render_oracle_bench"]


def render_rate_fit(iters, values, fit, series_name, path):
    """Log-log scatter of a metric series with its fitted rate line."""
    iters = np.asarray(iters, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (values > 0) & np.isfinite(values)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(iters[keep], values[keep], ".", ms=3, color="#1f77b4", label=series_name)
    ts = np.array([fit.t_lo, fit.t_hi])
    ax.loglog(ts, np.exp(fit.intercept) * ts ** fit.slope, "-", color="#d62728",
              label=f"slope {fit.slope:.3f} (R$^2$={fit.r_squared:.3f})")
    ax.axvspan(fit.t_lo, fit.t_hi, color="0.9", zorder=0)
    ax.set_xlabel("iteration $t$")
    ax.set_ylabel(series_name)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_oracle_bench(rows, path):
    """Timing curves: LO oracle vs projection, per constraint family."""
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for ax, family in zip(axes, ("l1", "trace")):
        for op, style in (("lo", "o-"), ("project", "s--")):
            pts = sorted(
                (r["size"], r["seconds"]) for r in rows
                if r["family"] == family and r["op"] == op
            )
            if pts:
                ax.loglog([p[0] for p in pts], [p[1] for p in pts], style, label=op)
        ax.set_title(f"{family} ball")
        ax.set_xlabel("problem size")
        ax.set_ylabel("median seconds / call")
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
