"""Static figures written next to the CSV outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from attain.dynamics import Trajectory  # noqa: E402
from attain.pipeline import SweepTable  # noqa: E402

# fixed metadata keeps PNG bytes stable between runs
_META = {"Software": None}


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_trajectory(traj: Trajectory, path, title: str = "") -> None:
    fig, (ax_x, ax_q) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for j in range(traj.states.shape[1]):
        ax_x.plot(traj.times, traj.states[:, j], label=f"x{j}")
    ax_x.set_ylabel("state")
    ax_x.legend(loc="best", fontsize="small")
    ax_q.plot(traj.times, traj.running_cost, color="k")
    ax_q.set_ylabel("running cost")
    ax_q.set_xlabel("t")
    if title:
        ax_x.set_title(title)
    _finish(fig, path)


def plot_sweep(table: SweepTable, path) -> None:
    """Achieved cost per scenario and worst attainment level across the weight grid."""
    rows = [r for r in table.rows if all(math.isfinite(v) for v in r.costs)]
    fig, (ax_j, ax_g) = plt.subplots(1, 2, figsize=(10, 4))
    idx = list(range(len(rows)))
    if len(table.scenario_ids) == 2 and rows:
        ax_j.plot([r.costs[0] for r in rows], [r.costs[1] for r in rows], "o-")
        for r in rows:
            ax_j.annotate(f"{r.weights[0]:.2f}", (r.costs[0], r.costs[1]), fontsize="x-small")
        ax_j.set_xlabel(f"J {table.scenario_ids[0]}")
        ax_j.set_ylabel(f"J {table.scenario_ids[1]}")
        ax_j.set_title("achieved costs (labelled by first weight)")
    else:
        for i, sid in enumerate(table.scenario_ids):
            ax_j.plot(idx, [r.costs[i] for r in rows], "o-", label=sid)
        ax_j.set_xlabel("weight row")
        ax_j.set_ylabel("achieved cost")
        ax_j.legend(loc="best", fontsize="small")
    ax_g.plot(idx, [max(r.gamma) for r in rows], "s-", color="C3")
    ax_g.axhline(0.0, color="0.6", lw=0.8)
    ax_g.set_xlabel("weight row")
    ax_g.set_ylabel("max attainment level")
    _finish(fig, path)
