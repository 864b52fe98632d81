"""Static vector-figure rendering for reports.

Everything here draws to SVG files with a pinned hash salt and no
timestamp metadata, so re-rendering the same data produces byte-identical
output.  Rendering is optional plumbing: nothing in the solver stack
imports this module.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .channel import Trajectory  # noqa: E402
from .drivers import SolveReport  # noqa: E402
from .experiments import ExperimentResult  # noqa: E402
from .scenario import Scenario  # noqa: E402

__all__ = [
    "render_comparison_figure",
    "render_convergence_figure",
    "render_sweep_figure",
    "render_trajectory_figure",
]

_SVG_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _new_axes():
    plt.rcParams["svg.hashsalt"] = "uavmec"
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    return fig, ax


def render_trajectory_figure(
    scenario: Scenario, tracks: Mapping[str, Trajectory], destination: str
) -> None:
    """Ground tracks over the user field, one labeled curve per entry."""
    fig, ax = _new_axes()
    for label, traj in tracks.items():
        ax.plot(traj.waypoints[:, 0], traj.waypoints[:, 1], marker=".", markersize=3, label=label)
    for i, user in enumerate(scenario.users):
        ax.scatter(*user.position, marker="s", color="black", zorder=5)
        ax.annotate(
            f"user {i + 1} (w={user.weight:g})",
            user.position,
            textcoords="offset points",
            xytext=(6, 6),
            fontsize=8,
        )
    ax.scatter(*scenario.uav.start, marker="^", color="tab:green", zorder=5, label="start")
    ax.scatter(*scenario.uav.end, marker="v", color="tab:red", zorder=5, label="end")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(destination, **_SVG_KWARGS)
    plt.close(fig)


def render_sweep_figure(results: Sequence[ExperimentResult], destination: str) -> None:
    """Objective versus swept value, one curve per scheme; failed rows skipped."""
    fig, ax = _new_axes()
    variable = results[0].variable if results else "value"
    schemes: dict[str, list[ExperimentResult]] = {}
    for row in results:
        if row.error is None:
            schemes.setdefault(row.scheme, []).append(row)
    for scheme, rows in schemes.items():
        rows = sorted(rows, key=lambda r: r.value)
        ax.plot(
            [r.value for r in rows],
            [r.objective_bits for r in rows],
            marker="o",
            label=scheme,
        )
    ax.set_xlabel(variable.replace("_", " "))
    ax.set_ylabel("weighted sum bits")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(destination, **_SVG_KWARGS)
    plt.close(fig)


def render_comparison_figure(results: Sequence[ExperimentResult], destination: str) -> None:
    """Horizontal bars, one per successful grid cell, labeled by scheme."""
    fig, ax = _new_axes()
    rows = [r for r in results if r.error is None]
    ax.barh(
        range(len(rows)),
        [r.objective_bits for r in rows],
        color="tab:blue",
    )
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([r.scheme for r in rows], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("weighted sum bits")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(destination, **_SVG_KWARGS)
    plt.close(fig)


def render_convergence_figure(report: SolveReport, destination: str) -> None:
    """Restored objective after each outer round."""
    fig, ax = _new_axes()
    rounds = range(1, len(report.objective_trace) + 1)
    ax.plot(list(rounds), list(report.objective_trace), marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("weighted sum bits")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(destination, **_SVG_KWARGS)
    plt.close(fig)
