"""PNG figures for the CLI.

matplotlib is imported lazily with the Agg backend so the numerical
modules never depend on it.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})


def plot_solution(solution, path, title: str = "") -> None:
    """One curve per stored time, drawn through the sample points."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for t, state in zip(solution.times, solution.states):
        ax.plot(state.points().ravel(), state.values.ravel(), lw=1, label=f"t={t:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title(title)
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def plot_convergence(studies, path) -> None:
    """Log-log error against h for each study."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for st in studies:
        hs = 2.0 / (np.asarray(st.n_sequence[: len(st.errors)]) + 1.0)
        ax.loglog(hs, st.errors, "o-", label=f"{st.pair} ({st.estimated_order:.2f})")
    ax.set_xlabel("h")
    ax.set_ylabel("difference to next level")
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def plot_compare(report, path) -> None:
    """Grid masses of both methods with a ±2 standard-error band."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    h = 2.0 / (report.n + 1)
    se = np.sqrt(report.pde_mass * (1 - report.pde_mass) / report.n_paths) / h
    ax.fill_between(report.x, report.pde_mass / h - 2 * se, report.pde_mass / h + 2 * se,
                    alpha=0.3, label="±2 s.e.")
    ax.plot(report.x, report.pde_mass / h, lw=1, label="forward equation")
    ax.plot(report.x, report.mc_mass / h, ".", ms=3, label="paths")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(f"{report.bc}, alpha={report.alpha}, t={report.t}")
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)
