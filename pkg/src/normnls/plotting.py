"""Static figures rendered to files (non-interactive Agg backend)."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .functionals import StatePair  # noqa: E402
from .io import atomic_write_bytes  # noqa: E402


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    # fixed metadata keeps the bytes reproducible
    fig.savefig(buf, format="png", dpi=110, metadata={"Software": None})
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def plot_profiles(path, states: list[StatePair], labels: list[str] | None = None,
                  r_cut: float | None = None) -> Path:
    """Radial profiles u (solid) and v (dashed) of each state."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = labels or [f"#{i}" for i in range(len(states))]
    for i, (st, lab) in enumerate(zip(states, labels)):
        c = f"C{i % 10}"
        ax.plot(st.grid.nodes, st.u.values, color=c, label=f"{lab} u")
        ax.plot(st.grid.nodes, st.v.values, color=c, ls="--", label=f"{lab} v")
    if r_cut is None:
        # show where any amplitude exceeds 1e-3 of its maximum
        r_cut = 0.0
        for st in states:
            for f in (st.u.values, st.v.values):
                big = np.nonzero(np.abs(f) > 1e-3 * np.abs(f).max())[0] if f.any() else []
                if len(big):
                    r_cut = max(r_cut, st.grid.nodes[big[-1]])
    if r_cut > 0:
        ax.set_xlim(0, r_cut)
    ax.set_xlabel("r")
    ax.set_ylabel("amplitude")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_branch(path, betas, values, ylabel: str, logy: bool = False) -> Path:
    """A branch quantity against |beta| on a log axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([abs(b) for b in betas], values, "o-")
    ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("|beta|")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save(fig, path)
