"""SVG line plots of sweep tables (needs the optional matplotlib dependency)."""

from __future__ import annotations

import numpy as np


def plot_table(table, path: str, title: str = "") -> None:
    """One line per scheme, mean sum rate with standard-error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed metadata keeps the SVG bytes reproducible
    matplotlib.rcParams["svg.hashsalt"] = "crprecoder"
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for scheme in table.schemes:
        rows = [r for r in table.rows if r.scheme == scheme]
        x = np.array([float(r.sweep_value) for r in rows])
        y = np.array([r.mean_sr_nats for r in rows])
        e = np.array([r.stderr for r in rows])
        ax.errorbar(x, y, yerr=e, marker="o", ms=3, capsize=2, label=scheme)
    ax.set_xlabel(table.axis)
    ax.set_ylabel("mean sum rate [nats]")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
