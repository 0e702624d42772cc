"""Static figures for sweeps and closed-loop runs (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.2),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def plot_sweep(result, path) -> None:
    """Mean E_tc and E_to against network size, one line per target ratio."""
    sizes = np.array(result.config.sizes)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, sharex=True)
        for key, ax, label in (("mean_e_tc", axes[0], "mean $E_{tc}$"), ("mean_e_to", axes[1], "mean $E_{to}$")):
            for ratio in result.config.ratios:
                y = result.series(key, ratio)
                ok = np.isfinite(y) & (y > 0)
                if ok.any():
                    ax.plot(sizes[ok], y[ok], "o-", label=f"r/n = {ratio:g}")
            ax.set_xscale("log")
            ax.set_xlabel("network size n")
            ax.set_ylabel(label)
            if any(np.isfinite(result.series(key, r)).any() for r in result.config.ratios):
                ax.set_yscale("log")
                ax.legend()
            else:
                ax.text(0.5, 0.5, "undefined for all realizations", ha="center", va="center", transform=ax.transAxes)
        fig.suptitle(f"{result.config.model}, {result.config.realizations} realizations")
        fig.savefig(path)
        plt.close(fig)


def plot_closed_loop(traj, path, setpoint=None) -> None:
    """Target output and estimation-error norm of a simulated loop."""
    t = traj.times
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2)
        z = traj.signals.get("z")
        if z is not None:
            for i in range(z.shape[1]):
                ax1.plot(t, z[:, i], label=f"z{i + 1}")
            if setpoint is not None:
                for v in np.atleast_1d(setpoint):
                    ax1.axhline(v, color="0.5", ls="--", lw=0.8)
            ax1.set_ylabel("target z(t)")
            ax1.legend()
        else:
            ax1.plot(t, traj.signals["x"])
            ax1.set_ylabel("state x(t)")
        ax1.set_xlabel("t")
        e = np.linalg.norm(traj.signals["e"], axis=1)
        ax2.semilogy(t, np.maximum(e, 1e-300))
        ax2.set_xlabel("t")
        ax2.set_ylabel("|w - T x|")
        fig.savefig(path)
        plt.close(fig)
