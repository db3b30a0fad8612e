"""Static figure export for CLI reports.

Figures are written as SVG through the non-interactive Agg backend so the
report stays a text artifact next to the CSV/JSON output.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import TimeSeries  # noqa: E402
from .tf import FrequencyResponse  # noqa: E402

plt.rcParams.update({
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "vsgrlc",  # deterministic element ids
    "legend.fontsize": 8,
})


def plot_timeseries(series: TimeSeries, path, title: str = "") -> None:
    """Active power, unit frequency, virtual reactance and PCC frequency against time."""
    t = series.t
    fig, axes = plt.subplots(4, 1, figsize=(7, 9), sharex=True)
    panels = [("P_W", "P (W)"), ("omega_rad_s", "omega (rad/s)"), ("Zv_ohm", "Zv (ohm)")]
    for ax, (q, label) in zip(axes, panels):
        for i in range(series.n_units):
            ax.plot(t, series.unit(i, q), lw=1.0, label=f"unit {i + 1}")
        ax.set_ylabel(label)
    axes[0].legend(loc="best")
    axes[3].plot(t, series["omega_p_rad_s"], color="k", lw=1.0)
    axes[3].set_ylabel("omega_p (rad/s)")
    axes[3].set_xlabel("t (s)")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_bode(responses: dict[str, FrequencyResponse], path, title: str = "") -> None:
    fig, (ax_m, ax_p) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for name, fr in responses.items():
        ax_m.semilogx(fr.omegas, fr.magnitude_db, lw=1.0, label=name)
        ax_p.semilogx(fr.omegas, fr.phase_deg, lw=1.0, label=name)
    ax_m.set_ylabel("magnitude (dB)")
    ax_p.set_ylabel("phase (deg)")
    ax_p.set_xlabel("omega (rad/s)")
    ax_m.legend(loc="best")
    if title:
        ax_m.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
