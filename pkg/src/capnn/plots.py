"""SVG figure rendering: traces, fit overlays, result matrices, timing charts.

All figures are written as SVG with fixed hash salt and no embedded date so a
rerun under the same config produces byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("svg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engine import Trace  # noqa: E402
from .harness import RuntimeBreakdown  # noqa: E402
from .learning import Metrics, ResultMatrix, top_k_hit  # noqa: E402

# cell colors for the response-matrix figure
COLOR_TOP1 = "#4caf50"      # green: argmax matches the true class
COLOR_TOP3 = "#fbceb1"      # apricot: true class within the top 3
COLOR_MISS = "#64b5f6"      # blue: true class outside the top 3
COLOR_MIN_ON_MISS = "#e53935"  # red: row minimum, flagged only on misses


def _savefig(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _new_figure(figsize):
    plt.rcParams["svg.hashsalt"] = "capnn"
    return plt.figure(figsize=figsize)


def plot_trace(trace: Trace, path, nodes=None, probes=None,
               title: str = "transient trace") -> None:
    """Node voltages (left axis) and probe currents (right axis) vs time."""
    nodes = list(nodes) if nodes is not None else list(trace.nodes)
    probes = list(probes) if probes is not None else list(trace.probe_labels)
    fig = _new_figure((8, 4.5))
    ax = fig.add_subplot(111)
    t_ms = trace.times * 1e3
    for n in nodes:
        ax.plot(t_ms, trace.voltage(n), label=f"V({n})")
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("voltage [V]")
    if probes:
        ax2 = ax.twinx()
        for p in probes:
            ax2.plot(t_ms, trace.probe(p) * 1e3, linestyle="--", label=f"I({p})")
        ax2.set_ylabel("current [mA]")
        handles, labels = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(handles + h2, labels + l2, loc="best", fontsize=8)
    else:
        ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    _savefig(fig, path)


def plot_fit_overlay(times: np.ndarray, cascade_current: np.ndarray,
                     fit_current: np.ndarray, residual: float, path) -> None:
    """Two-cell cascade source current against its best single-cell fit."""
    fig = _new_figure((8, 4.5))
    ax = fig.add_subplot(111)
    t_ms = np.asarray(times) * 1e3
    ax.plot(t_ms, np.asarray(cascade_current) * 1e3, label="two-cell cascade")
    ax.plot(t_ms, np.asarray(fit_current) * 1e3, linestyle="--",
            label="best single-cell fit")
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("source current [mA]")
    ax.set_title(f"single-cell fit, normalized RMS residual {residual:.3g}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


def plot_result_matrix(matrix: ResultMatrix, path,
                       metrics: Metrics | None = None) -> None:
    """Color-coded class-response matrix, one row per true class.

    The diagonal cell is green when the row's largest response belongs to the
    true class, apricot when the true class is only within the top 3, and blue
    otherwise; on missed rows the row minimum is marked red.
    """
    values = np.asarray(matrix.values, float)
    n = values.shape[0]
    colors = [["white"] * n for _ in range(n)]
    for r in range(n):
        row = values[r]
        if int(np.argmax(row)) == r:
            colors[r][r] = COLOR_TOP1
        elif top_k_hit(row, r, 3):
            colors[r][r] = COLOR_TOP3
        else:
            colors[r][r] = COLOR_MISS
            colors[r][int(np.argmin(row))] = COLOR_MIN_ON_MISS
    fig = _new_figure((1.1 * n, 0.55 * n + 1.2))
    ax = fig.add_subplot(111)
    ax.set_axis_off()
    cell_text = [[f"{v:.3g}" for v in values[r]] for r in range(n)]
    table = ax.table(cellText=cell_text, cellColours=colors,
                     rowLabels=[f"class {r}" for r in range(n)],
                     colLabels=[f"circuit {c}" for c in range(n)],
                     loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    title = f"mean class-circuit responses [{matrix.units}]"
    if metrics is not None:
        title += f"  top-1 {metrics.top1:.3g}, top-3 {metrics.top3:.3g}"
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _savefig(fig, path)


def plot_timing_breakdown(breakdown: RuntimeBreakdown, path) -> None:
    """Horizontal bar chart of per-component runtime on a log axis."""
    comps = breakdown.components()
    names = list(comps)
    secs = np.array([comps[k] for k in names], float)
    fig = _new_figure((8, 3.2))
    ax = fig.add_subplot(111)
    y = np.arange(len(names))
    shown = np.maximum(secs, 1e-12)  # log axis cannot show exact zeros
    ax.barh(y, shown, color="#607d8b")
    ax.set_yticks(y, names)
    ax.set_xscale("log")
    ax.set_xlabel("seconds (log scale)")
    for k, s in enumerate(secs):
        ax.annotate(f"{s:.3g} s ({s / breakdown.total:.1%})",
                    (shown[k], y[k]), textcoords="offset points",
                    xytext=(4, -3), fontsize=8)
    ax.set_title(f"runtime breakdown, total {breakdown.total:.4g} s")
    fig.tight_layout()
    _savefig(fig, path)


def plot_weight_heatmap(weight_states, path) -> None:
    """Stored capacitor voltages of every class circuit as a 10 x 26 image."""
    w = np.array([ws.voltages for ws in weight_states])
    fig = _new_figure((9, 3.6))
    ax = fig.add_subplot(111)
    im = ax.imshow(w, aspect="auto", cmap="viridis", vmin=0.0)
    ax.set_xlabel("storage capacitor index (25 inputs + output)")
    ax.set_ylabel("class circuit")
    fig.colorbar(im, ax=ax, label="stored voltage [V]")
    ax.set_title("trained weight voltages")
    fig.tight_layout()
    _savefig(fig, path)
