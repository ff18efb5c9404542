"""Static SVG figures rendered from the same arrays that go into the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt keeps element ids stable across runs
matplotlib.rcParams["svg.hashsalt"] = "clipdsm"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def line_chart(path, x, series: dict, xlabel: str, ylabel: str, logy: bool = True, title: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y) & ((y > 0) if logy else True)
        ax.plot(np.asarray(x)[ok], y[ok], label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def metrics_chart(path, rows) -> Path:
    """Objective, consensus error and (when present) recovery error over rounds."""
    k = [r.k for r in rows]
    series = {
        "f(x_bar)": [r.f_bar for r in rows],
        "consensus error": [r.consensus_err for r in rows],
    }
    if any(r.recovery_err is not None for r in rows):
        series["recovery error"] = [np.nan if r.recovery_err is None else r.recovery_err for r in rows]
    return line_chart(path, k, series, "round k", "value")


def noise_panels(path, hist_noise, ccdf_noise, hist_levy, ccdf_levy) -> Path:
    """Histogram and log-log CCDF for the oracle noise and the stable reference."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for col, (hist, ccdf, label) in enumerate(
        ((hist_noise, ccdf_noise, "oracle noise"), (hist_levy, ccdf_levy, "stable reference"))
    ):
        edges, counts = hist
        axes[0, col].bar(edges[:-1], counts, width=np.diff(edges), align="edge")
        axes[0, col].set_title(f"{label}: histogram")
        axes[0, col].set_xlabel("magnitude")
        axes[1, col].plot(ccdf[:, 0], ccdf[:, 1], ".", markersize=2)
        axes[1, col].set_title(f"{label}: log-log tail")
        axes[1, col].set_xlabel("log10 magnitude")
        axes[1, col].set_ylabel("log10 P(|X| >= x)")
    return _save(fig, path)


def image_row(path, images: dict) -> Path:
    fig, axes = plt.subplots(1, len(images), figsize=(2.2 * len(images), 2.6))
    axes = np.atleast_1d(axes)
    for ax, (name, img) in zip(axes, images.items()):
        ax.imshow(img, cmap="gray", vmin=0, vmax=255)
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    return _save(fig, path)


def box_chart(path, groups: dict, ylabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    names = list(groups)
    ax.boxplot([groups[n] for n in names])
    ax.set_xticks(range(1, len(names) + 1), names)
    ax.set_yscale("log")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    return _save(fig, path)
