"""PNG figures for the CLI report path (non-interactive Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import RateReport  # noqa: E402

# the most informative theorems to draw, in order of preference
_PREFERRED = ("psm.pointwise", "spingarn.pointwise", "parallel.pointwise", "sequential.pointwise",
              "ergodic.ab", "ergodic.eps", "distance.sum")


def _positive(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, float)
    return np.where(v > 0, v, np.nan)


def rates_figure(report: RateReport, path, title: str = "", max_panels: int = 4) -> list[str]:
    """Observed quantity against its bound on log-log axes, one panel per theorem."""
    names = [c.theorem for c in report.checks]
    chosen = [t for t in _PREFERRED if t in names]
    chosen += [t for t in names if t not in chosen]
    chosen = chosen[:max_panels]
    ncol = max(1, min(2, len(chosen)))
    nrow = max(1, (len(chosen) + 1) // 2)
    fig, axes = plt.subplots(nrow, ncol, figsize=(5.2 * ncol, 3.8 * nrow), squeeze=False)
    for ax, name in zip(axes.flat, chosen):
        c = report.get(name)
        ax.loglog(c.k, _positive(c.observed), label="observed", lw=1.4)
        ax.loglog(c.k, _positive(c.bound), "--", label="bound", lw=1.2)
        bad = ~c.passed
        if bad.any():
            ax.loglog(c.k[bad], _positive(c.observed[bad]), "rx", label="violation")
        ax.set_title(name, fontsize=10)
        ax.set_xlabel("k")
        ax.legend(fontsize=8)
    for ax in list(axes.flat)[len(chosen):]:
        ax.axis("off")
    if not chosen:
        axes[0, 0].text(0.5, 0.5, report.skipped or "no rate checks", ha="center", va="center", wrap=True)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return chosen


def compare_figure(series: dict, path, title: str = "") -> None:
    """``series[variant] = (k, pointwise_residual, ergodic_residual)``."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for name, (k, pw, erg) in series.items():
        axes[0].loglog(k, _positive(pw), label=name, lw=1.2)
        axes[1].loglog(k, _positive(erg), label=name, lw=1.2)
    axes[0].set_title("pointwise residual")
    axes[1].set_title("ergodic residual")
    for ax in axes:
        ax.set_xlabel("k")
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
