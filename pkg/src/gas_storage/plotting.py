"""PNG figures written next to the delimited report files.

Everything here renders off-screen (Agg) from data already in the reports, so
figures can be regenerated without rerunning a model.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from gas_storage.report import PnLReport  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}
# PNG metadata would otherwise embed the matplotlib version
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def pnl_histogram(reports: list[PnLReport], path, bins: int = 30) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        lo = min(r.pnl.min() for r in reports)
        hi = max(r.pnl.max() for r in reports)
        edges = np.linspace(lo, hi, bins + 1) if hi > lo else bins
        for r in reports:
            ax.hist(r.pnl, bins=edges, alpha=0.5, label=f"{r.method} (mean {r.stats['mean']:,.0f})")
        ax.set_xlabel("P&L")
        ax.set_ylabel("scenarios")
        ax.legend(frameon=False)
        _save(fig, path)


def fill_fan(report: PnLReport, path) -> None:
    """Mean relative fill with 5-95% and 25-75% bands."""
    fan = report.to_dict().get("fill_levels")
    if fan is None:
        raise ValueError(f"report {report.method!r} has no fill levels")
    q = fan["quantiles"]
    days = np.arange(len(fan["mean"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.fill_between(days, q["0.05"], q["0.95"], color="C0", alpha=0.15, lw=0, label="5-95%")
        ax.fill_between(days, q["0.25"], q["0.75"], color="C0", alpha=0.3, lw=0, label="25-75%")
        ax.plot(days, fan["mean"], color="C0", label="mean")
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("trading day")
        ax.set_ylabel("fill level / capacity")
        ax.set_title(report.method)
        ax.legend(frameon=False, loc="upper left")
        _save(fig, path)


def spot_scenarios(spot, path, n_paths: int = 20) -> None:
    spot = np.asarray(spot)
    days = np.arange(spot.shape[1])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(days, spot[:n_paths].T, lw=0.6, alpha=0.6)
        ax.plot(days, spot.mean(axis=0), color="k", lw=1.5, label="scenario mean")
        ax.set_xlabel("trading day")
        ax.set_ylabel("spot price")
        ax.legend(frameon=False)
        _save(fig, path)


def compare_boxplot(reports: list[PnLReport], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.boxplot([r.pnl for r in reports], showmeans=True)
        ax.set_xticks(range(1, len(reports) + 1), [r.method for r in reports])
        ax.set_ylabel("P&L")
        _save(fig, path)


def training_curve(log: list[dict], path) -> None:
    epochs = [r["epoch"] for r in log]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(epochs, [r["train_loss"] for r in log], label="train")
        if log and log[0].get("val_loss") is not None:
            ax.plot(epochs, [r["val_loss"] for r in log], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        _save(fig, path)
