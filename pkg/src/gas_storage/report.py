"""P&L summary statistics and the report record shared by every method."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_FORMAT = "gas-storage-report"
REPORT_VERSION = 1
FAN_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
HIST_BINS = 30


def summarize(pnl) -> dict:
    """Mean, median and sample standard deviation (n-1; 0 for a single value).

    Even-length medians are the midpoint of the two central values.
    """
    x = np.asarray(pnl, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot summarize an empty P&L vector")
    return {
        "mean": float(np.mean(x)),
        "median": float(np.median(x)),
        "std": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
        "n": int(x.size),
    }


def fill_fan(storage, capacity: float, quantiles=FAN_QUANTILES) -> dict:
    """Per-day mean and quantiles of the relative fill level H/c."""
    rel = np.asarray(storage, dtype=float) / capacity
    return {
        "mean": rel.mean(axis=0).tolist(),
        "quantiles": {f"{q:g}": np.quantile(rel, q, axis=0).tolist() for q in quantiles},
    }


@dataclass
class PnLReport:
    method: str
    pnl: np.ndarray
    capacity: float
    storage: np.ndarray | None = field(default=None, repr=False)
    bins: int = HIST_BINS
    fill_levels: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.pnl = np.asarray(self.pnl, dtype=float).ravel()

    @property
    def stats(self) -> dict:
        return summarize(self.pnl)

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        counts, edges = np.histogram(self.pnl, bins=self.bins)
        return counts, edges

    def to_dict(self) -> dict:
        counts, edges = self.histogram()
        doc = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "method": self.method,
            "capacity": self.capacity,
            "statistics": self.stats,
            "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
            "pnl": self.pnl.tolist(),
        }
        if self.storage is not None:
            doc["fill_levels"] = fill_fan(self.storage, self.capacity)
        elif self.fill_levels is not None:
            doc["fill_levels"] = self.fill_levels
        return doc

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "PnLReport":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError(f"{path}: not a P&L report")
        return cls(
            doc["method"], np.array(doc["pnl"]), doc["capacity"], fill_levels=doc.get("fill_levels")
        )


def write_pnl_csv(report: PnLReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "pnl"])
        for i, v in enumerate(report.pnl):
            w.writerow([i, repr(float(v))])


def write_histogram_csv(report: PnLReport, path) -> None:
    counts, edges = report.histogram()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["left", "right", "count"])
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(n)])


def write_fan_csv(report: PnLReport, path) -> None:
    fan = report.to_dict().get("fill_levels")
    if fan is None:
        raise ValueError(f"report {report.method!r} has no fill levels")
    keys = sorted(fan["quantiles"], key=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "mean", *(f"q{k}" for k in keys)])
        for k, m in enumerate(fan["mean"]):
            w.writerow([k, repr(float(m)), *(repr(float(fan["quantiles"][q][k])) for q in keys)])


def write_stats_table(reports: list[PnLReport], path) -> None:
    """One row per method: mean, median and sample std."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mean", "median", "std", "n"])
        for r in reports:
            s = r.stats
            w.writerow([r.method, repr(s["mean"]), repr(s["median"]), repr(s["std"]), s["n"]])
