"""Spot scenarios, monthly forward curves and the rolling front month.

Spot model::

    S_k = seasonal(k) * exp(X_k)
    seasonal(k) = level + amplitude * cos(2 pi (k - phase) / 365)
    X_{k+1} = X_k e^{-a} + sqrt(sigma^2 (1 - e^{-2a}) / (2a)) Z_k

i.e. the exact one-day transition of an Ornstein-Uhlenbeck factor (a random
walk when ``a == 0``). Forwards are conditional expectations of the delivery
month's average spot. ``risk_premium`` moves the long-run level of X under the
pricing measure to ``-risk_premium``; the default 0 prices forwards at their
real-world expectation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

MAX_CELLS = 2**31 - 1


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class MarketModelParams:
    seasonal_level: float = 20.0
    seasonal_amplitude: float = 6.0
    seasonal_phase: float = 290.0
    mean_reversion_speed: float = 0.05
    volatility: float = 0.03
    initial_log_deviation: float = 0.0
    risk_premium: float = 0.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if not math.isfinite(v):
                raise ScenarioError(f"market parameter {name} is not finite: {v!r}")
        if self.volatility < 0:
            raise ScenarioError(f"volatility must be >= 0, got {self.volatility}")
        if self.mean_reversion_speed < 0:
            raise ScenarioError(
                f"mean_reversion_speed must be >= 0, got {self.mean_reversion_speed}"
            )
        if not self.seasonal_level > self.seasonal_amplitude >= 0:
            raise ScenarioError(
                "need seasonal_level > seasonal_amplitude >= 0, got "
                f"{self.seasonal_level} and {self.seasonal_amplitude}"
            )

    def seasonal(self, days) -> np.ndarray:
        days = np.asarray(days, dtype=float)
        return self.seasonal_level + self.seasonal_amplitude * np.cos(
            2.0 * np.pi * (days - self.seasonal_phase) / 365.0
        )

    def decay(self, horizon) -> np.ndarray:
        """exp(-a * horizon)."""
        return np.exp(-self.mean_reversion_speed * np.asarray(horizon, dtype=float))

    def conditional_variance(self, horizon) -> np.ndarray:
        """Var[X_{k+h} | X_k]."""
        h = np.asarray(horizon, dtype=float)
        a = self.mean_reversion_speed
        if a == 0.0:
            return self.volatility**2 * h
        return self.volatility**2 * -np.expm1(-2.0 * a * h) / (2.0 * a)


def default_month_starts(n_days: int, n_months: int = 12) -> np.ndarray:
    """Split ``n_days`` into ``n_months`` near-equal months, longer ones first."""
    if not 1 <= n_months <= n_days:
        raise ScenarioError(f"cannot split {n_days} days into {n_months} months")
    base, extra = divmod(n_days, n_months)
    lengths = [base + 1] * extra + [base] * (n_months - extra)
    return np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(int)


def _check_month_starts(month_starts, n_days: int) -> np.ndarray:
    ms = np.asarray(month_starts, dtype=int)
    if ms.ndim != 1 or ms.size == 0 or ms[0] != 0:
        raise ScenarioError("month_starts must be a non-empty sequence starting at 0")
    if np.any(np.diff(ms) <= 0):
        raise ScenarioError(f"month_starts must be strictly increasing: {ms.tolist()}")
    if ms[-1] >= n_days:
        raise ScenarioError(f"last month start {ms[-1]} is not before K={n_days}")
    return ms


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Spot matrix (scenario x day) with optional monthly forward curves.

    ``monthly_forwards[i, k, j]`` is the price on day k of the forward
    delivering over month j; NaN where the contract is not traded (k >= n_j).
    """

    spot: np.ndarray
    month_starts: np.ndarray
    monthly_forwards: np.ndarray | None = None
    seed: int | None = None
    params: MarketModelParams | None = field(default=None, repr=False)

    def __post_init__(self):
        spot = np.array(self.spot, dtype=float)
        if spot.ndim != 2 or spot.shape[1] < 1:
            raise ScenarioError(f"spot must be a 2-d (M, K) matrix, got shape {spot.shape}")
        if not np.all(np.isfinite(spot)) or np.any(spot <= 0):
            raise ScenarioError("all spot prices must be finite and > 0")
        spot.setflags(write=False)
        object.__setattr__(self, "spot", spot)
        ms = _check_month_starts(self.month_starts, spot.shape[1])
        ms.setflags(write=False)
        object.__setattr__(self, "month_starts", ms)
        if self.monthly_forwards is not None:
            fw = np.array(self.monthly_forwards, dtype=float)
            if fw.shape != (spot.shape[0], spot.shape[1], ms.size):
                raise ScenarioError(f"monthly_forwards has shape {fw.shape}")
            fw.setflags(write=False)
            object.__setattr__(self, "monthly_forwards", fw)

    @property
    def n_scenarios(self) -> int:
        return self.spot.shape[0]

    @property
    def n_days(self) -> int:
        return self.spot.shape[1]

    @property
    def month_ends(self) -> np.ndarray:
        """Exclusive end day of each month (the next start, or K)."""
        return np.append(self.month_starts[1:], self.n_days)

    @property
    def month_lengths(self) -> np.ndarray:
        return self.month_ends - self.month_starts

    def month_of_day(self, k) -> np.ndarray:
        return np.searchsorted(self.month_starts, k, side="right") - 1

    def subset(self, rows) -> "ScenarioSet":
        fw = None if self.monthly_forwards is None else self.monthly_forwards[rows]
        return ScenarioSet(self.spot[rows], self.month_starts, fw, self.seed, self.params)

    def front_month_series(self) -> tuple[np.ndarray, np.ndarray]:
        """Rolling front-month prices (M, K) and their delivery month per day.

        Days of the last month carry NaN and month index -1.
        """
        if self.monthly_forwards is None:
            raise ScenarioError("scenario set has no forward curves")
        months = front_month_index(self.month_starts, self.n_days)
        prices = np.full(self.spot.shape, np.nan)
        ok = months >= 0
        days = np.nonzero(ok)[0]
        prices[:, days] = self.monthly_forwards[:, days, months[ok]]
        return prices, months


def front_month_index(month_starts, n_days: int) -> np.ndarray:
    """Delivery month of the first nearby forward per day, -1 in the last month."""
    ms = np.asarray(month_starts)
    j = np.searchsorted(ms, np.arange(n_days), side="right")
    return np.where(j < ms.size, j, -1)


def gen_spot_paths(
    params: MarketModelParams,
    n_scenarios: int,
    n_days: int,
    seed: int,
    month_starts=None,
) -> ScenarioSet:
    """Simulate ``n_scenarios`` spot paths over ``n_days`` days.

    Scenario i draws its shocks from its own child of ``SeedSequence(seed)``,
    so rows do not depend on how many scenarios are generated alongside them.
    """
    if n_scenarios < 1 or n_days < 2:
        raise ScenarioError(f"need M >= 1 and K >= 2, got M={n_scenarios}, K={n_days}")
    if n_scenarios * n_days > MAX_CELLS:
        raise ScenarioError(f"M*K = {n_scenarios * n_days} exceeds {MAX_CELLS} cells")
    if month_starts is None:
        month_starts = default_month_starts(n_days, min(12, n_days))

    children = np.random.SeedSequence(seed).spawn(n_scenarios)
    shocks = np.empty((n_scenarios, n_days - 1))
    for i, ss in enumerate(children):
        shocks[i] = np.random.default_rng(ss).standard_normal(n_days - 1)

    phi = float(params.decay(1.0))
    step_sd = float(np.sqrt(params.conditional_variance(1.0)))
    x = np.empty((n_scenarios, n_days))
    x[:, 0] = params.initial_log_deviation
    for k in range(1, n_days):
        x[:, k] = phi * x[:, k - 1] + step_sd * shocks[:, k - 1]
    spot = params.seasonal(np.arange(n_days))[None, :] * np.exp(x)
    return ScenarioSet(spot, month_starts, None, seed, params)


def log_deviation(s: ScenarioSet, params: MarketModelParams) -> np.ndarray:
    """Recover X_k = log(S_k / seasonal(k))."""
    return np.log(s.spot / params.seasonal(np.arange(s.n_days))[None, :])


def forward_price(params: MarketModelParams, x_now, day: int, delivery_days) -> np.ndarray:
    """Pricing-measure expectation of the average spot over ``delivery_days``.

    ``x_now`` is X on ``day`` (any shape); the result has the same shape.
    """
    d = np.asarray(delivery_days, dtype=float)
    if np.any(d <= day):
        raise ScenarioError(f"delivery days must lie after trading day {day}")
    h = d - day
    decay = params.decay(h)
    m = -params.risk_premium
    var = params.conditional_variance(h)
    x = np.asarray(x_now, dtype=float)[..., None]
    expo = m + (x - m) * decay + 0.5 * var
    return np.mean(params.seasonal(d) * np.exp(expo), axis=-1)


def gen_forward_curves(s: ScenarioSet, params: MarketModelParams | None = None) -> ScenarioSet:
    """Fill ``monthly_forwards`` for every (day, month) with day < month start."""
    params = params if params is not None else s.params
    if params is None:
        raise ScenarioError("forward curves need the market model parameters")
    x = log_deviation(s, params)
    ms, me = s.month_starts, s.month_ends
    fw = np.full((s.n_scenarios, s.n_days, ms.size), np.nan)
    m = -params.risk_premium
    for j in range(1, ms.size):
        d = np.arange(ms[j], me[j], dtype=float)
        k = np.arange(ms[j], dtype=float)
        h = d[None, :] - k[:, None]
        decay = params.decay(h)
        base = params.seasonal(d)[None, :] * np.exp(m * (1.0 - decay) + 0.5 * params.conditional_variance(h))
        # F[i,k] = mean_d base[k,d] * exp(x[i,k] * decay[k,d])
        expo = np.exp(x[:, : ms[j], None] * decay[None, :, :])
        fw[:, : ms[j], j] = np.mean(base[None] * expo, axis=-1)
    return replace(s, monthly_forwards=fw, params=params)


def forward_for(s: ScenarioSet, scenario: int, k: int, month: int) -> float:
    if s.monthly_forwards is None:
        raise ScenarioError("scenario set has no forward curves")
    if not 0 < month < s.month_starts.size or k >= s.month_starts[month]:
        raise ScenarioError(
            f"forward for month {month} is not traded on day {k} "
            f"(trading stops before delivery)"
        )
    return float(s.monthly_forwards[scenario, k, month])


NO_TRADABLE_FORWARD = (None, None)


def rolling_front_month(s: ScenarioSet, scenario: int, k: int):
    """(price, delivery month) of the first nearby forward on day ``k``.

    Returns ``NO_TRADABLE_FORWARD`` during the last month.
    """
    if not 0 <= k < s.n_days:
        raise ScenarioError(f"day {k} outside [0, {s.n_days})")
    j = int(front_month_index(s.month_starts, s.n_days)[k])
    if j < 0:
        return NO_TRADABLE_FORWARD
    return forward_for(s, scenario, k, j), j


def ingest_csv(path, month_starts=None, header: bool = False) -> ScenarioSet:
    """Read an M x K spot matrix (row = scenario) from a comma-separated file.

    Row and column numbers in error messages are 1-based and count data rows
    only.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            vals = []
            for c, cell in enumerate(line, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ScenarioError(f"{path}: non-numeric cell {cell!r} at row {r} col {c}") from None
                if not math.isfinite(v) or v <= 0:
                    raise ScenarioError(f"{path}: non-positive or non-finite price {cell!r} at row {r} col {c}")
                vals.append(v)
            if rows and len(vals) != len(rows[0]):
                raise ScenarioError(
                    f"{path}: ragged row {r} has {len(vals)} columns, expected {len(rows[0])}"
                )
            rows.append(vals)
    if not rows:
        raise ScenarioError(f"{path}: no data rows")
    spot = np.array(rows)
    if month_starts is None:
        month_starts = default_month_starts(spot.shape[1], min(12, spot.shape[1]))
    return ScenarioSet(spot, month_starts)


def export_csv(s: ScenarioSet, path, header: bool = False) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"day_{k}" for k in range(s.n_days)])
        for row in s.spot:
            w.writerow([repr(float(v)) for v in row])
