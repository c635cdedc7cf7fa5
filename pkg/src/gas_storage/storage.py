"""Storage facility constraints, fill-level and cash accounting.

Sign convention: a positive action injects into storage (a purchase), a
negative one withdraws (a sale). Bounds are per day: ``withdrawal[k] < 0 <
injection[k]``.

Functions taking a storage level accept floats, arrays or autodiff ``Var``
batches; min/max go through :mod:`gas_storage.autodiff` so that the bounds
stay differentiable in the level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gas_storage import autodiff as ad

DAILY_TOL = 1e-9
TERMINAL_TOL = 1e-6


class InfeasibleDayError(ValueError):
    def __init__(self, day, cause):
        super().__init__(f"infeasible bounds on day {day}: {cause}")
        self.day = day
        self.cause = cause


class FeasibilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StorageSpec:
    capacity: float
    injection: np.ndarray
    withdrawal: np.ndarray
    kappa: float = 0.0
    overhead: float = 0.0
    month_starts: np.ndarray | None = None
    alpha: float = 0.0
    drain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inj = np.array(self.injection, dtype=float)
        wd = np.array(self.withdrawal, dtype=float)
        if inj.ndim != 1 or inj.shape != wd.shape:
            raise ValueError("injection and withdrawal bounds must be 1-d of equal length")
        problems = []
        if not self.capacity > 0:
            problems.append(f"capacity must be > 0, got {self.capacity}")
        if np.any(inj <= 0):
            problems.append(f"injection bounds must be > 0 (day {int(np.argmax(inj <= 0))})")
        if np.any(wd >= 0):
            problems.append(f"withdrawal bounds must be < 0 (day {int(np.argmax(wd >= 0))})")
        if not 0.0 <= self.kappa <= 1.0:
            problems.append(f"kappa must lie in [0, 1], got {self.kappa}")
        if not 0.0 <= self.alpha <= 1.0:
            problems.append(f"alpha must lie in [0, 1], got {self.alpha}")
        if problems:
            raise ValueError("; ".join(problems))
        inj.setflags(write=False)
        wd.setflags(write=False)
        object.__setattr__(self, "injection", inj)
        object.__setattr__(self, "withdrawal", wd)
        if self.month_starts is not None:
            ms = np.array(self.month_starts, dtype=int)
            ms.setflags(write=False)
            object.__setattr__(self, "month_starts", ms)
        # drain[k] = maximal total withdrawal over days k..K-1; drain[K] = 0
        drain = np.append(np.cumsum(-wd[::-1])[::-1], 0.0)
        drain.setflags(write=False)
        object.__setattr__(self, "drain", drain)

    @property
    def n_days(self) -> int:
        return self.injection.size

    @property
    def month_lengths(self) -> np.ndarray:
        ms = self.month_starts
        return np.append(ms[1:], self.n_days) - ms

    def with_(self, **changes) -> "StorageSpec":
        kw = dict(
            capacity=self.capacity,
            injection=self.injection,
            withdrawal=self.withdrawal,
            kappa=self.kappa,
            overhead=self.overhead,
            month_starts=self.month_starts,
            alpha=self.alpha,
        )
        kw.update(changes)
        return StorageSpec(**kw)

    @classmethod
    def constant(cls, capacity, injection, withdrawal, n_days, **kw) -> "StorageSpec":
        return cls(
            capacity,
            np.full(n_days, float(injection)),
            np.full(n_days, float(withdrawal)),
            **kw,
        )

    @classmethod
    def two_regime(
        cls,
        n_days: int = 351,
        capacity: float = 250_000.0,
        withdrawal_switch: int = 170,
        injection_switch: int = 200,
        **kw,
    ) -> "StorageSpec":
        """Slow withdrawal until ``withdrawal_switch``, slow injection after
        ``injection_switch`` (rates in MWh/day: -600/-3072 and 2808/408)."""
        k = np.arange(n_days)
        withdrawal = np.where(k <= withdrawal_switch, -600.0, -3072.0)
        injection = np.where(k <= injection_switch, 2808.0, 408.0)
        return cls(capacity, injection, withdrawal, **kw)


def paper_preset(n_days: int = 351, capacity: float = 250_000.0, **kw) -> StorageSpec:
    """The two-regime facility; regime switches scale with the horizon."""
    scale = n_days / 351.0
    return StorageSpec.two_regime(
        n_days,
        capacity,
        withdrawal_switch=int(round(170 * scale)),
        injection_switch=int(round(200 * scale)),
        **kw,
    )


def effective_bounds(
    spec: StorageSpec,
    level,
    day: int,
    delivery=0.0,
    strict: bool = True,
    keep_reachable: bool = False,
):
    """Merged daily bounds on the spot action.

    ``lo = max(withdrawal, -H) - d`` and ``hi = min(injection, c - H) - d``, so
    that the aggregate action (spot plus delivery) keeps H in [0, c] and within
    the daily rates. With ``keep_reachable`` the headroom ``c`` is further
    capped by what can still be withdrawn from tomorrow on, so that tomorrow's
    level stays emptiable by maturity.
    """
    room = spec.capacity
    if keep_reachable:
        room = min(room, spec.drain[day + 1])
    lo = ad.maximum(ad.neg(level), spec.withdrawal[day])
    hi = ad.minimum(ad.sub(room, level), spec.injection[day])
    if type(delivery) is ad.Var or np.any(delivery):
        lo = ad.sub(lo, delivery)
        hi = ad.sub(hi, delivery)
    if strict:
        lov, hiv = np.asarray(ad.value(lo)), np.asarray(ad.value(hi))
        lv = np.asarray(ad.value(level))
        tol = DAILY_TOL * spec.capacity
        bad = (lov > hiv + tol) | (lv < -tol) | (lv > spec.capacity + tol)
        if np.any(bad):
            lvb = lv[bad].flat[0] if lv.ndim else float(lv)
            if lvb > spec.capacity or lvb < 0:
                cause = f"storage level {lvb} outside [0, {spec.capacity}]"
            else:
                cause = f"lower bound {lov[bad].flat[0]} exceeds upper bound {hiv[bad].flat[0]}"
            raise InfeasibleDayError(day, cause)
    return lo, hi


def terminal_reachable(spec: StorageSpec, level, day: int):
    """Can a level held at the start of ``day`` still be emptied by maturity?"""
    return np.asarray(ad.value(level)) <= spec.drain[day]


def reachability_cap(spec: StorageSpec, level, day: int):
    """Largest aggregate action on ``day`` that keeps the next level emptiable."""
    return ad.sub(spec.drain[day + 1], level)


def critical_day(spec: StorageSpec, level: float | None = None) -> int | None:
    """First day on which ``level`` (default: capacity) can no longer be emptied
    starting the following day; None if it always can."""
    level = spec.capacity if level is None else level
    over = np.nonzero(level > spec.drain[1:])[0]
    return int(over[0]) if over.size else None


def apply_forced_withdrawal(bounds, reachable):
    """Replace the upper bound by the lower one wherever ``reachable`` is False."""
    lo, hi = bounds
    reachable = np.asarray(reachable, dtype=bool)
    if reachable.ndim == 0:
        return (lo, hi) if reachable else (lo, lo)
    return lo, ad.where(reachable, hi, lo)


def delivery_quantity(forward_actions) -> float:
    """Daily delivery rate of a month: the sum of the forward trades made on it."""
    return float(np.sum(forward_actions)) if np.size(forward_actions) else 0.0


def step_cash(spot_action, spot_price, kappa: float = 0.0, forward=None):
    """Cash change of one day.

    ``forward`` is an optional ``(trade, price, month_length)`` triple; its
    premium ``-trade * price * month_length`` is booked on the trade date.
    """
    delta = ad.mul(spot_action, -np.asarray(spot_price))
    if kappa:
        delta = ad.sub(delta, ad.mul(ad.absolute(delta), kappa))
    if forward is not None:
        trade, price, length = forward
        delta = ad.sub(delta, ad.mul(trade, np.asarray(price) * length))
    return delta


@dataclass
class EpisodeLedger:
    """Recorded episodes for a batch of B scenarios (row = scenario).

    ``storage[:, n]`` is the level at the start of day n (n = 0..K).
    ``deliveries[:, j]`` is the fixed daily delivery rate of month j.
    """

    storage: np.ndarray
    spot_actions: np.ndarray
    spot_lower: np.ndarray
    spot_upper: np.ndarray
    cash_flows: np.ndarray
    forced: np.ndarray
    violation: np.ndarray
    overhead: float = 0.0
    forward_actions: np.ndarray | None = None
    deliveries: np.ndarray | None = None
    forward_prices: np.ndarray | None = None

    @property
    def cash(self) -> np.ndarray:
        return self.cash_flows.sum(axis=1) - self.overhead

    @property
    def n_days(self) -> int:
        return self.spot_actions.shape[1]

    def row(self, i: int) -> "EpisodeLedger":
        pick = lambda a: None if a is None else a[i : i + 1]
        return EpisodeLedger(
            self.storage[i : i + 1],
            self.spot_actions[i : i + 1],
            self.spot_lower[i : i + 1],
            self.spot_upper[i : i + 1],
            self.cash_flows[i : i + 1],
            self.forced[i : i + 1],
            self.violation[i : i + 1],
            self.overhead,
            pick(self.forward_actions),
            pick(self.deliveries),
            pick(self.forward_prices),
        )


def delivery_schedule(spec: StorageSpec, forward_actions: np.ndarray) -> np.ndarray:
    """Per-month daily delivery rates (B, J+1) from per-day forward trades.

    Trades on days of month j-1 are on the month-j contract; month 0 receives
    nothing.
    """
    fa = np.atleast_2d(forward_actions)
    ms = spec.month_starts
    d = np.zeros((fa.shape[0], ms.size))
    bounds = np.append(ms, spec.n_days)
    for j in range(1, ms.size):
        d[:, j] = fa[:, bounds[j - 1] : bounds[j]].sum(axis=1)
    return d


def storage_level(spec: StorageSpec, spot_actions, day: int, forward_actions=None):
    """Fill level at the start of ``day`` from recorded actions.

    Completed months contribute their full delivery, the current month the
    deliveries of the days strictly before ``day``.
    """
    sa = np.atleast_2d(spot_actions)
    level = sa[:, :day].sum(axis=1)
    if forward_actions is not None:
        d = delivery_schedule(spec, forward_actions)
        ms = spec.month_starts
        ends = np.append(ms[1:], spec.n_days)
        for j in range(1, ms.size):
            days_delivered = np.clip(day, ms[j], ends[j]) - ms[j]
            level = level + d[:, j] * days_delivered
    return level if np.ndim(spot_actions) > 1 else float(level[0])


def replay(spec: StorageSpec, spot, spot_actions, forward_actions=None, forward_prices=None):
    """Re-run the accounting of recorded actions: (storage path, cash flows).

    ``forward_prices[:, k]`` is the price of the contract traded on day k.
    """
    spot = np.atleast_2d(spot)
    sa = np.atleast_2d(spot_actions)
    B, K = sa.shape
    daily_delivery = np.zeros((B, K))
    fa = None
    if forward_actions is not None:
        fa = np.atleast_2d(forward_actions)
        d = delivery_schedule(spec, fa)
        month = np.searchsorted(spec.month_starts, np.arange(K), side="right") - 1
        daily_delivery = d[:, month]
    storage = np.zeros((B, K + 1))
    storage[:, 1:] = np.cumsum(sa + daily_delivery, axis=1)
    flows = np.zeros((B, K))
    if fa is not None:
        lengths = spec.month_lengths
        front = np.searchsorted(spec.month_starts, np.arange(K), side="right")
    for k in range(K):
        fwd = None
        if fa is not None and front[k] < spec.month_starts.size:
            fwd = (fa[:, k], np.nan_to_num(forward_prices[:, k]), lengths[front[k]])
        flows[:, k] = step_cash(sa[:, k], spot[:, k], spec.kappa, fwd)
    return storage, flows


def check_feasibility(spec: StorageSpec, ledger: EpisodeLedger) -> dict:
    """Measure every constraint violation of recorded episodes.

    Returns the worst absolute breach per constraint (0 when satisfied) and an
    ``ok`` flag using the daily and terminal tolerances.
    """
    c = spec.capacity
    H = ledger.storage
    K = ledger.n_days
    month = np.searchsorted(spec.month_starts, np.arange(K), side="right") - 1 if spec.month_starts is not None else np.zeros(K, int)
    agg = ledger.spot_actions.copy()
    if ledger.deliveries is not None:
        agg = agg + ledger.deliveries[:, month]
    out = {
        "level_below_zero": float(np.max(np.maximum(-H, 0.0))),
        "level_above_capacity": float(np.max(np.maximum(H - c, 0.0))),
        "rate_below_withdrawal": float(np.max(np.maximum(spec.withdrawal[None, :] - agg, 0.0))),
        "rate_above_injection": float(np.max(np.maximum(agg - spec.injection[None, :], 0.0))),
        "terminal_level": float(np.max(np.abs(H[:, -1]))),
    }
    liquidity = 0.0
    if ledger.forward_actions is not None:
        lengths = spec.month_lengths
        front = np.searchsorted(spec.month_starts, np.arange(K), side="right")
        tradable = front < spec.month_starts.size
        cap = np.zeros(K)
        cap[tradable] = spec.alpha * c / lengths[front[tradable]]
        liquidity = float(np.max(np.maximum(np.abs(ledger.forward_actions) - cap[None, :], 0.0)))
        # no trades outside the window of the front month
        liquidity = max(liquidity, float(np.max(np.abs(ledger.forward_actions[:, ~tradable]), initial=0.0)))
    out["liquidity_cap"] = liquidity
    daily = max(
        out["level_below_zero"],
        out["level_above_capacity"],
        out["rate_below_withdrawal"],
        out["rate_above_injection"],
        out["liquidity_cap"],
    )
    out["ok"] = bool(daily <= DAILY_TOL * c and out["terminal_level"] <= TERMINAL_TOL * c)
    return out
