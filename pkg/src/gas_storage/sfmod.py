"""Spot-and-forward model: a second head trades the rolling front-month
forward, whose delivery is fixed at the start of its month and then absorbed
by the spot leg.

Forward trades on days of month j-1 are on the month-j contract; their sum is
the daily delivery rate of month j. Nothing is traded during the last month.
The spot head acts on bounds shifted by the current delivery rate, so the
aggregate (spot plus delivery) obeys the same daily and level constraints as
the spot-only model.
"""
from __future__ import annotations

import numpy as np

from gas_storage import autodiff as ad
from gas_storage import policy as pol
from gas_storage.market import ScenarioSet, front_month_index
from gas_storage.report import PnLReport
from gas_storage.smod import _day_to_subnet, _Recorder, _scaled, default_numeraire
from gas_storage.storage import (
    StorageSpec,
    apply_forced_withdrawal,
    effective_bounds,
    step_cash,
    terminal_reachable,
)
from gas_storage.training import SfmodConfig, TrainResult, fit, split_rows


def simulate_episode_sfmod(
    params: pol.PolicyParams,
    spot: np.ndarray,
    front: np.ndarray,
    spec: StorageSpec,
    layers=None,
    record: bool = False,
):
    """Run the two-head policy over a batch (B, K) of spot and front-month
    forward prices (NaN where nothing is tradable).

    Returns ``(wealth, violation, ledger)`` as the spot-only simulator; the
    ledger additionally carries forward trades, deliveries and forward prices.
    """
    spot = np.atleast_2d(spot)
    front = np.atleast_2d(front)
    B, K = spot.shape
    if K != spec.n_days or K != params.day_to_subnet.size or front.shape != spot.shape:
        raise ValueError(
            f"horizon mismatch: prices {spot.shape}/{front.shape}, storage {spec.n_days}, "
            f"policy {params.day_to_subnet.size}"
        )
    if params.output_dim != 2:
        raise ValueError(f"the spot-and-forward model needs 2 outputs, policy has {params.output_dim}")
    ms = spec.month_starts
    lengths = spec.month_lengths
    month = np.searchsorted(ms, np.arange(K), side="right") - 1
    target = front_month_index(ms, K)
    ns = params.norm_stats
    day_feat = (np.arange(K) - ns.shift[0]) / ns.scale[0]
    spot_feat = (spot - ns.shift[2]) / ns.scale[2]
    # the last month has no forward; its feature sits at the training mean
    fwd_feat = np.nan_to_num((front - ns.shift[3]) / ns.scale[3], nan=0.0)

    level = np.zeros(B)
    cash = np.zeros(B)
    forced = np.zeros(B, dtype=bool)
    violation = np.zeros(B)
    deliveries = [np.zeros(B) for _ in range(ms.size)]
    if record:
        rec = _Recorder(B, K)
        fwd_actions = np.zeros((B, K))

    for k in range(K):
        j = target[k]
        d = deliveries[month[k]]
        forced |= ~terminal_reachable(spec, level, k + 1)
        lo, hi = effective_bounds(spec, level, k, d, strict=False, keep_reachable=True)
        gap = ad.value(lo) - ad.value(hi)
        violation = violation + np.maximum(gap, 0.0)
        lo, hi = apply_forced_withdrawal((lo, hi), ~forced & (gap <= 0))

        x = ad.stack_columns([day_feat[k], _scaled(level, ns, 1), spot_feat[:, k], fwd_feat[:, k]])
        out = pol.forward(params, k, x, layers)
        action = pol.squash_action(ad.take(out, (slice(None), 0)), lo, hi)
        trade = None
        if j >= 0:
            cap = spec.alpha * spec.capacity / lengths[j]
            trade = pol.squash_action(ad.take(out, (slice(None), 1)), -cap, cap)
            deliveries[j] = ad.add(deliveries[j], trade)
            flow = step_cash(action, spot[:, k], spec.kappa, (trade, front[:, k], lengths[j]))
        else:
            flow = step_cash(action, spot[:, k], spec.kappa)
        if record:
            rec.day(k, level, action, lo, hi, flow, forced)
            if trade is not None:
                fwd_actions[:, k] = ad.value(trade)
        cash = ad.add(cash, flow)
        level = ad.add(ad.add(level, action), d)

    terminal = np.abs(ad.value(level))
    violation = violation + np.where(terminal > 1e-6 * spec.capacity, terminal, 0.0)
    wealth = ad.sub(cash, spec.overhead)
    ledger = None
    if record:
        ledger = rec.finish(
            level,
            violation,
            spec.overhead,
            forward_actions=fwd_actions,
            deliveries=np.stack([np.broadcast_to(ad.value(d), (B,)) for d in deliveries], axis=1),
            forward_prices=front.copy(),
        )
    return wealth, violation, ledger


def front_prices(scenarios: ScenarioSet) -> np.ndarray:
    prices, _ = scenarios.front_month_series()
    return prices


def default_params(scenarios: ScenarioSet, spec: StorageSpec, train_rows, config: SfmodConfig) -> pol.PolicyParams:
    front = front_prices(scenarios)
    stats = pol.fit_norm_stats(scenarios.n_days, spec.capacity, scenarios.spot[train_rows], front[train_rows])
    d2s = _day_to_subnet(scenarios, config)
    return pol.init_params([4, *config.hidden, 2], d2s, stats, config.seed)


def _spec_for(spec: StorageSpec, scenarios: ScenarioSet, config: SfmodConfig) -> StorageSpec:
    if spec.month_starts is None or not np.array_equal(spec.month_starts, scenarios.month_starts):
        spec = spec.with_(month_starts=scenarios.month_starts)
    if spec.alpha != config.alpha:
        spec = spec.with_(alpha=config.alpha)
    return spec


def train_sfmod(
    config: SfmodConfig,
    scenarios: ScenarioSet,
    spec: StorageSpec,
    init: pol.PolicyParams | None = None,
    progress=None,
) -> TrainResult:
    """Fit the two-head policy; ``config.alpha`` overrides ``spec.alpha``."""
    config.validate()
    spec = _spec_for(spec, scenarios, config)
    train_rows, val_rows = split_rows(scenarios.n_scenarios, config)
    params = init if init is not None else default_params(scenarios, spec, train_rows, config)
    numeraire = config.numeraire or default_numeraire(scenarios.spot[train_rows], spec)
    spot = scenarios.spot
    front = front_prices(scenarios)

    def simulate(p, rows, layers=None):
        w, viol, _ = simulate_episode_sfmod(p, spot[rows], front[rows], spec, layers)
        return w, viol

    return fit(simulate, params, train_rows, val_rows, numeraire, config, progress)


def evaluate(params: pol.PolicyParams, scenarios: ScenarioSet, spec: StorageSpec, method: str = "sfmod"):
    """Report and ledger of the policy on every scenario of the set."""
    if spec.month_starts is None:
        spec = spec.with_(month_starts=scenarios.month_starts)
    wealth, _, ledger = simulate_episode_sfmod(params, scenarios.spot, front_prices(scenarios), spec, record=True)
    return PnLReport(method, wealth, spec.capacity, ledger.storage), ledger
