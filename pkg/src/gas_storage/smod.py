"""Spot-only model: one trading decision per day on the spot proxy."""
from __future__ import annotations

import numpy as np

from gas_storage import autodiff as ad
from gas_storage import policy as pol
from gas_storage.market import ScenarioSet
from gas_storage.report import PnLReport
from gas_storage.storage import (
    EpisodeLedger,
    StorageSpec,
    apply_forced_withdrawal,
    effective_bounds,
    step_cash,
    terminal_reachable,
)
from gas_storage.training import TrainConfig, TrainResult, fit, split_rows


def simulate_episode_smod(
    params: pol.PolicyParams,
    spot: np.ndarray,
    spec: StorageSpec,
    layers=None,
    record: bool = False,
):
    """Run the policy over a batch of spot paths (B, K).

    Returns ``(wealth, violation, ledger)``; ``wealth`` is a ``Var`` when
    ``layers`` are taped. ``violation`` (MWh) is zero unless bounds crossed.
    The ledger is None unless ``record``.
    """
    spot = np.atleast_2d(spot)
    B, K = spot.shape
    if K != spec.n_days or K != params.day_to_subnet.size:
        raise ValueError(f"horizon mismatch: prices {K}, storage {spec.n_days}, policy {params.day_to_subnet.size}")
    ns = params.norm_stats
    day_feat = (np.arange(K) - ns.shift[0]) / ns.scale[0]
    spot_feat = (spot - ns.shift[2]) / ns.scale[2]

    level = np.zeros(B)
    cash = np.zeros(B)
    forced = np.zeros(B, dtype=bool)
    violation = np.zeros(B)
    if record:
        rec = _Recorder(B, K)

    for k in range(K):
        # latch: once today's level cannot be emptied from tomorrow on, withdraw maximally
        forced |= ~terminal_reachable(spec, level, k + 1)
        lo, hi = effective_bounds(spec, level, k, strict=False, keep_reachable=True)
        gap = ad.value(lo) - ad.value(hi)
        violation = violation + np.maximum(gap, 0.0)
        lo, hi = apply_forced_withdrawal((lo, hi), ~forced & (gap <= 0))

        x = ad.stack_columns([day_feat[k], _scaled(level, ns, 1), spot_feat[:, k]])
        raw = ad.take(pol.forward(params, k, x, layers), (slice(None), 0))
        action = pol.squash_action(raw, lo, hi)
        flow = step_cash(action, spot[:, k], spec.kappa)
        if record:
            rec.day(k, level, action, lo, hi, flow, forced)
        cash = ad.add(cash, flow)
        level = ad.add(level, action)

    terminal = np.abs(ad.value(level))
    violation = violation + np.where(terminal > 1e-6 * spec.capacity, terminal, 0.0)
    wealth = ad.sub(cash, spec.overhead)
    ledger = rec.finish(level, violation, spec.overhead) if record else None
    return wealth, violation, ledger


def _scaled(level, ns, i):
    if ns.shift[i]:
        level = ad.sub(level, ns.shift[i])
    return ad.mul(level, 1.0 / ns.scale[i])


class _Recorder:
    def __init__(self, B, K):
        self.storage = np.zeros((B, K + 1))
        self.actions = np.zeros((B, K))
        self.lo = np.zeros((B, K))
        self.hi = np.zeros((B, K))
        self.flows = np.zeros((B, K))
        self.forced = np.zeros((B, K), dtype=bool)
        self.forward = None

    def day(self, k, level, action, lo, hi, flow, forced):
        self.storage[:, k] = ad.value(level)
        self.actions[:, k] = ad.value(action)
        self.lo[:, k] = ad.value(lo)
        self.hi[:, k] = ad.value(hi)
        self.flows[:, k] = ad.value(flow)
        self.forced[:, k] = forced

    def finish(self, level, violation, overhead, **extra) -> EpisodeLedger:
        self.storage[:, -1] = ad.value(level)
        return EpisodeLedger(
            self.storage, self.actions, self.lo, self.hi, self.flows, self.forced,
            np.asarray(violation), overhead, **extra,
        )


def default_params(scenarios: ScenarioSet, spec: StorageSpec, train_rows, config: TrainConfig) -> pol.PolicyParams:
    stats = pol.fit_norm_stats(scenarios.n_days, spec.capacity, scenarios.spot[train_rows])
    d2s = _day_to_subnet(scenarios, config)
    return pol.init_params([3, *config.hidden, 1], d2s, stats, config.seed)


def _day_to_subnet(scenarios: ScenarioSet, config: TrainConfig) -> np.ndarray:
    monthly = pol.monthly_subnets(scenarios.month_starts, scenarios.n_days)
    if config.n_subnets is None:
        return monthly
    # n_subnets equal blocks of days
    return (np.arange(scenarios.n_days) * config.n_subnets) // scenarios.n_days


def default_numeraire(spot_train: np.ndarray, spec: StorageSpec) -> float:
    return float(spec.capacity * np.mean(spot_train))


def train_smod(
    config: TrainConfig,
    scenarios: ScenarioSet,
    spec: StorageSpec,
    init: pol.PolicyParams | None = None,
    progress=None,
) -> TrainResult:
    config.validate()
    train_rows, val_rows = split_rows(scenarios.n_scenarios, config)
    params = init if init is not None else default_params(scenarios, spec, train_rows, config)
    numeraire = config.numeraire or default_numeraire(scenarios.spot[train_rows], spec)
    spot = scenarios.spot

    def simulate(p, rows, layers=None):
        w, viol, _ = simulate_episode_smod(p, spot[rows], spec, layers)
        return w, viol

    return fit(simulate, params, train_rows, val_rows, numeraire, config, progress)


def evaluate(params: pol.PolicyParams, scenarios: ScenarioSet, spec: StorageSpec, method: str = "smod"):
    """Report and ledger of the policy on every scenario of the set."""
    wealth, _, ledger = simulate_episode_smod(params, scenarios.spot, spec, record=True)
    return PnLReport(method, wealth, spec.capacity, ledger.storage), ledger
