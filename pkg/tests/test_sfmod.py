import numpy as np
import pytest

from gas_storage import policy as pol
from gas_storage import sfmod, smod
from gas_storage.market import MarketModelParams, ScenarioSet, default_month_starts, gen_forward_curves, gen_spot_paths
from gas_storage.storage import (
    StorageSpec,
    check_feasibility,
    delivery_schedule,
    effective_bounds,
    paper_preset,
    replay,
    step_cash,
)
from gas_storage.training import SfmodConfig, TrainConfig


@pytest.fixture(scope="module")
def market():
    s = gen_forward_curves(gen_spot_paths(MarketModelParams(risk_premium=0.05), 40, 90, seed=5))
    spec = paper_preset(90, 60_000.0, month_starts=s.month_starts)
    return s, spec


def random_two_head(s, spec, seed=0):
    cfg = SfmodConfig(n_train=30, n_val=10, seed=seed)
    p = sfmod.default_params(s, spec, np.arange(30), cfg)
    rng = np.random.default_rng(seed)
    return p.with_flat([a + rng.normal(0, 1, a.shape) for a in p.flat()])


def test_flat_prices_give_zero_pnl_for_any_policy():
    K = 60
    ms = default_month_starts(K, 3)
    s = ScenarioSet(np.full((4, K), 3.0), ms)
    front = np.full((4, K), 3.0)
    front[:, ms[-1]:] = np.nan
    spec = StorageSpec.constant(1000.0, 80.0, -80.0, K, month_starts=ms, alpha=0.5)
    stats = pol.fit_norm_stats(K, 1000.0, s.spot, front)
    p = pol.init_params([4, 6, 2], pol.monthly_subnets(ms, K), stats, seed=3)
    p = p.with_flat([a + np.random.default_rng(1).normal(0, 2, a.shape) for a in p.flat()])
    wealth, _, ledger = sfmod.simulate_episode_sfmod(p, s.spot, front, spec, record=True)
    assert np.abs(ledger.forward_actions).max() > 0
    np.testing.assert_allclose(wealth, 0.0, atol=1e-9 * 1000.0 * 3.0 * K)


def test_single_forward_trade_hand_accounting():
    # one forward purchase of 1 MWh/day for a 30-day month at F=3, then sold via spot at 3
    ms = np.array([0, 30, 60])
    spec = StorageSpec.constant(100.0, 10.0, -10.0, 90, month_starts=ms, alpha=1.0)
    spot = np.full((1, 90), 3.0)
    fa = np.zeros((1, 90))
    fa[0, 5] = 1.0
    sa = np.zeros((1, 90))
    sa[0, 30:60] = -1.0
    prices = np.full((1, 90), 3.0)
    storage, flows = replay(spec, spot, sa, fa, prices)
    assert flows[0, 5] == -90.0
    assert flows[0, 30:60].sum() == 90.0
    assert flows.sum() == 0.0 and storage[0, -1] == 0.0


def test_alpha_zero_reduces_to_spot_only(market):
    s, spec = market
    cfg = TrainConfig(n_train=30, n_val=10)
    p = smod.default_params(s, spec, np.arange(30), cfg)
    front = sfmod.front_prices(s)
    fs = pol.fit_norm_stats(s.n_days, spec.capacity, s.spot, front)
    q = pol.embed_spot_policy(p, (fs.shift[3], fs.scale[3]))
    w1, _, _ = smod.simulate_episode_smod(p, s.spot, spec)
    w2, _, ledger = sfmod.simulate_episode_sfmod(q, s.spot, front, spec.with_(alpha=0.0), record=True)
    assert np.all(ledger.forward_actions == 0)
    np.testing.assert_allclose(w2, w1, rtol=1e-10)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_random_policies_respect_every_constraint(market, alpha):
    s, spec = market
    spec = spec.with_(alpha=alpha)
    p = random_two_head(s, spec, seed=int(alpha * 10))
    front = sfmod.front_prices(s)
    wealth, viol, ledger = sfmod.simulate_episode_sfmod(p, s.spot, front, spec, record=True)
    feas = check_feasibility(spec, ledger)
    assert feas["ok"], feas
    assert np.all(viol == 0)
    last = spec.month_starts[-1]
    assert np.all(ledger.forward_actions[:, last:] == 0)
    assert np.all(ledger.deliveries[:, 0] == 0)
    np.testing.assert_allclose(ledger.deliveries, delivery_schedule(spec, ledger.forward_actions), rtol=1e-12)
    storage, flows = replay(spec, s.spot, ledger.spot_actions, ledger.forward_actions, ledger.forward_prices)
    np.testing.assert_allclose(storage, ledger.storage, atol=1e-9 * spec.capacity)
    np.testing.assert_allclose(flows.sum(axis=1) - spec.overhead, wealth, rtol=1e-10)


def test_training_smoke(market):
    s, spec = market
    cfg = SfmodConfig(epochs=2, batch_size=10, n_train=30, n_val=10, alpha=0.2)
    res = sfmod.train_sfmod(cfg, s, spec)
    assert len(res.log) == 2
    report, ledger = sfmod.evaluate(res.params, s, spec.with_(alpha=0.2))
    assert check_feasibility(spec.with_(alpha=0.2), ledger)["ok"]
    assert report.pnl.size == s.n_scenarios


def test_spot_only_policy_rejected(market):
    s, spec = market
    p = smod.default_params(s, spec, np.arange(30), TrainConfig(n_train=30, n_val=10))
    with pytest.raises(ValueError):
        sfmod.simulate_episode_sfmod(p, s.spot, sfmod.front_prices(s), spec)
