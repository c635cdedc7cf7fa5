import numpy as np
import pytest

from gas_storage import smod
from gas_storage.market import MarketModelParams, gen_spot_paths
from gas_storage.storage import check_feasibility, paper_preset, replay
from gas_storage.training import TrainConfig


@pytest.fixture(scope="module")
def small():
    s = gen_spot_paths(MarketModelParams(), 40, 60, seed=9)
    spec = paper_preset(60, 40_000.0, month_starts=s.month_starts)
    cfg = TrainConfig(epochs=3, batch_size=16, n_train=32, n_val=8, seed=2)
    return s, spec, cfg


def test_untrained_policy_is_feasible_and_replays(small):
    s, spec, cfg = small
    p = smod.default_params(s, spec, np.arange(32), cfg)
    wealth, viol, ledger = smod.simulate_episode_smod(p, s.spot, spec, record=True)
    assert check_feasibility(spec, ledger)["ok"]
    assert np.all(viol == 0)
    storage, flows = replay(spec, s.spot, ledger.spot_actions)
    np.testing.assert_allclose(storage, ledger.storage, atol=1e-9 * spec.capacity)
    np.testing.assert_allclose(flows.sum(axis=1) - spec.overhead, wealth, rtol=1e-12)


def test_training_log_and_determinism(small):
    s, spec, cfg = small
    a = smod.train_smod(cfg, s, spec)
    b = smod.train_smod(cfg, s, spec)
    assert len(a.log) == cfg.epochs
    assert [r["epoch"] for r in a.log] == [1, 2, 3]
    assert a.log == b.log
    assert all(np.array_equal(x, y) for x, y in zip(a.params.flat(), b.params.flat()))


def test_training_improves_the_objective(small):
    s, spec, cfg = small
    res = smod.train_smod(TrainConfig(epochs=8, batch_size=16, n_train=32, n_val=8), s, spec)
    assert res.log[-1]["train_loss"] < res.log[0]["train_loss"]


def test_tiny_instance_is_learned(tiny):
    s, spec = tiny
    res = smod.train_smod(TrainConfig(epochs=300, batch_size=1, n_train=1, n_val=0), s, spec)
    report, ledger = smod.evaluate(res.params, s, spec)
    assert report.pnl[0] >= 59.4
    assert ledger.storage[0, -1] == pytest.approx(0.0, abs=1e-6 * spec.capacity)


def test_horizon_mismatch_rejected(small):
    s, spec, cfg = small
    p = smod.default_params(s, spec, np.arange(32), cfg)
    with pytest.raises(ValueError, match="horizon"):
        smod.simulate_episode_smod(p, s.spot[:, :30], spec)
