import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gas_storage.storage import (
    EpisodeLedger,
    InfeasibleDayError,
    StorageSpec,
    apply_forced_withdrawal,
    check_feasibility,
    critical_day,
    delivery_quantity,
    delivery_schedule,
    effective_bounds,
    paper_preset,
    replay,
    step_cash,
    storage_level,
    terminal_reachable,
)


def box(c=100.0, inj=50.0, wd=-30.0, n=5, **kw):
    return StorageSpec.constant(c, inj, wd, n, **kw)


def test_effective_bounds_examples():
    spec = box()
    assert effective_bounds(spec, 80.0, 0) == (-30.0, 20.0)
    assert effective_bounds(spec, 0.0, 0) == (0.0, 50.0)
    assert effective_bounds(spec, 95.0, 0, delivery=10.0) == (-40.0, -5.0)


def test_effective_bounds_out_of_range_level_is_infeasible():
    with pytest.raises(InfeasibleDayError, match="day 2"):
        effective_bounds(box(), 130.0, 2)
    # non-strict mode still returns the clamped interval: withdraw at the maximal rate
    assert effective_bounds(box(), 130.0, 2, strict=False) == (-30.0, -30.0)
    # with the reachability cap the interval crosses once H exceeds tomorrow's drain
    lo, hi = effective_bounds(box(), 90.0, 3, strict=False, keep_reachable=True)
    assert (lo, hi) == (-30.0, -60.0)
    with pytest.raises(InfeasibleDayError, match="exceeds"):
        effective_bounds(box(), 90.0, 3, keep_reachable=True)


def test_effective_bounds_vectorized():
    lo, hi = effective_bounds(box(), np.array([0.0, 80.0]), 1)
    assert lo.tolist() == [0.0, -30.0] and hi.tolist() == [50.0, 20.0]


def test_terminal_reachable_single_day_boundary():
    spec = StorageSpec(10.0, np.full(4, 5.0), np.array([-1.0, -2.0, -3.0, -4.0]))
    assert terminal_reachable(spec, 0.0, 0) and terminal_reachable(spec, 0.0, 3)
    assert terminal_reachable(spec, 4.0, 3)
    assert not terminal_reachable(spec, 4.0 + 1e-9, 3)
    assert terminal_reachable(spec, 7.0, 2) and not terminal_reachable(spec, 7.5, 2)


def test_forced_withdrawal_override():
    assert apply_forced_withdrawal((-30.0, 20.0), True) == (-30.0, 20.0)
    assert apply_forced_withdrawal((-30.0, 20.0), False) == (-30.0, -30.0)
    lo, hi = apply_forced_withdrawal((np.array([-3.0, -1.0]), np.array([2.0, 4.0])), np.array([True, False]))
    assert hi.tolist() == [2.0, -1.0]


def test_forced_path_empties_the_storage():
    # full storage that can only just be emptied: forced withdrawal keeps it on track
    spec = StorageSpec.constant(10.0, 10.0, -4.0, 6)
    level, path = 0.0, []
    for k in range(6):
        forced = not terminal_reachable(spec, level, k + 1)
        lo, hi = effective_bounds(spec, level, k, keep_reachable=True)
        lo, hi = apply_forced_withdrawal((lo, hi), not forced)
        level += hi  # greedy filler
        path.append(level)
    assert path[-1] == 0.0
    assert max(path) == 10.0


def brute_force_critical_day(withdrawal, capacity):
    K = len(withdrawal)
    for k in range(K):
        if capacity > sum(abs(w) for w in withdrawal[k + 1 :]):
            return k
    return None


def test_critical_day_matches_scan():
    spec = paper_preset()
    assert critical_day(spec) == brute_force_critical_day(spec.withdrawal.tolist(), spec.capacity)
    for c in (1_000.0, 100_000.0, 248_000.0, 252_000.0):
        s = paper_preset(capacity=c)
        assert critical_day(s) == brute_force_critical_day(s.withdrawal.tolist(), c)


def test_paper_preset_regimes():
    spec = paper_preset()
    assert spec.withdrawal[170] == -600 and spec.withdrawal[171] == -3072
    assert spec.injection[200] == 2808 and spec.injection[201] == 408


def test_delivery_quantity_examples():
    assert delivery_quantity([0.0, 0.0]) == 0.0
    assert delivery_quantity([2.0, -1.0, 4.0]) == 5.0
    spec = box(n=6, month_starts=[0, 2, 4])
    d = delivery_schedule(spec, np.array([[1.0, 2.0, 3.0, 4.0, 9.0, 9.0]]))
    assert d.tolist() == [[0.0, 3.0, 7.0]]


def test_storage_level_with_deliveries():
    # month 1 spans days 30..59; d^1 = 2 traded on day 0
    spec = StorageSpec.constant(1000.0, 50.0, -50.0, 90, month_starts=[0, 30, 60])
    fa = np.zeros((1, 90))
    fa[0, 0] = 2.0
    sa = np.zeros((1, 90))
    assert storage_level(spec, sa, 0, fa)[0] == 0.0
    assert storage_level(spec, sa, 30, fa)[0] == 0.0
    assert storage_level(spec, sa, 31, fa)[0] == 2.0
    assert storage_level(spec, sa, 60, fa)[0] == 60.0
    assert storage_level(spec, sa[0], 3) == 0.0


def test_step_cash_examples():
    assert step_cash(1.0, 2.0) == -2.0
    assert step_cash(-1.0, 2.0, kappa=0.1) == pytest.approx(1.8)
    assert step_cash(0.0, 2.0, forward=(1.0, 3.0, 30)) == -90.0


def test_replay_reproduces_cash_and_levels():
    spec = box(n=4)
    spot = np.array([[3.0, 1.0, 4.0, 2.0]])
    sa = np.array([[20.0, 30.0, -30.0, -20.0]])
    storage, flows = replay(spec, spot, sa)
    assert storage.tolist() == [[0.0, 20.0, 50.0, 20.0, 0.0]]
    assert flows.sum() == -60.0 - 30.0 + 120.0 + 40.0


def test_spec_validation_lists_problems():
    with pytest.raises(ValueError, match="capacity.*kappa"):
        StorageSpec(-1.0, np.ones(3), -np.ones(3), kappa=2.0)
    with pytest.raises(ValueError, match="withdrawal"):
        StorageSpec(1.0, np.ones(3), np.zeros(3))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_days=st.integers(2, 12),
    fill=st.lists(st.floats(0.0, 1.0), min_size=12, max_size=12),
)
def test_any_squashed_policy_stays_feasible(seed, n_days, fill):
    """Actions anywhere in the merged bounds with the reachability latch keep
    every constraint, including terminal emptiness."""
    rng = np.random.default_rng(seed)
    c = float(rng.uniform(1.0, 100.0))
    spec = StorageSpec(c, rng.uniform(0.1, 1.0, n_days) * c, -rng.uniform(0.1, 1.0, n_days) * c)
    level, forced = 0.0, False
    H, acts, los, his = [0.0], [], [], []
    for k in range(n_days):
        forced |= not terminal_reachable(spec, level, k + 1)
        lo, hi = effective_bounds(spec, level, k, keep_reachable=True)
        lo, hi = apply_forced_withdrawal((lo, hi), not forced)
        a = lo + fill[k] * (hi - lo)
        level += a
        acts.append(a)
        los.append(lo)
        his.append(hi)
        H.append(level)
    ledger = EpisodeLedger(
        np.array([H]), np.array([acts]), np.array([los]), np.array([his]),
        np.zeros((1, n_days)), np.zeros((1, n_days), bool), np.zeros(1),
    )
    assert check_feasibility(spec, ledger)["ok"]
