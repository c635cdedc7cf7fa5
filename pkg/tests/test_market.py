import numpy as np
import pytest

from gas_storage.market import (
    NO_TRADABLE_FORWARD,
    MarketModelParams,
    ScenarioError,
    ScenarioSet,
    default_month_starts,
    export_csv,
    forward_for,
    forward_price,
    front_month_index,
    gen_forward_curves,
    gen_spot_paths,
    ingest_csv,
    rolling_front_month,
)


def test_same_seed_same_paths_and_rows_independent_of_count():
    p = MarketModelParams()
    a = gen_spot_paths(p, 50, 40, seed=7)
    b = gen_spot_paths(p, 50, 40, seed=7)
    c = gen_spot_paths(p, 10, 40, seed=7)
    assert np.array_equal(a.spot, b.spot)
    assert np.array_equal(a.spot[:10], c.spot)
    assert not np.array_equal(a.spot, gen_spot_paths(p, 50, 40, seed=8).spot)


def test_zero_volatility_gives_the_seasonal_curve():
    p = MarketModelParams(volatility=0.0)
    s = gen_spot_paths(p, 3, 30, seed=0)
    np.testing.assert_allclose(s.spot, np.tile(p.seasonal(np.arange(30)), (3, 1)), rtol=1e-15)


def test_log_factor_variance_matches_geometric_sum():
    p = MarketModelParams(mean_reversion_speed=0.1, volatility=0.05)
    s = gen_spot_paths(p, 20000, 25, seed=3)
    x = np.log(s.spot / p.seasonal(np.arange(25)))
    phi = np.exp(-0.1)
    step_var = 0.05**2 * (1 - phi**2) / 0.2
    k = 24
    expected = step_var * sum(phi ** (2 * i) for i in range(k))
    assert x[:, k].var() == pytest.approx(expected, rel=0.04)
    assert abs(x[:, k].mean()) < 4 * np.sqrt(expected / 20000)


def test_month_starts_default_split():
    ms = default_month_starts(351)
    assert ms[0] == 0 and ms.size == 12
    lengths = np.diff(np.append(ms, 351))
    assert lengths.max() - lengths.min() == 1


def test_forward_price_against_nested_monte_carlo():
    p = MarketModelParams(mean_reversion_speed=0.05, volatility=0.04, risk_premium=0.03)
    x0, day = 0.1, 10
    delivery = np.arange(30, 40)
    rng = np.random.default_rng(11)
    n = 200_000
    phi = np.exp(-p.mean_reversion_speed)
    sd = np.sqrt(p.volatility**2 * (1 - phi**2) / (2 * p.mean_reversion_speed))
    m = -p.risk_premium
    x = np.full(n, x0)
    acc = np.zeros(n)
    for t in range(day + 1, delivery[-1] + 1):
        x = m + (x - m) * phi + sd * rng.standard_normal(n)
        if t in delivery:
            acc += p.seasonal(t) * np.exp(x)
    payoff = acc / delivery.size
    mc, se = payoff.mean(), payoff.std() / np.sqrt(n)
    assert forward_price(p, x0, day, delivery) == pytest.approx(mc, abs=4 * se)


def test_forward_curves_use_front_month_and_stop_in_last_month():
    p = MarketModelParams()
    s = gen_forward_curves(gen_spot_paths(p, 4, 90, seed=1))
    fm = front_month_index(s.month_starts, 90)
    last = s.month_starts[-1]
    assert np.all(fm[last:] == -1)
    assert rolling_front_month(s, 0, last) == NO_TRADABLE_FORWARD
    price, j = rolling_front_month(s, 2, 5)
    assert j == 1 and price == forward_for(s, 2, 5, 1)
    x = np.log(s.spot[2, 5] / p.seasonal(5))
    d = np.arange(s.month_starts[1], s.month_starts[2])
    assert price == pytest.approx(float(forward_price(p, x, 5, d)), rel=1e-12)
    with pytest.raises(ScenarioError):
        forward_for(s, 0, s.month_starts[1], 1)
    prices, months = s.front_month_series()
    assert np.all(np.isnan(prices[:, last:])) and np.all(np.isfinite(prices[:, :last]))


def test_fair_forward_is_expected_spot():
    p = MarketModelParams(volatility=0.0)
    s = gen_forward_curves(gen_spot_paths(p, 1, 60, seed=0))
    price, j = rolling_front_month(s, 0, 0)
    d = np.arange(s.month_starts[j], s.month_ends[j])
    assert price == pytest.approx(s.spot[0, d].mean(), rel=1e-12)


def test_csv_round_trip_is_exact(tmp_path):
    s = gen_spot_paths(MarketModelParams(), 5, 17, seed=2)
    path = tmp_path / "s.csv"
    export_csv(s, path)
    back = ingest_csv(path, s.month_starts)
    assert np.array_equal(back.spot, s.spot)
    export_csv(s, tmp_path / "h.csv", header=True)
    assert np.array_equal(ingest_csv(tmp_path / "h.csv", header=True).spot, s.spot)


@pytest.mark.parametrize(
    "text, needle",
    [
        ("1,2,3\n4,5\n", "ragged row 2"),
        ("1,2\n3,abc\n", "row 2 col 2"),
        ("1,-2\n", "row 1 col 2"),
        ("", "no data rows"),
    ],
)
def test_csv_errors_name_the_location(tmp_path, text, needle):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ScenarioError, match=needle):
        ingest_csv(path)


def test_invalid_parameters_rejected():
    with pytest.raises(ScenarioError):
        MarketModelParams(volatility=-1.0)
    with pytest.raises(ScenarioError):
        MarketModelParams(seasonal_level=5.0, seasonal_amplitude=6.0)
    with pytest.raises(ScenarioError):
        gen_spot_paths(MarketModelParams(), 0, 10, seed=0)


def test_scenario_arrays_are_read_only():
    s = gen_spot_paths(MarketModelParams(), 2, 10, seed=0)
    with pytest.raises(ValueError):
        s.spot[0, 0] = 1.0
    assert isinstance(s.subset([1]), ScenarioSet)
