import sys

import numpy as np
import pytest

from gas_storage.market import ScenarioSet, default_month_starts
from gas_storage.storage import StorageSpec


@pytest.fixture
def tiny():
    """Prices (5, 2, 8), c=10, symmetric rate 10: the optimum is 60."""
    s = ScenarioSet(np.array([[5.0, 2.0, 8.0]]), default_month_starts(3, 3))
    spec = StorageSpec.constant(10.0, 10.0, -10.0, 3, month_starts=s.month_starts)
    return s, spec


def random_spec(rng, n_days, alpha=0.0, n_months=None):
    c = float(rng.uniform(5.0, 50.0))
    n_months = n_months or min(n_days, int(rng.integers(1, 4)))
    return StorageSpec(
        c,
        rng.uniform(0.2, 0.8, n_days) * c,
        -rng.uniform(0.2, 0.8, n_days) * c,
        kappa=float(rng.choice([0.0, rng.uniform(0.0, 0.1)])),
        overhead=float(rng.uniform(0.0, 5.0)),
        month_starts=default_month_starts(n_days, n_months),
        alpha=alpha,
    )


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.RESULTS, key=lambda r: int(r.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
