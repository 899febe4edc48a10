import os
import sys

import numpy as np
import pytest

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from cohortcast.arimax import EstimationConfig, ModelOrder  # noqa: E402
from cohortcast.cohort_matrix import CohortMatrix, CohortMonth, month_range  # noqa: E402
from cohortcast.synth import SynthConfig, generate  # noqa: E402

NAN = np.nan

TABLE_ONE_VALUES = [
    [26000, 27000, 28000, 29000, 30000],
    [31000, 32000, 33000, 34000, NAN],
    [27000, 28000, 29000, NAN, NAN],
    [29000, 30000, NAN, NAN, NAN],
    [30000, NAN, NAN, NAN, NAN],
]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo and end-to-end runs")


@pytest.fixture
def table_one() -> CohortMatrix:
    """The September 2023 to January 2024 staircase seen in February 2024."""
    cohorts = month_range(CohortMonth(2023, 9), CohortMonth(2024, 1))
    return CohortMatrix(cohorts, 5, np.array(TABLE_ONE_VALUES, dtype=float), CohortMonth(2024, 2))


@pytest.fixture
def table_one_records():
    rows = []
    for t, cohort in enumerate(month_range(CohortMonth(2023, 9), CohortMonth(2024, 1))):
        for u, value in enumerate(TABLE_ONE_VALUES[t]):
            if not np.isnan(value):
                rows.append((str(cohort), u, float(value)))
    return rows


@pytest.fixture
def small_estimation() -> EstimationConfig:
    return EstimationConfig(order_grid=[ModelOrder(p=0, d=0, q=0), ModelOrder(p=1, d=0, q=0),
                                        ModelOrder(p=0, d=1, q=0)])


@pytest.fixture
def synthetic():
    """Fully known generated matrix with its covariates."""
    return generate(SynthConfig(n_cohorts=24, horizon_count=6, seed=7))
