"""Seeded synthetic cohort data with a tunable coupling between adjacent columns."""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .cohort_matrix import CohortCovariates, CohortMatrix, CohortMonth, Month

COVARIATE_NAME = "cohort_quality"


class SynthConfig(BaseModel):
    """Generator parameters.

    ``prev_column_rho`` dials how much of a cell's idiosyncratic shock is
    inherited from the previous column of the same cohort: 0 makes columns
    independent given the cohort level, 1 makes them move together.
    """

    model_config = ConfigDict(frozen=True)

    n_cohorts: int = Field(36, ge=2)
    horizon_count: int = Field(12, ge=1)
    base_level: float = Field(1000.0, gt=0)
    cohort_trend: float = 5.0
    decay: float = Field(0.9, gt=0, le=1)
    prev_column_rho: float = Field(0.9, ge=0, le=1)
    noise_sigma: float = Field(50.0, ge=0)
    covariate_effect: float = 20.0
    observation_noise: float = Field(0.2, ge=0, description="Share of noise_sigma added per cell")
    start_month: Month = CohortMonth(2021, 1)
    seed: int = 0

    @property
    def prediction_month(self) -> CohortMonth:
        """First month at which every generated cell is known."""
        return self.start_month + (self.n_cohorts - 1 + self.horizon_count)


def generate(cfg: SynthConfig) -> Tuple[CohortMatrix, CohortCovariates]:
    rng = np.random.default_rng(cfg.seed)
    n, U = cfg.n_cohorts, cfg.horizon_count

    quality = np.cumsum(rng.normal(0.0, 1.0, n))
    t = np.arange(n)
    level = cfg.base_level + cfg.cohort_trend * t + cfg.covariate_effect * quality

    relative_sigma = cfg.noise_sigma / cfg.base_level
    shocks = 1.0 + relative_sigma * rng.normal(0.0, 1.0, (n, U))
    coupled = np.empty((n, U))
    coupled[:, 0] = shocks[:, 0]
    for u in range(1, U):
        coupled[:, u] = cfg.prev_column_rho * coupled[:, u - 1] + (1.0 - cfg.prev_column_rho) * shocks[:, u]

    retention = cfg.decay ** np.arange(U)
    values = level[:, None] * retention[None, :] * coupled
    observation = rng.normal(0.0, 1.0, (n, U))
    values = values + cfg.noise_sigma * cfg.observation_noise * retention[None, :] * observation
    values = np.maximum(values, 0.0)

    cohorts = tuple(cfg.start_month + k for k in range(n))
    matrix = CohortMatrix(cohorts, U, values, cfg.prediction_month)
    covariates = CohortCovariates(cohorts, (COVARIATE_NAME,), quality.reshape(-1, 1))
    return matrix, covariates
