import numpy as np
import pytest
from pydantic import ValidationError

from cohortcast.cohort_matrix import CohortMonth
from cohortcast.synth import SynthConfig, generate


class TestGenerate:
    """Test the synthetic cohort generator."""

    def test_shape_and_completeness(self):
        """Test the generated matrix is fully known."""
        matrix, covariates = generate(SynthConfig(n_cohorts=10, horizon_count=4))
        assert matrix.shape == (10, 4)
        assert matrix.is_complete()
        assert matrix.cohorts[0] == CohortMonth(2021, 1)
        assert matrix.prediction_month == CohortMonth(2021, 1) + 13
        assert covariates.names == ("cohort_quality",)
        assert covariates.cohorts == matrix.cohorts

    def test_same_seed_same_data(self):
        """Test generation is deterministic in the seed."""
        first, _ = generate(SynthConfig(seed=4))
        second, _ = generate(SynthConfig(seed=4))
        third, _ = generate(SynthConfig(seed=5))
        assert first == second
        assert first != third

    def test_noise_free_levels(self):
        """Test the deterministic skeleton without noise or covariates."""
        cfg = SynthConfig(n_cohorts=3, horizon_count=3, noise_sigma=0.0, covariate_effect=0.0,
                          base_level=100.0, cohort_trend=10.0, decay=0.5)
        matrix, _ = generate(cfg)
        assert matrix.values.tolist() == [[100.0, 50.0, 25.0], [110.0, 55.0, 27.5], [120.0, 60.0, 30.0]]

    def test_decay_ratio(self):
        """Test adjacent columns shrink by the decay factor on average."""
        matrix, _ = generate(SynthConfig(n_cohorts=200, horizon_count=6, decay=0.9, seed=1))
        ratios = matrix.values[:, 1:] / matrix.values[:, :-1]
        assert np.mean(ratios) == pytest.approx(0.9, abs=0.01)

    def test_rho_couples_adjacent_columns(self):
        """Test higher rho gives higher correlation between adjacent column shocks."""
        def adjacent_correlation(rho):
            cfg = SynthConfig(n_cohorts=400, horizon_count=2, prev_column_rho=rho, covariate_effect=0.0,
                              cohort_trend=0.0, observation_noise=0.0, seed=2)
            matrix, _ = generate(cfg)
            return np.corrcoef(matrix.values[:, 0], matrix.values[:, 1])[0, 1]

        low, middle, high = adjacent_correlation(0.0), adjacent_correlation(0.5), adjacent_correlation(1.0)
        assert low < middle < high
        assert high == pytest.approx(1.0)

    def test_values_are_non_negative(self):
        """Test heavy noise is floored at zero."""
        matrix, _ = generate(SynthConfig(noise_sigma=2000.0, seed=3))
        assert np.all(matrix.values >= 0)

    @pytest.mark.parametrize("field,value", [("n_cohorts", 1), ("decay", 0.0), ("prev_column_rho", 1.5),
                                             ("start_month", "2021-13")])
    def test_invalid_config(self, field, value):
        with pytest.raises(ValidationError):
            SynthConfig(**{field: value})
