import numpy as np
import pandas as pd
import pytest

from cohortcast.cohort_matrix import (
    CellStatus,
    CohortCovariates,
    CohortMatrix,
    CohortMonth,
    empty_matrix,
    from_wide_frame,
    load_records,
    month_range,
)
from cohortcast.errors import (
    ConflictingValue,
    CovariateMissing,
    DuplicateCell,
    IndexOutOfRange,
    MalformedRow,
    MissingDiagonalCell,
    NegativeValue,
    StaircaseGap,
)
from cohortcast.synth import SynthConfig, generate

FEB_24 = CohortMonth(2024, 2)


def diagonal(truth: CohortMatrix, month: CohortMonth):
    """Cells of ``truth`` whose event month is ``month``."""
    rows = []
    for t, cohort in enumerate(truth.cohorts):
        u = month - cohort
        if 0 <= u < truth.horizon_count:
            rows.append((str(cohort), u, truth.values[t, u]))
    return rows


class TestCohortMonth:
    """Test month parsing and arithmetic."""

    def test_parse_and_format(self):
        """Test YYYY-MM round trip."""
        assert str(CohortMonth.parse("2023-09")) == "2023-09"
        assert CohortMonth.parse(" 2024-01 ") == CohortMonth(2024, 1)

    @pytest.mark.parametrize("text", ["2023-13", "2023-9", "23-09", "2023/09", ""])
    def test_parse_rejects_bad_text(self, text):
        """Test malformed months are rejected."""
        with pytest.raises(ValueError):
            CohortMonth.parse(text)

    def test_arithmetic(self):
        """Test month differences cross year boundaries."""
        assert CohortMonth(2024, 2) - CohortMonth(2023, 9) == 5
        assert CohortMonth(2023, 12) + 1 == CohortMonth(2024, 1)
        assert CohortMonth(2024, 1) - 1 == CohortMonth(2023, 12)
        assert CohortMonth(2023, 9) < CohortMonth(2024, 1)

    def test_month_range(self):
        """Test consecutive month ranges are inclusive."""
        months = month_range(CohortMonth(2023, 11), CohortMonth(2024, 2))
        assert [str(m) for m in months] == ["2023-11", "2023-12", "2024-01", "2024-02"]
        assert month_range(CohortMonth(2024, 2), CohortMonth(2024, 1)) == ()


class TestLoadRecords:
    """Test long-format ingestion."""

    def test_table_one_layout(self, table_one_records, table_one):
        """Test the five-cohort staircase has 15 known and 10 unknown cells."""
        matrix = load_records(table_one_records, prediction_month=FEB_24)
        assert matrix.shape == (5, 5)
        assert int(matrix.known_mask().sum()) == 15
        assert int((~matrix.known_mask()).sum()) == 10
        assert matrix == table_one

    def test_prediction_month_defaults_to_month_after_latest_event(self, table_one_records):
        """Test the inferred prediction month."""
        assert load_records(table_one_records).prediction_month == FEB_24

    def test_single_cell(self):
        """Test the smallest valid matrix."""
        matrix = load_records([("2024-01", 0, 5.0)], prediction_month=FEB_24)
        assert matrix.shape == (1, 1)
        assert matrix.is_complete()

    def test_value_in_unknown_cell(self, table_one_records):
        """Test a value claimed for a cell that is not yet known."""
        with pytest.raises(MalformedRow):
            load_records(table_one_records + [("2024-01", 1, 31000.0)], prediction_month=FEB_24)

    def test_missing_known_cell(self, table_one_records):
        """Test a hole in the staircase."""
        rows = [r for r in table_one_records if not (r[0] == "2023-11" and r[1] == 1)]
        with pytest.raises(StaircaseGap):
            load_records(rows, prediction_month=FEB_24)

    def test_duplicate_cell(self, table_one_records):
        """Test duplicate (cohort, u) pairs."""
        with pytest.raises(DuplicateCell):
            load_records(table_one_records + [table_one_records[0]])

    def test_negative_value(self):
        """Test negative revenue is rejected."""
        with pytest.raises(NegativeValue):
            load_records([("2024-01", 0, -1.0)])

    @pytest.mark.parametrize("row", [("2024-13", 0, 1.0), ("2024-01", 0.5, 1.0), ("2024-01", -1, 1.0),
                                     ("2024-01", 0, "abc"), ("2024-01", 0, float("inf"))])
    def test_malformed_rows(self, row):
        """Test rows that cannot be parsed."""
        with pytest.raises(MalformedRow):
            load_records([row])

    def test_dataframe_input(self, table_one_records, table_one):
        """Test records given as a data frame."""
        frame = pd.DataFrame(table_one_records, columns=["cohort_month", "months_since_event", "value"])
        assert load_records(frame) == table_one

    def test_rows_beyond_horizon_are_dropped(self, table_one_records):
        """Test columns past the requested horizon count are ignored."""
        matrix = load_records(table_one_records, horizon_count=3)
        assert matrix.horizon_count == 3
        assert int(matrix.known_mask().sum()) == 12

    def test_scaling(self, table_one_records, table_one):
        """Test max-scaling keeps its divisor."""
        matrix = load_records(table_one_records, scale=True)
        assert matrix.scale_factor == 34000.0
        assert np.nanmax(matrix.values) == 1.0
        assert np.allclose(matrix.unscale().values, table_one.values, equal_nan=True)

    def test_records_round_trip(self, table_one):
        """Test serializing and reloading gives an identical matrix."""
        assert load_records(table_one.to_records_frame()) == table_one

    def test_complete_matrix_round_trip(self):
        """Test a fully known generated matrix reloads without trailing cohorts."""
        truth, _ = generate(SynthConfig(n_cohorts=12, horizon_count=4, seed=2))
        loaded = load_records(truth.to_records_frame())
        assert loaded == truth
        assert loaded.cohorts[-1] == CohortMonth(2021, 12)
        assert loaded.is_complete()

    def test_newest_cohort_ends_the_matrix(self, table_one_records):
        """Test rows stop at the newest cohort present in the data."""
        rows = [r for r in table_one_records if r[0] != "2024-01"]
        matrix = load_records(rows, prediction_month=FEB_24)
        assert matrix.shape == (4, 5)
        assert matrix.cohorts[-1] == CohortMonth(2023, 12)
        assert int(matrix.known_mask().sum()) == 14

    def test_scaling_matches_max_scaled(self, table_one_records, table_one):
        """Test load-time scaling and scaling an existing matrix agree."""
        assert load_records(table_one_records, scale=True) == table_one.max_scaled()
        assert table_one.max_scaled().max_scaled().scale_factor == 34000.0

    def test_wide_round_trip(self, table_one):
        """Test the wide CSV layout round trip."""
        frame = table_one.to_wide_frame()
        assert list(frame.columns) == ["cohort_month", "u0", "u1", "u2", "u3", "u4"]
        assert from_wide_frame(frame) == table_one


class TestCohortMatrix:
    """Test the mask and column access."""

    def test_cell_status(self, table_one):
        """Test the strict-past boundary."""
        dec, jan = table_one.row_of(CohortMonth(2023, 12)), table_one.row_of(CohortMonth(2024, 1))
        assert table_one.cell_status(dec, 1) is CellStatus.KNOWN
        assert table_one.cell_status(jan, 1) is CellStatus.UNKNOWN
        assert table_one.cell_status(jan, 0) is CellStatus.KNOWN

    def test_cell_status_out_of_range(self, table_one):
        """Test bad indices."""
        with pytest.raises(IndexOutOfRange):
            table_one.cell_status(5, 0)
        with pytest.raises(IndexOutOfRange):
            table_one.cell_status(0, 5)

    def test_column_series(self, table_one):
        """Test known prefixes and unknown suffixes."""
        values, unknown = table_one.column_series(1)
        assert list(values) == [27000, 32000, 28000, 30000]
        assert unknown == [4]
        values, unknown = table_one.column_series(3)
        assert len(values) == 2 and unknown == [2, 3, 4]
        values, unknown = table_one.column_series(0)
        assert len(values) == 5 and unknown == []
        with pytest.raises(IndexOutOfRange):
            table_one.column_series(5)

    def test_staircase_prefixes(self, synthetic):
        """Test known rows form prefixes in every column and row."""
        truth, _ = synthetic
        masked = truth.as_of(truth.cohorts[-1] - 3)
        known = masked.known_mask()
        for u in range(masked.horizon_count):
            column = known[:, u]
            assert not np.any(column[np.argmin(column):]) or column.all()
        for t in range(masked.n_cohorts):
            row = known[t]
            assert not np.any(row[np.argmin(row):]) or row.all()

    def test_values_are_read_only(self, table_one):
        """Test the matrix cannot be mutated in place."""
        with pytest.raises(ValueError):
            table_one.values[0, 0] = 1.0

    def test_constructor_rejects_gaps(self):
        """Test non-consecutive cohorts."""
        with pytest.raises(StaircaseGap):
            CohortMatrix((CohortMonth(2024, 1), CohortMonth(2024, 3)), 1, [[1.0], [2.0]], CohortMonth(2024, 4))

    def test_as_of(self, table_one):
        """Test masking back to an earlier prediction month."""
        earlier = table_one.as_of(CohortMonth(2024, 1))
        assert earlier.cohorts[-1] == CohortMonth(2023, 12)
        assert int(earlier.known_mask().sum()) == 10
        assert earlier.values[0, 3] == 29000
        assert np.isnan(earlier.values[0, 4])

    def test_truncate(self, table_one):
        """Test restricting the column count."""
        short = table_one.truncate(2)
        assert short.shape == (5, 2)
        with pytest.raises(IndexOutOfRange):
            table_one.truncate(6)


class TestAdvancePredictionMonth:
    """Test moving the prediction month forward."""

    def test_table_one_advances_to_march(self, table_one):
        """Test one new diagonal adds a cell per column and a new cohort."""
        new_cells = [("2023-10", 4, 35000.0), ("2023-11", 3, 30000.0), ("2023-12", 2, 31000.0),
                     ("2024-01", 1, 31000.0), ("2024-02", 0, 28000.0)]
        advanced = table_one.advance_prediction_month(new_cells)
        assert advanced.prediction_month == CohortMonth(2024, 3)
        assert advanced.shape == (6, 5)
        assert int(advanced.known_mask().sum()) == 20
        known_before = table_one.known_mask()
        assert np.array_equal(advanced.values[:5][known_before], table_one.values[known_before])

    def test_empty_matrix(self):
        """Test the first cohort of an empty matrix."""
        advanced = empty_matrix(FEB_24, 3).advance_prediction_month([("2024-02", 0, 10.0)])
        assert advanced.shape == (1, 3)
        assert int(advanced.known_mask().sum()) == 1

    def test_missing_diagonal_cell(self, table_one):
        """Test an incomplete diagonal."""
        with pytest.raises(MissingDiagonalCell):
            table_one.advance_prediction_month([("2024-02", 0, 28000.0)])

    def test_conflicting_value(self, table_one):
        """Test re-supplying a known cell with another value."""
        new_cells = [("2023-10", 4, 35000.0), ("2023-11", 3, 30000.0), ("2023-12", 2, 31000.0),
                     ("2024-01", 1, 31000.0), ("2024-02", 0, 28000.0), ("2023-09", 0, 1.0)]
        with pytest.raises(ConflictingValue):
            table_one.advance_prediction_month(new_cells)

    def test_matches_masking(self, synthetic):
        """Test advancing twice equals masking the truth two months later."""
        truth, _ = synthetic
        month = truth.cohorts[10]
        stepped = truth.as_of(month)
        for step in range(2):
            stepped = stepped.advance_prediction_month(diagonal(truth, month + step))
        assert stepped == truth.as_of(month + 2)


class TestCohortCovariates:
    """Test covariate tables."""

    def test_select_orders_columns(self):
        """Test selection follows the requested names and cohorts."""
        cohorts = month_range(CohortMonth(2024, 1), CohortMonth(2024, 3))
        cov = CohortCovariates(cohorts, ("size", "subs"), [[1, 10], [2, 20], [3, 30]])
        block = cov.select([cohorts[2], cohorts[0]], ["subs", "size"])
        assert block.tolist() == [[30, 3], [10, 1]]

    def test_missing_cohort_or_name(self):
        """Test missing covariates are errors, not imputed."""
        cohorts = month_range(CohortMonth(2024, 1), CohortMonth(2024, 2))
        cov = CohortCovariates(cohorts, ("size",), [[1], [2]])
        with pytest.raises(CovariateMissing):
            cov.select([CohortMonth(2024, 3)], ["size"])
        with pytest.raises(CovariateMissing):
            cov.select(cohorts, ["subs"])

    def test_frame_round_trip(self, synthetic):
        """Test the covariates CSV layout."""
        _, cov = synthetic
        again = CohortCovariates.from_frame(cov.to_frame())
        assert again.cohorts == cov.cohorts
        assert np.array_equal(again.values, cov.values)
