import json

import pandas as pd
import pytest

from cohortcast.errors import IoFailure, MalformedRow, NegativeValue
from cohortcast.storage import (
    read_covariates_csv,
    read_imported_predictions,
    read_records_csv,
    read_wide_csv,
    write_csv,
    write_json,
    write_wide_csv,
)


class TestMatrixFiles:
    """Test matrix CSV layouts."""

    def test_wide_file_round_trip(self, table_one, tmp_path):
        """Test unknown cells are written as empty fields and read back."""
        path = write_wide_csv(table_one, tmp_path / "matrix.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "cohort_month,u0,u1,u2,u3,u4"
        assert lines[5] == "2024-01,30000.0,,,,"
        assert read_wide_csv(path) == table_one

    def test_records_file(self, table_one, tmp_path):
        """Test the long format with a column limit."""
        path = write_csv(table_one.to_records_frame(), tmp_path / "values.csv")
        assert read_records_csv(path) == table_one
        assert read_records_csv(path, horizon_count=2).horizon_count == 2

    def test_records_file_missing_column(self, tmp_path):
        path = tmp_path / "values.csv"
        path.write_text("cohort_month,value\n2024-01,5\n")
        with pytest.raises(MalformedRow):
            read_records_csv(path)

    def test_negative_value_in_file(self, tmp_path):
        path = tmp_path / "values.csv"
        path.write_text("cohort_month,months_since_event,value\n2024-01,0,-2\n")
        with pytest.raises(NegativeValue):
            read_records_csv(path)

    def test_missing_file(self, tmp_path):
        """Test unreadable files are I/O failures."""
        with pytest.raises(IoFailure) as excinfo:
            read_records_csv(tmp_path / "absent.csv")
        assert excinfo.value.exit_code == 5

    def test_empty_file(self, tmp_path):
        path = tmp_path / "values.csv"
        path.write_text("")
        with pytest.raises(MalformedRow):
            read_records_csv(path)


class TestOtherFiles:
    def test_covariates_file(self, synthetic, tmp_path):
        """Test covariates written and read keep their cohorts."""
        _, covariates = synthetic
        path = write_csv(covariates.to_frame(), tmp_path / "covariates.csv")
        again = read_covariates_csv(path)
        assert again.names == ("cohort_quality",)
        assert again.cohorts == covariates.cohorts

    def test_imported_predictions_file(self, tmp_path):
        """Test optional prediction_month column parsing."""
        path = tmp_path / "external.csv"
        pd.DataFrame([("2024-01", 1, 5.0, "ext", "2024-02")],
                     columns=["cohort_month", "u", "value", "model_name", "prediction_month"]).to_csv(path, index=False)
        frame = read_imported_predictions(path)
        assert str(frame.loc[0, "prediction_month"]) == "2024-02"
        assert frame.loc[0, "u"] == 1

    def test_json_is_sorted(self, tmp_path):
        """Test manifests are written with sorted keys."""
        path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "nested" / "manifest.json")
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1, 2], "b": 1}

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(IoFailure):
            write_json({}, blocker / "manifest.json")
