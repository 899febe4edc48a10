import json

import numpy as np
import pytest

from cohortcast.arimax import EstimationConfig, ModelOrder
from cohortcast.backtest import (
    BacktestPlan,
    BacktestReport,
    default_range,
    earliest_month,
    emit_report,
    newest_cohort_slice,
    run,
)
from cohortcast.baselines import naive_fill
from cohortcast.cohort_matrix import CohortMatrix, CohortMonth, known_mask_for
from cohortcast.errors import EmptyRange, EmptySlice, InvalidConfig, ModelFailure
from cohortcast.metrics import GroupBy, Metric, aggregate
from cohortcast.models import ModelKind, ModelRegistry, ModelSpec, model_registry

BASELINES = [
    ModelSpec(name="naive", kind=ModelKind.NAIVE),
    ModelSpec(name="drift", kind=ModelKind.DRIFT),
    ModelSpec(name="column_mean", kind=ModelKind.COLUMN_MEAN),
    ModelSpec(name="linear", kind=ModelKind.LINEAR),
]

QUICK_ARIMAX = ModelSpec(
    name="arimax2d",
    kind=ModelKind.ARIMAX_2D,
    estimation=EstimationConfig(order_grid=[ModelOrder(p=0, d=0, q=0), ModelOrder(p=1, d=0, q=0)]),
)


def last_months(truth, count):
    end = truth.cohorts[-1] + 1
    return end - (count - 1), end


class TestBacktestRange:
    """Test range validation."""

    def test_default_range(self, synthetic):
        """Test the default window ends when the newest cohort has one known column."""
        truth, _ = synthetic
        start, end = default_range(truth, 12)
        assert end == truth.cohorts[-1] + 1
        assert end - start == 11

    def test_default_range_is_clipped(self, table_one):
        """Test the default window never starts before two cohorts are known."""
        start, end = default_range(table_one, 12)
        assert start == earliest_month(table_one) == table_one.cohorts[1] + 1
        assert end == table_one.prediction_month

    def test_empty_range(self, synthetic):
        """Test a range whose end precedes its start."""
        truth, _ = synthetic
        start, end = last_months(truth, 3)
        with pytest.raises(EmptyRange):
            run(BacktestPlan(truth, end, start, BASELINES))

    def test_range_outside_truth(self, synthetic):
        """Test ranges before two cohorts exist or after the truth ends."""
        truth, _ = synthetic
        with pytest.raises(InvalidConfig):
            run(BacktestPlan(truth, truth.cohorts[0], truth.cohorts[3], BASELINES))
        with pytest.raises(InvalidConfig):
            run(BacktestPlan(truth, truth.cohorts[5], truth.prediction_month + 1, BASELINES))

    def test_duplicate_model_names(self, synthetic):
        truth, _ = synthetic
        start, end = last_months(truth, 2)
        with pytest.raises(InvalidConfig):
            run(BacktestPlan(truth, start, end, [BASELINES[0], BASELINES[0]]))


class TestBacktestRun:
    """Test scoring over simulated prediction months."""

    def test_every_model_scores_the_same_cells(self, synthetic):
        """Test record counts match across models."""
        truth, covariates = synthetic
        start, end = last_months(truth, 4)
        report = run(BacktestPlan(truth, start, end, BASELINES + [QUICK_ARIMAX], covariates))
        counts = report.frame().groupby("model").size()
        assert len(counts) == 5
        assert counts.nunique() == 1
        assert report.failures == []
        assert report.truth_gaps == 0

    def test_single_month_matches_direct_scoring(self, synthetic):
        """Test one month of naive scoring against filling by hand."""
        truth, _ = synthetic
        month = truth.cohorts[-4]
        report = run(BacktestPlan(truth, month, month, [BASELINES[0]]))
        filled = naive_fill(truth.as_of(month))
        expected = [(filled.cohorts[t], u, h, v, truth.values[t, u]) for t, u, h, v in filled.predicted_cells()]
        got = [(r.cohort, r.u, r.horizon, r.predicted, r.actual) for r in report.records]
        assert sorted(got, key=lambda x: (x[0], x[1])) == sorted(expected, key=lambda x: (x[0], x[1]))

    def test_records_are_ordered(self, synthetic):
        """Test records sort by month, model position, cohort and column."""
        truth, _ = synthetic
        start, end = last_months(truth, 3)
        report = run(BacktestPlan(truth, start, end, [BASELINES[1], BASELINES[0]]))
        position = {"drift": 0, "naive": 1}
        keys = [(r.prediction_month, position[r.model_name], r.cohort, r.u) for r in report.records]
        assert keys == sorted(keys)

    def test_future_cells_do_not_leak(self, synthetic):
        """Test predictions ignore every cell unknown at the prediction month."""
        truth, covariates = synthetic
        month = truth.cohorts[-3]
        unknown = ~known_mask_for(truth.cohorts, truth.horizon_count, month)
        poisoned = CohortMatrix(truth.cohorts, truth.horizon_count, np.where(unknown, 1e12, truth.values),
                                truth.prediction_month)
        models = BASELINES + [QUICK_ARIMAX]
        clean = run(BacktestPlan(truth, month, month, models, covariates))
        dirty = run(BacktestPlan(poisoned, month, month, models, covariates))
        assert [r.predicted for r in clean.records] == [r.predicted for r in dirty.records]
        assert all(r.actual == 1e12 for r in dirty.records)

    def test_threaded_run_matches_serial(self, synthetic):
        """Test the worker pool does not change the records."""
        truth, _ = synthetic
        start, end = last_months(truth, 4)
        serial = run(BacktestPlan(truth, start, end, BASELINES))
        threaded = run(BacktestPlan(truth, start, end, BASELINES, max_workers=3))
        assert serial.records == threaded.records

    def test_model_failure_is_recorded(self, synthetic):
        """Test a failing model is reported while the others are scored."""
        truth, _ = synthetic

        def broken(spec):
            def fill(matrix, covariates):
                raise ModelFailure("no predictions")
            return fill

        registry = ModelRegistry()
        registry.register_model(ModelKind.NAIVE, model_registry.get_builder(ModelKind.NAIVE))
        registry.register_model(ModelKind.DRIFT, broken)
        start, end = last_months(truth, 2)
        report = run(BacktestPlan(truth, start, end, BASELINES[:2]), registry)
        assert len(report.failures) == 2
        assert {f.code for f in report.failures} == {"MODEL_FAILURE"}
        assert {r.model_name for r in report.records} == {"naive"}
        summary = report.summary().set_index("model")
        assert summary.loc["drift", "status"] == "no data"
        assert summary.loc["naive", "status"] == "ok"

    def test_truth_gaps_are_skipped(self, synthetic):
        """Test cells without ground truth are counted, not scored."""
        truth, _ = synthetic
        partial = truth.as_of(truth.cohorts[-1] + 1)
        start, end = last_months(partial, 3)
        report = run(BacktestPlan(partial, start, end, [BASELINES[0]]))
        assert report.truth_gaps > 0
        known = partial.known_mask()
        assert all(known[partial.row_of(r.cohort), r.u] for r in report.records)


class TestBacktestReport:
    """Test report tables and files."""

    @pytest.fixture
    def report(self, synthetic):
        truth, _ = synthetic
        start, end = last_months(truth, 4)
        return run(BacktestPlan(truth, start, end, BASELINES))

    def test_summary_matches_grouped_tables(self, report):
        """Test the overall MAE equals the count-weighted MAE by horizon."""
        summary = report.summary().set_index("model")
        by_horizon = report.by_horizon()
        for model in report.model_names:
            rows = by_horizon[(by_horizon["model"] == model) & (by_horizon["metric"] == "mae")]
            weighted = np.average(rows["value"], weights=rows["count"])
            assert summary.loc[model, "mae"] == pytest.approx(weighted)
            assert rows["count"].sum() == summary.loc[model, "count"]

    def test_by_prediction_month(self, report):
        """Test one row per model, metric and month."""
        table = report.by_prediction_month()
        assert len(table) == len(report.model_names) * 3 * len(report.months)

    def test_histogram_counts(self, report):
        """Test each model's histogram covers all of its records."""
        table = report.histogram()
        counts = report.frame().groupby("model").size()
        for model, group in table.groupby("model"):
            assert group["count"].sum() == counts[model]

    def test_newest_cohort_slice(self, report):
        """Test the newest-cohort sMAPE against direct aggregation."""
        table = newest_cohort_slice(report).set_index("model")
        frame = report.frame()
        newest = frame["prediction_month"].map(lambda m: str(CohortMonth.parse(m) - 1))
        mask = frame["cohort_month"] == newest
        expected = aggregate(frame[mask], GroupBy.MODEL, Metric.SMAPE).set_index("model")
        assert table["value"].to_dict() == pytest.approx(expected["value"].to_dict())
        assert table["count"].sum() == mask.sum()

    def test_empty_report(self, synthetic):
        """Test a report without records."""
        truth, _ = synthetic
        report = BacktestReport(records=[], model_names=["naive"], months=(truth.cohorts[-1],))
        summary = report.summary()
        assert summary.loc[0, "status"] == "no data"
        assert report.histogram()["count"].sum() == 0
        assert report.by_horizon().empty
        with pytest.raises(EmptySlice):
            newest_cohort_slice(report)

    def test_emitted_files_are_reproducible(self, synthetic, tmp_path):
        """Test two runs write byte-identical files."""
        truth, _ = synthetic
        start, end = last_months(truth, 3)
        manifest = {"seed": 0}
        first = emit_report(run(BacktestPlan(truth, start, end, BASELINES)), tmp_path / "a", manifest)
        second = emit_report(run(BacktestPlan(truth, start, end, BASELINES, max_workers=2)), tmp_path / "b", manifest)
        assert [p.name for p in first] == [
            "records.csv", "summary.csv", "by_horizon.csv", "by_prediction_month.csv",
            "histogram.csv", "newest_cohort.csv", "manifest.json",
        ]
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()

    def test_manifest_records_plan_seed(self, synthetic, tmp_path):
        """Test the plan's seed is written to the run manifest."""
        truth, _ = synthetic
        start, end = last_months(truth, 2)
        report = run(BacktestPlan(truth, start, end, BASELINES[:1], seed=42))
        assert report.seed == 42
        emit_report(report, tmp_path)
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 42
