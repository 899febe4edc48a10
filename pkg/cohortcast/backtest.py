"""Rolling-origin evaluation.

For every simulated prediction month the ground truth is masked to what was
known at that month, every model fills the masked matrix, and each predicted
cell whose truth is available is scored.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .cohort_matrix import CohortCovariates, CohortMatrix, CohortMonth, month_range
from .errors import CohortcastError, EmptyRange, EmptySlice, InvalidConfig, ModelFailure, TruthGap
from .metrics import (
    RECORD_COLUMNS,
    ErrorRecord,
    GroupBy,
    Metric,
    aggregate,
    records_frame,
    relative_error_histogram,
)
from .models import ForecastModel, ModelRegistry, ModelSpec, model_registry
from .storage import write_csv, write_json

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "model", "count", "mae", "mae_std", "rmse", "rmse_std", "smape", "smape_std", "smape_median", "status",
]
SERIES_METRICS = (Metric.MAE, Metric.RMSE, Metric.SMAPE)
NEWEST_COHORT_COLUMNS = 12


def earliest_month(truth: CohortMatrix) -> CohortMonth:
    """First prediction month at which two cohorts have their first column known."""
    if truth.n_cohorts < 2:
        raise InvalidConfig("backtests need at least two cohorts")
    return truth.cohorts[1] + 1


def default_range(truth: CohortMatrix, months: int = 12) -> Tuple[CohortMonth, CohortMonth]:
    """The last ``months`` prediction months, ending when the newest cohort has one known column."""
    end = min(truth.cohorts[-1] + 1, truth.prediction_month)
    start = max(end - (months - 1), earliest_month(truth))
    return start, end


@dataclass
class BacktestPlan:
    truth: CohortMatrix
    start_month: CohortMonth
    end_month: CohortMonth
    models: List[ModelSpec]
    covariates: Optional[CohortCovariates] = None
    horizon_count: Optional[int] = None
    seed: int = 0
    max_workers: int = 1

    @property
    def months(self) -> Tuple[CohortMonth, ...]:
        return month_range(self.start_month, self.end_month)

    def validate(self) -> None:
        if self.end_month < self.start_month:
            raise EmptyRange(f"backtest range {self.start_month}..{self.end_month} is empty")
        first = earliest_month(self.truth)
        if self.start_month < first:
            raise InvalidConfig(f"backtest starts at {self.start_month}, before {first} when two cohorts are known")
        if self.end_month > self.truth.prediction_month:
            raise InvalidConfig(
                f"backtest ends at {self.end_month}, after the truth's coverage ({self.truth.prediction_month})"
            )
        if self.horizon_count is not None and self.horizon_count > self.truth.horizon_count:
            raise InvalidConfig(f"horizon {self.horizon_count} exceeds the truth's {self.truth.horizon_count} columns")
        if not self.models:
            raise InvalidConfig("backtest needs at least one model")
        names = [spec.name for spec in self.models]
        if len(set(names)) != len(names):
            raise InvalidConfig(f"model names must be unique, got {names}")
        if self.max_workers < 1:
            raise InvalidConfig("max_workers must be >= 1")


@dataclass
class ModelFailureRecord:
    prediction_month: CohortMonth
    model_name: str
    code: str
    detail: str


@dataclass
class MonthResult:
    month: CohortMonth
    records: List[ErrorRecord] = field(default_factory=list)
    failures: List[ModelFailureRecord] = field(default_factory=list)
    truth_gaps: int = 0


@dataclass
class BacktestReport:
    records: List[ErrorRecord]
    model_names: List[str]
    months: Tuple[CohortMonth, ...]
    failures: List[ModelFailureRecord] = field(default_factory=list)
    truth_gaps: int = 0
    scale_factor: float = 1.0
    histogram_bin_width: float = 5.0
    seed: int = 0

    def frame(self) -> pd.DataFrame:
        return records_frame(self.records)

    def summary(self) -> pd.DataFrame:
        """One row per model with mean and std of MAE, RMSE and sMAPE contributions."""
        frame = self.frame()
        rows = []
        for model in self.model_names:
            scored = frame[frame["model"] == model]
            if scored.empty:
                rows.append((model, 0) + (np.nan,) * 7 + ("no data",))
                continue
            stats = {}
            for metric in SERIES_METRICS:
                row = aggregate(scored, GroupBy.MODEL, metric).iloc[0]
                stats[metric] = row
            rows.append((
                model, int(stats[Metric.MAE]["count"]),
                stats[Metric.MAE]["value"], stats[Metric.MAE]["std"],
                stats[Metric.RMSE]["value"], stats[Metric.RMSE]["std"],
                stats[Metric.SMAPE]["value"], stats[Metric.SMAPE]["std"], stats[Metric.SMAPE]["median"],
                "ok",
            ))
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def _series(self, key: GroupBy) -> pd.DataFrame:
        frame = self.frame()
        if frame.empty:
            return pd.DataFrame(columns=["model", key.value, "metric", "value", "std", "median", "count"])
        parts = [aggregate(frame, [GroupBy.MODEL, key], metric) for metric in SERIES_METRICS]
        return pd.concat(parts, ignore_index=True).sort_values(["model", "metric", key.value], kind="stable")

    def by_horizon(self) -> pd.DataFrame:
        return self._series(GroupBy.HORIZON).reset_index(drop=True)

    def by_prediction_month(self) -> pd.DataFrame:
        return self._series(GroupBy.PREDICTION_MONTH).reset_index(drop=True)

    def histogram(self) -> pd.DataFrame:
        frame = self.frame()
        if frame.empty:
            frame = pd.DataFrame({"model": self.model_names, "pct_error": np.nan})
            counts = relative_error_histogram(frame, self.histogram_bin_width)
            counts["count"] = 0
            return counts
        return relative_error_histogram(frame, self.histogram_bin_width)


def _score_month(truth: CohortMatrix, truth_known: np.ndarray, covariates: Optional[CohortCovariates],
                 models: Sequence[ForecastModel], month: CohortMonth) -> MonthResult:
    masked = truth.as_of(month)
    result = MonthResult(month)
    for model in models:
        try:
            filled = model.fill(masked, covariates)
        except Exception as e:
            code = e.code if isinstance(e, CohortcastError) else ModelFailure.code
            detail = e.detail if isinstance(e, CohortcastError) else f"{type(e).__name__}: {e}"
            logger.warning(f"{model.name} failed at {month}: {code}: {detail}", extra={"code": ModelFailure.code})
            result.failures.append(ModelFailureRecord(month, model.name, code, detail))
            continue
        for t, u, horizon, predicted in filled.predicted_cells():
            cohort = masked.cohorts[t]
            row = truth.row_of(cohort)
            if not truth_known[row, u]:
                result.truth_gaps += 1
                continue
            result.records.append(ErrorRecord(
                prediction_month=month, cohort=cohort, u=u, horizon=horizon,
                actual=float(truth.values[row, u]), predicted=predicted, model_name=model.name,
            ))
    return result


def run(plan: BacktestPlan, registry: ModelRegistry = model_registry,
        histogram_bin_width: float = 5.0) -> BacktestReport:
    """Evaluate every model at every prediction month of the plan."""
    plan.validate()
    truth = plan.truth
    if plan.horizon_count is not None and plan.horizon_count != truth.horizon_count:
        truth = truth.truncate(plan.horizon_count)
    truth_known = truth.known_mask()
    models = [registry.build(spec) for spec in plan.models]
    months = plan.months

    logger.info(f"backtesting {len(models)} models over {len(months)} months {months[0]}..{months[-1]}")
    if plan.max_workers > 1:
        with ThreadPoolExecutor(max_workers=plan.max_workers) as pool:
            results = list(pool.map(
                lambda m: _score_month(truth, truth_known, plan.covariates, models, m), months
            ))
    else:
        results = [_score_month(truth, truth_known, plan.covariates, models, m) for m in months]

    order = {spec.name: i for i, spec in enumerate(plan.models)}
    records = [r for result in results for r in result.records]
    records.sort(key=lambda r: (r.prediction_month, order[r.model_name], r.cohort, r.u))
    failures = [f for result in results for f in result.failures]
    gaps = sum(result.truth_gaps for result in results)
    if gaps:
        logger.warning(f"{gaps} predicted cells have no ground truth and were not scored",
                       extra={"code": TruthGap.code})

    return BacktestReport(
        records=records,
        model_names=[spec.name for spec in plan.models],
        months=months,
        failures=failures,
        truth_gaps=gaps,
        scale_factor=truth.scale_factor,
        histogram_bin_width=histogram_bin_width,
        seed=plan.seed,
    )


def newest_cohort_slice(report: BacktestReport, columns: int = NEWEST_COHORT_COLUMNS) -> pd.DataFrame:
    """Per-model sMAPE over the newest cohort of each prediction month, first ``columns`` columns."""
    frame = report.frame()
    if not frame.empty:
        newest = [str(CohortMonth.parse(m) - 1) for m in frame["prediction_month"]]
        frame = frame[(frame["cohort_month"] == newest) & (frame["u"] < columns)]
    if frame.empty:
        raise EmptySlice("no records for the newest cohorts")
    return aggregate(frame, GroupBy.MODEL, Metric.SMAPE)


def emit_report(report: BacktestReport, directory: Path, manifest: Optional[Dict[str, Any]] = None) -> List[Path]:
    """Write the report CSVs and a run manifest into ``directory``."""
    directory = Path(directory)
    frame = report.frame()
    written = [
        write_csv(frame if not frame.empty else pd.DataFrame(columns=RECORD_COLUMNS), directory / "records.csv"),
        write_csv(report.summary(), directory / "summary.csv"),
        write_csv(report.by_horizon(), directory / "by_horizon.csv"),
        write_csv(report.by_prediction_month(), directory / "by_prediction_month.csv"),
        write_csv(report.histogram(), directory / "histogram.csv"),
    ]
    try:
        newest = newest_cohort_slice(report)
    except EmptySlice:
        newest = pd.DataFrame(columns=["model", "metric", "value", "std", "median", "count"])
    written.append(write_csv(newest, directory / "newest_cohort.csv"))

    payload = dict(manifest or {})
    payload.update({
        "months": [str(m) for m in report.months],
        "models": report.model_names,
        "record_count": len(report.records),
        "seed": report.seed,
        "truth_gaps": report.truth_gaps,
        "scaled": report.scale_factor != 1.0,
        "scale_factor": report.scale_factor,
        "failures": [
            {"prediction_month": str(f.prediction_month), "model": f.model_name, "code": f.code, "detail": f.detail}
            for f in report.failures
        ],
    })
    written.append(write_json(payload, directory / "manifest.json"))
    return written
