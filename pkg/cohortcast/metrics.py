"""Accuracy metrics and their aggregation over backtest records.

sMAPE here is the 0-200 % variant ``200 |a - p| / (|a| + |p|)`` with 0/0 taken
as 0. Metrics are computed per cell.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from .cohort_matrix import CohortMonth
from .errors import EmptyInput, LengthMismatch

RECORD_COLUMNS = [
    "prediction_month", "cohort_month", "u", "horizon", "model", "actual", "predicted", "error", "pct_error",
]


def _pair(actuals, predictions):
    a = np.asarray(actuals, dtype=float).reshape(-1)
    p = np.asarray(predictions, dtype=float).reshape(-1)
    if len(a) != len(p):
        raise LengthMismatch(f"{len(a)} actuals against {len(p)} predictions")
    if len(a) == 0:
        raise EmptyInput("no values to score")
    return a, p


def smape_terms(actuals, predictions) -> np.ndarray:
    a = np.asarray(actuals, dtype=float)
    p = np.asarray(predictions, dtype=float)
    denominator = np.abs(a) + np.abs(p)
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, 200.0 * np.abs(a - p) / safe, 0.0)


def rmse(actuals, predictions) -> float:
    a, p = _pair(actuals, predictions)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mae(actuals, predictions) -> float:
    a, p = _pair(actuals, predictions)
    return float(np.mean(np.abs(a - p)))


def smape(actuals, predictions) -> float:
    a, p = _pair(actuals, predictions)
    return float(np.mean(smape_terms(a, p)))


@dataclass(frozen=True)
class ErrorRecord:
    """One scored cell: a prediction made at ``prediction_month`` against later truth."""

    prediction_month: CohortMonth
    cohort: CohortMonth
    u: int
    horizon: int
    actual: float
    predicted: float
    model_name: str

    @property
    def error(self) -> float:
        return self.predicted - self.actual

    @property
    def pct_error(self) -> float:
        """Relative error in percent of the actual value."""
        if self.actual == 0:
            if self.predicted == 0:
                return 0.0
            return math.copysign(math.inf, self.predicted)
        return 100.0 * (self.predicted - self.actual) / abs(self.actual)

    def as_row(self) -> tuple:
        return (str(self.prediction_month), str(self.cohort), self.u, self.horizon, self.model_name,
                self.actual, self.predicted, self.error, self.pct_error)


class GroupBy(str, Enum):
    HORIZON = "horizon"
    PREDICTION_MONTH = "prediction_month"
    COHORT = "cohort_month"
    MODEL = "model"
    COLUMN = "u"


class Metric(str, Enum):
    MAE = "mae"
    RMSE = "rmse"
    SMAPE = "smape"


def records_frame(records: Iterable[ErrorRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=RECORD_COLUMNS)


def _contributions(frame: pd.DataFrame, metric: Metric) -> pd.Series:
    if metric is Metric.SMAPE:
        return pd.Series(smape_terms(frame["actual"], frame["predicted"]), index=frame.index)
    return (frame["predicted"] - frame["actual"]).abs()


def aggregate(records: Union[Sequence[ErrorRecord], pd.DataFrame],
              group_by: Union[GroupBy, Sequence[GroupBy]], metric: Metric) -> pd.DataFrame:
    """Metric per group with the count, population std and median of per-record contributions.

    Contributions are absolute errors for MAE and RMSE and the per-cell sMAPE
    term for sMAPE; RMSE's value is the root of the mean squared contribution.
    """
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    if frame.empty:
        raise EmptyInput("no records to aggregate")
    keys = [GroupBy(group_by).value] if isinstance(group_by, (str, GroupBy)) else [GroupBy(g).value for g in group_by]
    metric = Metric(metric)

    work = frame[keys].copy()
    work["contribution"] = _contributions(frame, metric)
    grouped = work.groupby(keys, sort=True)["contribution"]
    if metric is Metric.RMSE:
        value = grouped.apply(lambda c: float(np.sqrt(np.mean(np.square(c)))))
    else:
        value = grouped.mean()
    out = pd.DataFrame({
        "metric": metric.value,
        "value": value,
        "std": grouped.std(ddof=0),
        "median": grouped.median(),
        "count": grouped.size(),
    })
    return out.reset_index()


def relative_error_histogram(records: Union[Sequence[ErrorRecord], pd.DataFrame],
                             bin_width: float = 5.0, limit: float = 100.0) -> pd.DataFrame:
    """Counts of relative errors per model in fixed bins over [-limit, limit].

    Values below or above the range fall into open-ended underflow and
    overflow bins; ``limit`` itself belongs to the last inner bin.
    """
    frame = records if isinstance(records, pd.DataFrame) else records_frame(records)
    n_inner = int(round(2 * limit / bin_width))
    edges = np.linspace(-limit, limit, n_inner + 1)
    lower = np.concatenate([[-np.inf], edges])
    upper = np.concatenate([edges, [np.inf]])

    rows: List[tuple] = []
    for model in sorted(frame["model"].unique()):
        pct = frame.loc[frame["model"] == model, "pct_error"].to_numpy(dtype=float)
        index = np.searchsorted(edges, pct, side="right")
        index = np.where(pct == limit, n_inner, index)
        counts = np.bincount(index, minlength=n_inner + 2)
        rows.extend((model, lo, hi, int(c)) for lo, hi, c in zip(lower, upper, counts))
    return pd.DataFrame(rows, columns=["model", "bin_lower", "bin_upper", "count"])
