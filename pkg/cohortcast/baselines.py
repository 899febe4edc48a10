"""Reference fills: naive carry-forward, drift, column mean, per-column linear regression
and externally produced predictions.

Each fill works column by column on the known prefix of the column and never
looks at other columns, except the naive row carry for columns with no known
cell at all.
"""

import logging
from enum import Enum
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .cohort_matrix import CALENDAR_MONTH, CohortCovariates, CohortMatrix, CohortMonth
from .errors import MalformedRow, ModelFailure
from .filled import ColumnDiagnostics, FilledMatrix

logger = logging.getLogger(__name__)

IMPORTED_COLUMNS = ["cohort_month", "u", "value", "model_name"]


class FallbackKind(str, Enum):
    NAIVE = "naive"
    COLUMN_MEAN = "column_mean"
    LINEAR = "linear"


MINIMUM_ROWS = {
    FallbackKind.NAIVE: 1,
    FallbackKind.COLUMN_MEAN: 1,
    FallbackKind.LINEAR: 3,
}


class FallbackPolicy(BaseModel):
    """Model used for a column the ARIMAX path cannot handle.

    Below ``min_rows`` known cells the policy degrades to the naive carry.
    """

    model_config = ConfigDict(frozen=True)

    kind: FallbackKind = FallbackKind.NAIVE
    min_rows: Optional[int] = Field(None, description="Defaults to the kind's minimum")

    @model_validator(mode="before")
    @classmethod
    def _default_min_rows(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("min_rows") is None:
            kind = FallbackKind(data.get("kind", FallbackKind.NAIVE))
            data = {**data, "min_rows": MINIMUM_ROWS[kind]}
        return data

    @model_validator(mode="after")
    def _check_min_rows(self) -> "FallbackPolicy":
        if self.min_rows < MINIMUM_ROWS[self.kind]:
            raise ValueError(f"{self.kind.value} needs min_rows >= {MINIMUM_ROWS[self.kind]}, got {self.min_rows}")
        return self


# Column-level helpers shared with the 2D forecaster

def floor_negative(predictions: np.ndarray, column: int, model_name: str) -> Tuple[np.ndarray, int]:
    negative = predictions < 0
    count = int(negative.sum())
    if count:
        logger.warning(f"{model_name}: floored {count} negative predictions in column {column} at zero",
                       extra={"code": "NEGATIVE_FLOORED"})
    return np.where(negative, 0.0, predictions), count


def row_carry(values: np.ndarray, rows: Sequence[int], u: int) -> np.ndarray:
    """Each row's latest value left of column ``u``, or 0 when the row has none."""
    out = np.zeros(len(rows))
    for i, t in enumerate(rows):
        left = values[t, :u]
        present = left[~np.isnan(left)]
        if len(present):
            out[i] = present[-1]
    return out


def cohort_features(matrix: CohortMatrix, covariates: Optional[CohortCovariates],
                    names: Sequence[str], rows: Sequence[int], u: int) -> np.ndarray:
    """Covariate columns for ``rows`` of column ``u`` in ``names`` order.

    ``calendar_month`` is the event month counted from the first cohort.
    """
    rows = list(rows)
    out = np.empty((len(rows), len(names)))
    plain = [name for name in names if name != CALENDAR_MONTH]
    if plain:
        if covariates is None:
            covariates = CohortCovariates.empty()
        block = covariates.select([matrix.cohorts[t] for t in rows], plain)
    for j, name in enumerate(names):
        if name == CALENDAR_MONTH:
            out[:, j] = [t + u for t in rows]
        else:
            out[:, j] = block[:, plain.index(name)]
    return out


def _known_split(matrix: CohortMatrix, u: int) -> Tuple[np.ndarray, List[int], List[int]]:
    known = matrix.known_mask()[:, u]
    known_rows = [int(t) for t in np.flatnonzero(known)]
    unknown_rows = [int(t) for t in np.flatnonzero(~known)]
    return matrix.values[known_rows, u], known_rows, unknown_rows


def naive_column(known_values: np.ndarray, working: np.ndarray, unknown_rows: Sequence[int], u: int) -> np.ndarray:
    if len(known_values):
        return np.full(len(unknown_rows), known_values[-1])
    return row_carry(working, unknown_rows, u)


def mean_column(known_values: np.ndarray, working: np.ndarray, unknown_rows: Sequence[int], u: int) -> np.ndarray:
    if len(known_values):
        return np.full(len(unknown_rows), float(np.mean(known_values)))
    return row_carry(working, unknown_rows, u)


def drift_column(known_values: np.ndarray, known_rows: Sequence[int], unknown_rows: Sequence[int]) -> np.ndarray:
    n = len(known_values)
    first, last = known_values[0], known_values[-1]
    slope = (last - first) / (n - 1)
    steps = np.asarray(unknown_rows) - known_rows[-1]
    return last + steps * slope


def _independent_columns(design: np.ndarray, protected: int) -> List[int]:
    """Indices of a full-rank subset, keeping the first ``protected`` columns."""
    kept = list(range(protected))
    rank = np.linalg.matrix_rank(design[:, kept]) if kept else 0
    for j in range(protected, design.shape[1]):
        trial = kept + [j]
        trial_rank = np.linalg.matrix_rank(design[:, trial])
        if trial_rank > rank:
            kept, rank = trial, trial_rank
    return kept


def linear_column(known_values: np.ndarray, known_rows: Sequence[int], unknown_rows: Sequence[int],
                  known_features: np.ndarray, unknown_features: np.ndarray,
                  feature_names: Sequence[str] = (), column: int = -1) -> np.ndarray:
    """OLS of the known values on [1, t, features], evaluated at the unknown rows."""
    design = np.column_stack([np.ones(len(known_rows)), np.asarray(known_rows, dtype=float), known_features])
    target = np.column_stack([np.ones(len(unknown_rows)), np.asarray(unknown_rows, dtype=float), unknown_features])
    kept = _independent_columns(design, protected=2)
    dropped = [feature_names[j - 2] if j - 2 < len(feature_names) else str(j)
               for j in range(2, design.shape[1]) if j not in kept]
    if dropped:
        logger.warning(f"column {column}: dropped collinear features {dropped}", extra={"code": "SINGULAR_DESIGN"})
    coef, *_ = np.linalg.lstsq(design[:, kept], known_values, rcond=None)
    return target[:, kept] @ coef


def fallback_column(policy: FallbackPolicy, matrix: CohortMatrix, working: np.ndarray, u: int,
                    known_rows: Sequence[int], unknown_rows: Sequence[int]) -> Tuple[np.ndarray, FallbackKind]:
    """Predictions for column ``u`` under ``policy``; returns the kind actually applied."""
    known_values = working[list(known_rows), u]
    kind = policy.kind if len(known_rows) >= policy.min_rows else FallbackKind.NAIVE
    if kind is FallbackKind.LINEAR:
        empty = np.empty((0, 0))
        return linear_column(known_values, known_rows, unknown_rows,
                             empty.reshape(len(known_rows), 0), empty.reshape(len(unknown_rows), 0),
                             column=u), kind
    if kind is FallbackKind.COLUMN_MEAN:
        return mean_column(known_values, working, unknown_rows, u), kind
    return naive_column(known_values, working, unknown_rows, u), kind


# Whole-matrix fills

def _fill(matrix: CohortMatrix, model_name: str, predict_column) -> FilledMatrix:
    working = np.array(matrix.values, copy=True)
    diagnostics = []
    for u in range(matrix.horizon_count):
        known_values, known_rows, unknown_rows = _known_split(matrix, u)
        diag = ColumnDiagnostics(column=u, n_known=len(known_rows), n_predicted=len(unknown_rows))
        if unknown_rows:
            predictions = predict_column(u, known_values, known_rows, unknown_rows, working, diag)
            predictions, diag.n_floored = floor_negative(np.asarray(predictions, dtype=float), u, model_name)
            working[unknown_rows, u] = predictions
        diagnostics.append(diag)
    return FilledMatrix(matrix, working, diagnostics, model_name)


def _mark_row_carry(diag: ColumnDiagnostics, known_rows: Sequence[int]) -> None:
    if not known_rows:
        diag.fallback_used = True
        diag.fallback_kind = "row_carry"
        diag.reason = "column has no known cells"


def naive_fill(matrix: CohortMatrix, model_name: str = "naive") -> FilledMatrix:
    """Every unknown cell takes the last known value of its column.

    A column with no known cell carries each row's latest observed value,
    or 0 for a row with none.
    """
    def predict(u, known_values, known_rows, unknown_rows, working, diag):
        _mark_row_carry(diag, known_rows)
        return naive_column(known_values, working, unknown_rows, u)

    return _fill(matrix, model_name, predict)


def column_mean_fill(matrix: CohortMatrix, model_name: str = "column_mean") -> FilledMatrix:
    def predict(u, known_values, known_rows, unknown_rows, working, diag):
        _mark_row_carry(diag, known_rows)
        return mean_column(known_values, working, unknown_rows, u)

    return _fill(matrix, model_name, predict)


def drift_fill(matrix: CohortMatrix, model_name: str = "drift") -> FilledMatrix:
    """Extend the line through the first and last known value of each column."""
    def predict(u, known_values, known_rows, unknown_rows, working, diag):
        if len(known_rows) < 2:
            _mark_row_carry(diag, known_rows)
            if known_rows:
                diag.fallback_used, diag.fallback_kind = True, FallbackKind.NAIVE.value
                diag.reason = "fewer than 2 known cells"
            return naive_column(known_values, working, unknown_rows, u)
        return drift_column(known_values, known_rows, unknown_rows)

    return _fill(matrix, model_name, predict)


def linear_fill(matrix: CohortMatrix, covariates: Optional[CohortCovariates] = None,
                feature_names: Sequence[str] = (), model_name: str = "linear",
                min_rows: int = MINIMUM_ROWS[FallbackKind.LINEAR]) -> FilledMatrix:
    """Per-column OLS on cohort index and covariates; no previous-column feature.

    Columns with fewer than ``min_rows`` known cells use the naive carry.
    """
    feature_names = list(feature_names)
    if covariates is not None:
        covariates.check_covers(matrix.cohorts, feature_names)

    def predict(u, known_values, known_rows, unknown_rows, working, diag):
        if len(known_rows) < min_rows:
            _mark_row_carry(diag, known_rows)
            if known_rows:
                diag.fallback_used, diag.fallback_kind = True, FallbackKind.NAIVE.value
                diag.reason = f"fewer than {min_rows} known cells"
            return naive_column(known_values, working, unknown_rows, u)
        known_features = cohort_features(matrix, covariates, feature_names, known_rows, u)
        unknown_features = cohort_features(matrix, covariates, feature_names, unknown_rows, u)
        return linear_column(known_values, known_rows, unknown_rows, known_features, unknown_features,
                             feature_names, column=u)

    return _fill(matrix, model_name, predict)


# External predictions

def validate_imported(frame: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in IMPORTED_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRow(f"imported predictions are missing columns {missing}")
    out = frame.copy()
    try:
        out["cohort_month"] = [CohortMonth.coerce(c) for c in out["cohort_month"]]
        out["u"] = out["u"].astype(int)
        out["value"] = out["value"].astype(float)
        out["model_name"] = out["model_name"].astype(str)
        if "prediction_month" in out.columns:
            out["prediction_month"] = [CohortMonth.coerce(c) for c in out["prediction_month"]]
    except (TypeError, ValueError) as e:
        raise MalformedRow(f"imported predictions: {e}")
    if not np.all(np.isfinite(out["value"].to_numpy())):
        raise MalformedRow("imported predictions must be finite")
    key = ["cohort_month", "u", "model_name"] + (["prediction_month"] if "prediction_month" in out.columns else [])
    if out.duplicated(subset=key).any():
        raise MalformedRow("imported predictions contain duplicate cells")
    return out


def imported_fill(matrix: CohortMatrix, predictions: pd.DataFrame, model_name: str) -> FilledMatrix:
    """Fill from externally produced predictions of one model.

    When the frame has a ``prediction_month`` column only rows for this
    matrix's prediction month are used. Every unknown cell must be covered.
    """
    rows = predictions[predictions["model_name"] == model_name]
    if "prediction_month" in rows.columns:
        rows = rows[[month == matrix.prediction_month for month in rows["prediction_month"]]]
    lookup = {(cohort, int(u)): float(value)
              for cohort, u, value in rows[["cohort_month", "u", "value"]].itertuples(index=False, name=None)}

    def predict(u, known_values, known_rows, unknown_rows, working, diag):
        out = np.empty(len(unknown_rows))
        for i, t in enumerate(unknown_rows):
            key = (matrix.cohorts[t], u)
            if key not in lookup:
                raise ModelFailure(f"{model_name} has no prediction for ({key[0]}, u={u}) "
                                   f"at {matrix.prediction_month}")
            out[i] = lookup[key]
        return out

    return _fill(matrix, model_name, predict)
