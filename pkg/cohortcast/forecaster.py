"""Two-dimensional ARIMAX completion of a cohort matrix.

Columns are filled left to right. Column u is modelled as a series over
cohorts with the completed column u-1 (observed where known, predicted
otherwise) and the chosen cohort covariates as regressors, so every column
is complete before the next one starts.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import arimax
from .arimax import ArimaxFit, EstimationConfig
from .baselines import FallbackPolicy, cohort_features, fallback_column, floor_negative
from .cohort_matrix import CALENDAR_MONTH, CohortCovariates, CohortMatrix
from .errors import (
    ColumnUnfittable,
    CovariateMissing,
    InsufficientData,
    InsufficientHistory,
    NoFeasibleOrder,
    NonFiniteValue,
    PreviousColumnIncomplete,
    SingularDesign,
)
from .filled import ColumnDiagnostics, FilledMatrix

logger = logging.getLogger(__name__)

# Failures that send a column to the fallback policy instead of aborting the fill
FALLBACK_ERRORS = (InsufficientData, NoFeasibleOrder, SingularDesign, NonFiniteValue, InsufficientHistory)


class Forecast2DConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon_count: Optional[int] = Field(None, ge=1, description="Columns to fill; defaults to the matrix's")
    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    covariate_names: List[str] = Field(default_factory=list)
    fallback: FallbackPolicy = Field(default_factory=FallbackPolicy)
    include_prev_column: bool = True


def _check_covariates(matrix: CohortMatrix, covariates: Optional[CohortCovariates], names: Sequence[str]) -> None:
    plain = [name for name in names if name != CALENDAR_MONTH]
    if not plain:
        return
    if covariates is None:
        raise CovariateMissing(f"covariates {plain} requested but none were supplied")
    covariates.check_covers(matrix.cohorts, plain)


def build_exog_column(matrix: CohortMatrix, working: np.ndarray, u: int, rows: Sequence[int],
                      covariates: Optional[CohortCovariates], cfg: Forecast2DConfig) -> np.ndarray:
    """Regressors for ``rows`` of column ``u``.

    Column order: the previous column's value (when enabled), then the
    covariates in ``cfg.covariate_names`` order.
    """
    rows = list(rows)
    blocks = []
    if cfg.include_prev_column:
        if u < 1:
            raise PreviousColumnIncomplete("column 0 has no previous column")
        previous = working[rows, u - 1]
        if np.any(np.isnan(previous)):
            missing = [str(matrix.cohorts[t]) for t, v in zip(rows, previous) if np.isnan(v)]
            raise PreviousColumnIncomplete(f"column {u - 1} has no value for cohorts {missing}")
        blocks.append(previous.reshape(-1, 1))
    if cfg.covariate_names:
        blocks.append(cohort_features(matrix, covariates, cfg.covariate_names, rows, u))
    if not blocks:
        return np.empty((len(rows), 0))
    return np.column_stack(blocks)


def _coefficients(fit: ArimaxFit, cfg: Forecast2DConfig) -> Dict[str, float]:
    names = (["prev_column"] if cfg.include_prev_column else []) + list(cfg.covariate_names)
    out = {"mu": fit.mu}
    out.update({f"phi{i + 1}": float(v) for i, v in enumerate(fit.phi)})
    out.update({f"theta{j + 1}": float(v) for j, v in enumerate(fit.theta)})
    out.update({f"beta_{name}": float(v) for name, v in zip(names, fit.beta)})
    return out


def _use_fallback(diag: ColumnDiagnostics, cfg: Forecast2DConfig, matrix: CohortMatrix, working: np.ndarray,
                  u: int, known_rows: List[int], unknown_rows: List[int], reason: str,
                  model_name: str) -> np.ndarray:
    predictions, kind = fallback_column(cfg.fallback, matrix, working, u, known_rows, unknown_rows)
    diag.fallback_used = True
    diag.fallback_kind = kind.value
    diag.reason = reason
    logger.warning(f"{model_name}: column {u} uses {kind.value} fallback: {reason}", extra={"code": "FALLBACK_USED"})
    return predictions


def fill_matrix(matrix: CohortMatrix, covariates: Optional[CohortCovariates] = None,
                cfg: Optional[Forecast2DConfig] = None, model_name: str = "arimax2d") -> FilledMatrix:
    """Predict every unknown cell of ``matrix`` column by column.

    Observed cells are returned unchanged. Column 0 has no previous column, so
    its unknown cells come from the fallback policy. A later column with no
    known cells carries each row's value from the previous column.
    """
    cfg = cfg or Forecast2DConfig()
    if cfg.horizon_count is not None and cfg.horizon_count != matrix.horizon_count:
        matrix = matrix.truncate(cfg.horizon_count)
    _check_covariates(matrix, covariates, cfg.covariate_names)

    known = matrix.known_mask()
    working = np.array(matrix.values, copy=True)
    diagnostics = []

    for u in range(matrix.horizon_count):
        known_rows = [int(t) for t in np.flatnonzero(known[:, u])]
        unknown_rows = [int(t) for t in np.flatnonzero(~known[:, u])]
        diag = ColumnDiagnostics(column=u, n_known=len(known_rows), n_predicted=len(unknown_rows))
        diagnostics.append(diag)
        if not unknown_rows:
            continue

        if u == 0:
            if not known_rows:
                raise ColumnUnfittable("column 0 has no known cells", column=0)
            predictions = _use_fallback(diag, cfg, matrix, working, u, known_rows, unknown_rows,
                                        "column 0 has no previous column", model_name)
        elif not known_rows:
            predictions = working[unknown_rows, u - 1].copy()
            diag.fallback_used = True
            diag.fallback_kind = "row_carry"
            diag.reason = "column has no known cells"
            logger.warning(f"{model_name}: column {u} has no known cells, carrying column {u - 1}",
                           extra={"code": "FALLBACK_USED"})
        else:
            try:
                predictions = _fit_column(matrix, working, u, known_rows, unknown_rows, covariates, cfg, diag)
            except FALLBACK_ERRORS as e:
                predictions = _use_fallback(diag, cfg, matrix, working, u, known_rows, unknown_rows,
                                            f"{e.code}: {e.detail}", model_name)

        predictions, diag.n_floored = floor_negative(np.asarray(predictions, dtype=float), u, model_name)
        working[unknown_rows, u] = predictions

    return FilledMatrix(matrix, working, diagnostics, model_name)


def _fit_column(matrix: CohortMatrix, working: np.ndarray, u: int, known_rows: List[int],
                unknown_rows: List[int], covariates: Optional[CohortCovariates], cfg: Forecast2DConfig,
                diag: ColumnDiagnostics) -> np.ndarray:
    y = working[known_rows, u]
    X_known = build_exog_column(matrix, working, u, known_rows, covariates, cfg)
    X_future = build_exog_column(matrix, working, u, unknown_rows, covariates, cfg)

    fit = arimax.search_orders(y, X_known, cfg.estimation)
    predictions = arimax.forecast(fit, y, X_future, len(unknown_rows))
    if not np.all(np.isfinite(predictions)):
        raise NonFiniteValue(f"order {fit.order} produced non-finite forecasts")

    diag.order = fit.order
    diag.converged = fit.converged
    diag.coefficients = _coefficients(fit, cfg)
    if diag.regression_only:
        logger.info(f"column {diag.column} selected {fit.order}, no ARMA terms", extra={"code": "REGRESSION_ONLY"})
    if not fit.converged:
        diag.reason = fit.message
    return predictions
