"""CSV and JSON persistence for matrices, covariates, predictions and reports."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from .baselines import validate_imported
from .cohort_matrix import (
    CohortCovariates,
    CohortMatrix,
    CohortMonth,
    RECORD_COLUMNS,
    from_wide_frame,
    load_records,
)
from .errors import IoFailure, MalformedRow
from .filled import FilledMatrix

logger = logging.getLogger(__name__)


def read_csv(path: Path, **kwargs: Any) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **kwargs)
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise MalformedRow(f"{path}: {e}")


def read_records_csv(path: Path, prediction_month: Optional[CohortMonth] = None,
                     horizon_count: Optional[int] = None, scale: bool = False) -> CohortMatrix:
    """Long-format ``cohort_month,months_since_event,value`` file as a matrix."""
    frame = read_csv(path, dtype={"cohort_month": str})
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRow(f"{path} is missing columns {missing}")
    matrix = load_records(frame, prediction_month, horizon_count, scale)
    logger.info(f"loaded {matrix.n_cohorts} cohorts x {matrix.horizon_count} columns from {path}")
    return matrix


def read_covariates_csv(path: Path) -> CohortCovariates:
    return CohortCovariates.from_frame(read_csv(path, dtype={"cohort_month": str}))


def read_wide_csv(path: Path, prediction_month: Optional[CohortMonth] = None) -> CohortMatrix:
    return from_wide_frame(read_csv(path, dtype={"cohort_month": str}), prediction_month)


def read_imported_predictions(path: Path) -> pd.DataFrame:
    """Predictions of external models, ``cohort_month,u,value,model_name[,prediction_month]``."""
    return validate_imported(read_csv(path, dtype={"cohort_month": str, "prediction_month": str,
                                                   "model_name": str}))


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}")
    return path


def write_wide_csv(matrix: Union[CohortMatrix, FilledMatrix], path: Path) -> Path:
    """``cohort_month,u0..u{U-1}``; unknown cells are empty fields."""
    return write_csv(matrix.to_wide_frame(), path)


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, default=str)
            handle.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}")
    return path
