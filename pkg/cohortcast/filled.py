"""Completed matrices and the per-column record of how they were completed."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from .arimax import ModelOrder
from .cohort_matrix import CohortMatrix, CohortMonth
from .errors import NonFiniteValue

PROVENANCE_COLUMNS = ["cohort_month", "u", "provenance", "horizon", "fallback_used"]


class Provenance(str, Enum):
    OBSERVED = "OBSERVED"
    PREDICTED = "PREDICTED"


@dataclass
class ColumnDiagnostics:
    column: int
    n_known: int = 0
    n_predicted: int = 0
    order: Optional[ModelOrder] = None
    converged: bool = True
    fallback_used: bool = False
    fallback_kind: Optional[str] = None
    reason: str = ""
    n_floored: int = 0
    coefficients: Dict[str, float] = field(default_factory=dict)

    @property
    def regression_only(self) -> bool:
        """Fitted with p = q = 0, so the column is a plain regression on its regressors."""
        return self.order is not None and self.order.is_degenerate

    def as_dict(self) -> Dict[str, object]:
        return {
            "column": self.column,
            "n_known": self.n_known,
            "n_predicted": self.n_predicted,
            "order": str(self.order) if self.order is not None else None,
            "converged": self.converged,
            "regression_only": self.regression_only,
            "fallback_used": self.fallback_used,
            "fallback_kind": self.fallback_kind,
            "reason": self.reason,
            "n_floored": self.n_floored,
        }


@dataclass(eq=False)
class FilledMatrix:
    """A matrix whose unknown cells carry predictions.

    ``base`` is the input staircase, ``values`` the completed grid. Observed
    cells are copied from ``base`` unchanged.
    """

    base: CohortMatrix
    values: np.ndarray
    diagnostics: List[ColumnDiagnostics]
    model_name: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).reshape(self.base.shape)
        known = self.base.known_mask()
        values[known] = self.base.values[known]
        if not np.all(np.isfinite(values)):
            t, u = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteValue(f"{self.model_name or 'model'} left cell ({self.base.cohorts[t]}, u={u}) non-finite")
        values.setflags(write=False)
        self.values = values

    @property
    def cohorts(self) -> Tuple[CohortMonth, ...]:
        return self.base.cohorts

    @property
    def prediction_month(self) -> CohortMonth:
        return self.base.prediction_month

    def predicted_mask(self) -> np.ndarray:
        return ~self.base.known_mask()

    def provenance(self) -> np.ndarray:
        return np.where(self.predicted_mask(), Provenance.PREDICTED.value, Provenance.OBSERVED.value)

    def horizon(self) -> np.ndarray:
        """Months from the prediction month to each cell's event month, 0 on observed cells."""
        rows = np.array([c - self.prediction_month for c in self.cohorts], dtype=np.int64).reshape(-1, 1)
        horizons = rows + np.arange(self.base.horizon_count).reshape(1, -1) + 1
        return np.where(self.predicted_mask(), horizons, 0)

    def predicted_cells(self) -> Iterator[Tuple[int, int, int, float]]:
        """(row, column, horizon, value) for every predicted cell, row-major."""
        horizon = self.horizon()
        for t, u in zip(*np.nonzero(self.predicted_mask())):
            yield int(t), int(u), int(horizon[t, u]), float(self.values[t, u])

    def fallback_columns(self) -> List[int]:
        return [d.column for d in self.diagnostics if d.fallback_used]

    def unscaled(self) -> "FilledMatrix":
        if self.base.scale_factor == 1.0:
            return self
        return FilledMatrix(self.base.unscale(), self.values * self.base.scale_factor,
                            self.diagnostics, self.model_name)

    def to_wide_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f"u{u}" for u in range(self.base.horizon_count)])
        frame.insert(0, "cohort_month", [str(c) for c in self.cohorts])
        return frame

    def provenance_frame(self) -> pd.DataFrame:
        provenance = self.provenance()
        horizon = self.horizon()
        fallback = {d.column: d.fallback_used for d in self.diagnostics}
        rows = []
        for t, cohort in enumerate(self.cohorts):
            for u in range(self.base.horizon_count):
                predicted = provenance[t, u] == Provenance.PREDICTED.value
                rows.append((str(cohort), u, provenance[t, u], int(horizon[t, u]),
                             bool(predicted and fallback.get(u, False))))
        return pd.DataFrame(rows, columns=PROVENANCE_COLUMNS)

    def diagnostics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([d.as_dict() for d in self.diagnostics])
