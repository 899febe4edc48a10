"""Cohort-by-horizon matrices.

Rows are cohorts (calendar month of acquisition), columns are months since
that event. A cell is known once its event month has fully elapsed before the
prediction month, so the known region is a staircase bounded by the diagonal.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BeforeValidator, PlainSerializer

from .errors import (
    ConflictingValue,
    CovariateMissing,
    DuplicateCell,
    IndexOutOfRange,
    MalformedRow,
    MissingDiagonalCell,
    NegativeValue,
    StaircaseGap,
)

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["cohort_month", "months_since_event", "value"]
CALENDAR_MONTH = "calendar_month"

_MONTH_PATTERN = re.compile(r"^(\d{4})-(\d{2})$")


@dataclass(frozen=True, order=True)
class CohortMonth:
    """A calendar month. Subtracting two months gives the month count between them."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be within 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "CohortMonth":
        match = _MONTH_PATTERN.match(str(text).strip())
        if match is None:
            raise ValueError(f"expected a YYYY-MM month, got '{text}'")
        return cls(int(match.group(1)), int(match.group(2)))

    @classmethod
    def coerce(cls, value: Any) -> "CohortMonth":
        if isinstance(value, cls):
            return value
        return cls.parse(value)

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "CohortMonth":
        year, month0 = divmod(int(ordinal), 12)
        return cls(year, month0 + 1)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def __add__(self, months: int) -> "CohortMonth":
        if isinstance(months, (int, np.integer)):
            return CohortMonth.from_ordinal(self.ordinal + int(months))
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, CohortMonth):
            return self.ordinal - other.ordinal
        if isinstance(other, (int, np.integer)):
            return CohortMonth.from_ordinal(self.ordinal - int(other))
        return NotImplemented

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


# Pydantic field type for YYYY-MM strings
Month = Annotated[
    CohortMonth,
    BeforeValidator(CohortMonth.coerce),
    PlainSerializer(str, return_type=str),
]


def month_range(first: CohortMonth, last: CohortMonth) -> Tuple[CohortMonth, ...]:
    """Consecutive months from ``first`` to ``last`` inclusive."""
    return tuple(first + k for k in range(last - first + 1))


class CellStatus(str, Enum):
    KNOWN = "KNOWN"
    UNKNOWN = "UNKNOWN"


def known_mask_for(cohorts: Sequence[CohortMonth], horizon_count: int,
                   prediction_month: CohortMonth) -> np.ndarray:
    """Boolean (rows, U) mask: True where cohort + u <= prediction_month - 1."""
    ordinals = np.array([c.ordinal for c in cohorts], dtype=np.int64).reshape(-1, 1)
    events = ordinals + np.arange(horizon_count, dtype=np.int64).reshape(1, -1)
    return events <= prediction_month.ordinal - 1


@dataclass(frozen=True, eq=False)
class CohortMatrix:
    """Immutable staircase of revenue values.

    ``values`` has NaN exactly on unknown cells. ``scale_factor`` is the divisor
    applied at ingestion when max-scaling was requested (1.0 otherwise).
    """

    cohorts: Tuple[CohortMonth, ...]
    horizon_count: int
    values: np.ndarray
    prediction_month: CohortMonth
    scale_factor: float = 1.0

    def __post_init__(self):
        cohorts = tuple(self.cohorts)
        values = np.array(self.values, dtype=float, copy=True).reshape(len(cohorts), self.horizon_count)
        object.__setattr__(self, "cohorts", cohorts)
        object.__setattr__(self, "values", values)

        if self.horizon_count < 1:
            raise MalformedRow(f"horizon_count must be >= 1, got {self.horizon_count}")
        for previous, current in zip(cohorts, cohorts[1:]):
            if current - previous != 1:
                raise StaircaseGap(f"cohorts must be consecutive and ascending: {previous} then {current}")

        known = known_mask_for(cohorts, self.horizon_count, self.prediction_month)
        present = ~np.isnan(values)
        if np.any(present & ~known):
            t, u = np.argwhere(present & ~known)[0]
            raise MalformedRow(
                f"cell ({cohorts[t]}, u={u}) holds a value but is unknown at {self.prediction_month}"
            )
        if np.any(known & ~present):
            t, u = np.argwhere(known & ~present)[0]
            raise StaircaseGap(f"cell ({cohorts[t]}, u={u}) is known at {self.prediction_month} but missing")
        if np.any(values[present] < 0):
            raise NegativeValue("revenue values must be non-negative")
        if not np.all(np.isfinite(values[present])):
            raise MalformedRow("known values must be finite")

        values.setflags(write=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CohortMatrix):
            return NotImplemented
        return (
            self.cohorts == other.cohorts
            and self.horizon_count == other.horizon_count
            and self.prediction_month == other.prediction_month
            and self.scale_factor == other.scale_factor
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    @property
    def n_cohorts(self) -> int:
        return len(self.cohorts)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_cohorts, self.horizon_count

    def known_mask(self) -> np.ndarray:
        return known_mask_for(self.cohorts, self.horizon_count, self.prediction_month)

    def is_complete(self) -> bool:
        return bool(np.all(self.known_mask()))

    def cell_status(self, t: int, u: int) -> CellStatus:
        self._check_index(t, u)
        if self.cohorts[t] + u <= self.prediction_month - 1:
            return CellStatus.KNOWN
        return CellStatus.UNKNOWN

    def column_series(self, u: int) -> Tuple[np.ndarray, List[int]]:
        """Known values of column ``u`` ordered by cohort, and the rows still to forecast."""
        if not 0 <= u < self.horizon_count:
            raise IndexOutOfRange(f"column {u} outside 0..{self.horizon_count - 1}")
        known = self.known_mask()[:, u]
        return self.values[known, u].copy(), [int(t) for t in np.flatnonzero(~known)]

    def row_of(self, cohort: CohortMonth) -> int:
        if not self.cohorts:
            raise IndexOutOfRange(f"cohort {cohort} is not in an empty matrix")
        t = cohort - self.cohorts[0]
        if not 0 <= t < self.n_cohorts:
            raise IndexOutOfRange(f"cohort {cohort} is not in {self.cohorts[0]}..{self.cohorts[-1]}")
        return t

    def advance_prediction_month(self, new_rows) -> "CohortMatrix":
        """Move "now" forward by one month using the cells of the newly elapsed month.

        ``new_rows`` must hold every cell whose event month equals the current
        prediction month: one per surviving column plus the new cohort's u=0.
        Re-supplying an already known cell is accepted when its value agrees.
        Values are taken in the matrix's own (possibly scaled) units.
        """
        current = self.prediction_month
        cohorts = list(self.cohorts)
        if not cohorts or cohorts[-1] < current:
            cohorts.append(current)
        if cohorts[0] > current:
            raise MalformedRow(f"matrix starts at {cohorts[0]}, after prediction month {current}")

        values = np.full((len(cohorts), self.horizon_count), np.nan)
        values[: self.n_cohorts] = self.values

        supplied = _parse_cells(new_rows)
        for (cohort, u), value in supplied.items():
            if u >= self.horizon_count:
                raise MalformedRow(f"cell ({cohort}, u={u}) lies beyond {self.horizon_count} columns")
            event = cohort + u
            if cohort < cohorts[0] or cohort > cohorts[-1] or event > current:
                raise MalformedRow(f"cell ({cohort}, u={u}) does not become known at {current + 1}")
            t = cohort - cohorts[0]
            if event < current:
                if values[t, u] != value:
                    raise ConflictingValue(
                        f"cell ({cohort}, u={u}) is known as {values[t, u]!r}, supplied {value!r}"
                    )
                continue
            values[t, u] = value

        for t, cohort in enumerate(cohorts):
            u = current - cohort
            if 0 <= u < self.horizon_count and (cohort, u) not in supplied:
                raise MissingDiagonalCell(f"missing cell ({cohort}, u={u}) for event month {current}")

        return CohortMatrix(tuple(cohorts), self.horizon_count, values, current + 1, self.scale_factor)

    def as_of(self, month: CohortMonth) -> "CohortMatrix":
        """The matrix as it looked when ``month`` was the prediction month."""
        if month > self.prediction_month:
            raise IndexOutOfRange(f"{month} is after this matrix's prediction month {self.prediction_month}")
        keep = [t for t, cohort in enumerate(self.cohorts) if cohort < month]
        cohorts = tuple(self.cohorts[t] for t in keep)
        values = self.values[keep].copy()
        values[~known_mask_for(cohorts, self.horizon_count, month)] = np.nan
        return CohortMatrix(cohorts, self.horizon_count, values, month, self.scale_factor)

    def truncate(self, horizon_count: int) -> "CohortMatrix":
        if not 1 <= horizon_count <= self.horizon_count:
            raise IndexOutOfRange(f"cannot truncate {self.horizon_count} columns to {horizon_count}")
        return CohortMatrix(self.cohorts, horizon_count, self.values[:, :horizon_count],
                            self.prediction_month, self.scale_factor)

    def max_scaled(self) -> "CohortMatrix":
        """Values divided by their maximum, the divisor kept in ``scale_factor``."""
        present = self.values[~np.isnan(self.values)]
        peak = float(present.max()) if present.size else 0.0
        if peak <= 0:
            return self
        return CohortMatrix(self.cohorts, self.horizon_count, self.values / peak,
                            self.prediction_month, self.scale_factor * peak)

    def unscale(self) -> "CohortMatrix":
        return CohortMatrix(self.cohorts, self.horizon_count, self.values * self.scale_factor,
                            self.prediction_month, 1.0)

    def to_wide_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f"u{u}" for u in range(self.horizon_count)])
        frame.insert(0, "cohort_month", [str(c) for c in self.cohorts])
        return frame

    def to_records_frame(self) -> pd.DataFrame:
        known = self.known_mask()
        rows = [
            (str(self.cohorts[t]), int(u), float(self.values[t, u]))
            for t, u in zip(*np.nonzero(known))
        ]
        return pd.DataFrame(rows, columns=RECORD_COLUMNS)

    def _check_index(self, t: int, u: int) -> None:
        if not 0 <= t < self.n_cohorts:
            raise IndexOutOfRange(f"row {t} outside 0..{self.n_cohorts - 1}")
        if not 0 <= u < self.horizon_count:
            raise IndexOutOfRange(f"column {u} outside 0..{self.horizon_count - 1}")


def empty_matrix(prediction_month: CohortMonth, horizon_count: int) -> CohortMatrix:
    return CohortMatrix((), horizon_count, np.empty((0, horizon_count)), prediction_month)


RecordsInput = Union[pd.DataFrame, Iterable[Tuple[Any, Any, Any]]]


def _parse_cells(records: RecordsInput) -> Dict[Tuple[CohortMonth, int], float]:
    if isinstance(records, pd.DataFrame):
        missing = [c for c in RECORD_COLUMNS if c not in records.columns]
        if missing:
            raise MalformedRow(f"records are missing columns {missing}")
        rows = records[RECORD_COLUMNS].itertuples(index=False, name=None)
    else:
        rows = records

    cells: Dict[Tuple[CohortMonth, int], float] = {}
    for number, row in enumerate(rows, start=1):
        try:
            raw_cohort, raw_u, raw_value = row
            cohort = CohortMonth.coerce(raw_cohort)
            u_float = float(raw_u)
            value = float(raw_value)
        except (TypeError, ValueError) as e:
            raise MalformedRow(f"row {number}: {e}")
        if not u_float.is_integer() or u_float < 0:
            raise MalformedRow(f"row {number}: months_since_event must be a non-negative integer, got {raw_u!r}")
        if not np.isfinite(value):
            raise MalformedRow(f"row {number}: value must be finite, got {raw_value!r}")
        if value < 0:
            raise NegativeValue(f"row {number}: negative value {value!r}")
        key = (cohort, int(u_float))
        if key in cells:
            raise DuplicateCell(f"row {number}: duplicate cell ({cohort}, u={key[1]})")
        cells[key] = value
    return cells


def load_records(
    records: RecordsInput,
    prediction_month: Optional[CohortMonth] = None,
    horizon_count: Optional[int] = None,
    scale: bool = False,
) -> CohortMatrix:
    """Build a matrix from long-format ``(cohort_month, months_since_event, value)`` rows.

    The prediction month defaults to one month after the latest event month in
    the data. With ``horizon_count`` given, rows beyond it are dropped. With
    ``scale`` the values are divided by their maximum and the divisor is kept
    in ``scale_factor``.
    """
    cells = _parse_cells(records)
    if not cells:
        raise MalformedRow("no records to load")

    if horizon_count is not None:
        kept = {key: value for key, value in cells.items() if key[1] < horizon_count}
        dropped = len(cells) - len(kept)
        if dropped:
            logger.warning(f"dropped {dropped} rows beyond {horizon_count} columns",
                           extra={"code": "ROWS_DROPPED"})
        cells = kept
        if not cells:
            raise MalformedRow(f"no records within {horizon_count} columns")
    else:
        horizon_count = max(u for _, u in cells) + 1

    if prediction_month is None:
        prediction_month = max(cohort + u for cohort, u in cells) + 1

    first = min(cohort for cohort, _ in cells)
    last = max(cohort for cohort, _ in cells)
    if first > prediction_month - 1:
        raise MalformedRow(f"prediction month {prediction_month} precedes the first cohort {first}")
    for cohort, u in cells:
        if cohort + u > prediction_month - 1:
            raise MalformedRow(f"cell ({cohort}, u={u}) holds a value but is unknown at {prediction_month}")

    # Rows end at the newest observed cohort; a complete matrix gets no empty trailing rows
    cohorts = month_range(first, last)
    values = np.full((len(cohorts), horizon_count), np.nan)
    for (cohort, u), value in cells.items():
        values[cohort - first, u] = value

    known = known_mask_for(cohorts, horizon_count, prediction_month)
    gaps = np.argwhere(known & np.isnan(values))
    if len(gaps):
        t, u = gaps[0]
        raise StaircaseGap(f"{len(gaps)} known cells missing, first ({cohorts[t]}, u={u})")

    matrix = CohortMatrix(cohorts, horizon_count, values, prediction_month)
    return matrix.max_scaled() if scale else matrix


def from_wide_frame(frame: pd.DataFrame, prediction_month: Optional[CohortMonth] = None,
                    scale_factor: float = 1.0) -> CohortMatrix:
    """Inverse of ``CohortMatrix.to_wide_frame``; empty fields are unknown cells."""
    if "cohort_month" not in frame.columns:
        raise MalformedRow("wide matrix needs a cohort_month column")
    value_columns = [c for c in frame.columns if c != "cohort_month"]
    expected = [f"u{u}" for u in range(len(value_columns))]
    if value_columns != expected:
        raise MalformedRow(f"wide matrix columns must be {expected}, got {value_columns}")
    try:
        cohorts = tuple(CohortMonth.coerce(c) for c in frame["cohort_month"])
        values = frame[value_columns].to_numpy(dtype=float)
    except ValueError as e:
        raise MalformedRow(str(e))
    if prediction_month is None:
        present = np.argwhere(~np.isnan(values))
        if not len(present):
            raise MalformedRow("cannot infer the prediction month of a matrix with no values")
        prediction_month = max(cohorts[t] + int(u) for t, u in present) + 1
    return CohortMatrix(cohorts, len(value_columns), values, prediction_month, scale_factor)


@dataclass(frozen=True, eq=False)
class CohortCovariates:
    """Per-cohort feature vectors (the X_k of each cohort row)."""

    cohorts: Tuple[CohortMonth, ...]
    names: Tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        cohorts = tuple(self.cohorts)
        names = tuple(self.names)
        values = np.array(self.values, dtype=float, copy=True).reshape(len(cohorts), len(names))
        if len(set(names)) != len(names):
            raise MalformedRow(f"duplicate covariate names in {names}")
        if len(set(cohorts)) != len(cohorts):
            raise DuplicateCell("duplicate cohort in covariates")
        if not np.all(np.isfinite(values)):
            raise MalformedRow("covariate values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "cohorts", cohorts)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls, cohorts: Sequence[CohortMonth] = ()) -> "CohortCovariates":
        return cls(tuple(cohorts), (), np.empty((len(cohorts), 0)))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "CohortCovariates":
        if "cohort_month" not in frame.columns:
            raise MalformedRow("covariates need a cohort_month column")
        names = tuple(c for c in frame.columns if c != "cohort_month")
        try:
            cohorts = tuple(CohortMonth.coerce(c) for c in frame["cohort_month"])
            values = frame[list(names)].to_numpy(dtype=float)
        except ValueError as e:
            raise MalformedRow(f"covariates: {e}")
        return cls(cohorts, names, values)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.names))
        frame.insert(0, "cohort_month", [str(c) for c in self.cohorts])
        return frame

    def check_covers(self, cohorts: Iterable[CohortMonth], names: Iterable[str]) -> None:
        names = [n for n in names if n != CALENDAR_MONTH]
        unknown = [n for n in names if n not in self.names]
        if unknown:
            raise CovariateMissing(f"covariates {unknown} not among {list(self.names)}")
        if names:
            present = set(self.cohorts)
            missing = [str(c) for c in cohorts if c not in present]
            if missing:
                raise CovariateMissing(f"no covariates for cohorts {missing[:5]}")

    def select(self, cohorts: Sequence[CohortMonth], names: Sequence[str]) -> np.ndarray:
        """Matrix of shape (len(cohorts), len(names)) in the requested name order."""
        self.check_covers(cohorts, names)
        position = {cohort: i for i, cohort in enumerate(self.cohorts)}
        out = np.empty((len(cohorts), len(names)))
        for j, name in enumerate(names):
            if name == CALENDAR_MONTH:
                raise CovariateMissing(f"'{CALENDAR_MONTH}' depends on the column and is built by the forecaster")
            column = self.names.index(name)
            out[:, j] = [self.values[position[c], column] for c in cohorts]
        return out
