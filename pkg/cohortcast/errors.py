"""Exception hierarchy.

Every error carries a stable ``code`` for structured diagnostics and the
process ``exit_code`` the CLI returns when it escapes a command.
"""

from typing import Any


class CohortcastError(Exception):
    """Base class for all cohortcast errors."""

    code = "ERROR"
    exit_code = 1

    def __init__(self, detail: str = "", **context: Any):
        self.detail = detail or self.__class__.__name__
        self.context = context
        super().__init__(self.detail)


# Configuration (exit code 2)

class ConfigError(CohortcastError):
    code = "CONFIG_ERROR"
    exit_code = 2


class InvalidConfig(ConfigError):
    code = "INVALID_CONFIG"


class EmptyRange(ConfigError):
    code = "EMPTY_RANGE"


# Data (exit code 3)

class DataError(CohortcastError):
    code = "DATA_ERROR"
    exit_code = 3


class MalformedRow(DataError):
    code = "MALFORMED_ROW"


class DuplicateCell(DataError):
    code = "DUPLICATE_CELL"


class StaircaseGap(DataError):
    code = "STAIRCASE_GAP"


class NegativeValue(DataError):
    code = "NEGATIVE_VALUE"


class IndexOutOfRange(DataError):
    code = "INDEX_OUT_OF_RANGE"


class MissingDiagonalCell(DataError):
    code = "MISSING_DIAGONAL_CELL"


class ConflictingValue(DataError):
    code = "CONFLICTING_VALUE"


class CovariateMissing(DataError):
    code = "COVARIATE_MISSING"


class EmptyInput(DataError):
    code = "EMPTY_INPUT"


class LengthMismatch(DataError):
    code = "LENGTH_MISMATCH"


class EmptySlice(DataError):
    code = "EMPTY_SLICE"


class TruthGap(DataError):
    code = "TRUTH_GAP"


# Model (exit code 4)

class ModelError(CohortcastError):
    code = "MODEL_ERROR"
    exit_code = 4


class SeriesTooShort(ModelError):
    code = "SERIES_TOO_SHORT"


class DimensionMismatch(ModelError):
    code = "DIMENSION_MISMATCH"


class NonFiniteValue(ModelError):
    code = "NON_FINITE_VALUE"


class InsufficientData(ModelError):
    code = "INSUFFICIENT_DATA"


class SingularDesign(ModelError):
    code = "SINGULAR_DESIGN"


class NoFeasibleOrder(ModelError):
    code = "NO_FEASIBLE_ORDER"


class InsufficientHistory(ModelError):
    code = "INSUFFICIENT_HISTORY"


class ColumnUnfittable(ModelError):
    code = "COLUMN_UNFITTABLE"

    def __init__(self, detail: str = "", column: int = -1, **context: Any):
        super().__init__(detail, column=column, **context)
        self.column = column


class PreviousColumnIncomplete(ModelError):
    code = "PREVIOUS_COLUMN_INCOMPLETE"


class ModelFailure(ModelError):
    code = "MODEL_FAILURE"


# I/O (exit code 5)

class IoFailure(CohortcastError):
    code = "IO_FAILURE"
    exit_code = 5
