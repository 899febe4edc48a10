from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .arimax import EstimationConfig
from .baselines import FallbackPolicy, column_mean_fill, drift_fill, imported_fill, linear_fill, naive_fill
from .cohort_matrix import CohortCovariates, CohortMatrix
from .errors import InvalidConfig
from .filled import FilledMatrix
from .forecaster import Forecast2DConfig, fill_matrix
from .storage import read_imported_predictions


class ModelKind(str, Enum):
    ARIMAX_2D = "arimax2d"
    NAIVE = "naive"
    DRIFT = "drift"
    COLUMN_MEAN = "column_mean"
    LINEAR = "linear"
    IMPORTED = "imported"


class ModelSpec(BaseModel):
    """One model of a run: what it is called, which fill it uses and how it is tuned."""

    name: str = Field(..., min_length=1, max_length=50, description="Label used in reports")
    kind: ModelKind
    covariate_names: List[str] = Field(default_factory=list, description="Cohort covariates used as regressors")
    include_prev_column: bool = True
    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    fallback: FallbackPolicy = Field(default_factory=FallbackPolicy)
    path: Optional[Path] = Field(None, description="Predictions CSV of an imported model")
    source_name: Optional[str] = Field(None, description="model_name inside the CSV; defaults to name")

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "ModelSpec":
        if self.kind is ModelKind.IMPORTED and self.path is None:
            raise ValueError(f"imported model '{self.name}' needs a path")
        if self.kind in (ModelKind.NAIVE, ModelKind.DRIFT, ModelKind.COLUMN_MEAN) and self.covariate_names:
            raise ValueError(f"{self.kind.value} model '{self.name}' does not take covariates")
        return self

    def forecast_config(self) -> Forecast2DConfig:
        return Forecast2DConfig(
            estimation=self.estimation,
            covariate_names=self.covariate_names,
            fallback=self.fallback,
            include_prev_column=self.include_prev_column,
        )


FillFunction = Callable[[CohortMatrix, Optional[CohortCovariates]], FilledMatrix]
Builder = Callable[[ModelSpec], FillFunction]


class ForecastModel:
    """A model built from its spec, ready to fill matrices."""

    def __init__(self, spec: ModelSpec, fill: FillFunction):
        self.spec = spec
        self._fill = fill

    @property
    def name(self) -> str:
        return self.spec.name

    def fill(self, matrix: CohortMatrix, covariates: Optional[CohortCovariates] = None) -> FilledMatrix:
        return self._fill(matrix, covariates)


def _build_arimax(spec: ModelSpec) -> FillFunction:
    cfg = spec.forecast_config()
    return lambda matrix, covariates: fill_matrix(matrix, covariates, cfg, model_name=spec.name)


def _build_linear(spec: ModelSpec) -> FillFunction:
    def fill(matrix, covariates):
        return linear_fill(matrix, covariates, spec.covariate_names, model_name=spec.name,
                           min_rows=max(spec.fallback.min_rows, 3))
    return fill


def _build_imported(spec: ModelSpec) -> FillFunction:
    frame = read_imported_predictions(spec.path)
    source = spec.source_name or spec.name
    if source not in set(frame["model_name"]):
        raise InvalidConfig(f"{spec.path} has no predictions for model '{source}'")
    rows: pd.DataFrame = frame[frame["model_name"] == source].assign(model_name=spec.name)
    return lambda matrix, covariates: imported_fill(matrix, rows, spec.name)


class ModelRegistry:
    """Registry of model builders by kind."""

    def __init__(self):
        self.builders: Dict[ModelKind, Builder] = {}

    def register_model(self, kind: ModelKind, builder: Builder) -> None:
        """Register the builder of a model kind."""
        self.builders[kind] = builder

    def get_builder(self, kind: ModelKind) -> Optional[Builder]:
        return self.builders.get(kind)

    def list_models(self) -> List[str]:
        """List all registered model kinds."""
        return [kind.value for kind in self.builders]

    def remove_model(self, kind: ModelKind) -> bool:
        if kind in self.builders:
            del self.builders[kind]
            return True
        return False

    def build(self, spec: ModelSpec) -> ForecastModel:
        builder = self.get_builder(spec.kind)
        if builder is None:
            raise InvalidConfig(f"no builder registered for model kind '{spec.kind.value}'")
        return ForecastModel(spec, builder(spec))


# Global registry instance
model_registry = ModelRegistry()
model_registry.register_model(ModelKind.ARIMAX_2D, _build_arimax)
model_registry.register_model(ModelKind.NAIVE, lambda spec: lambda m, cov: naive_fill(m, model_name=spec.name))
model_registry.register_model(ModelKind.DRIFT, lambda spec: lambda m, cov: drift_fill(m, model_name=spec.name))
model_registry.register_model(ModelKind.COLUMN_MEAN,
                              lambda spec: lambda m, cov: column_mean_fill(m, model_name=spec.name))
model_registry.register_model(ModelKind.LINEAR, _build_linear)
model_registry.register_model(ModelKind.IMPORTED, _build_imported)
