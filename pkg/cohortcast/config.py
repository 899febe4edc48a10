from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .cohort_matrix import CALENDAR_MONTH, Month
from .errors import InvalidConfig
from .models import ModelKind, ModelSpec
from .synth import SynthConfig


class Settings(BaseSettings):
    """Process-level settings, overridable through ``COHORTCAST_*`` variables."""

    app_name: str = "cohortcast"
    app_version: str = "1.0.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_format: str = "kv"

    # Reporting and execution
    histogram_bin_width: float = 5.0
    max_workers: int = 1

    model_config = SettingsConfigDict(
        env_prefix="COHORTCAST_",
        env_file=".env",
        case_sensitive=False,
    )


# Global settings instance
settings = Settings()


class InputPaths(BaseModel):
    """Input files of a run. Paths must exist when the config is validated."""

    values: Optional[Path] = None
    covariates: Optional[Path] = None
    imported_predictions: List[Path] = Field(default_factory=list)

    @field_validator("values", "covariates")
    @classmethod
    def _file_exists(cls, path: Optional[Path]) -> Optional[Path]:
        if path is not None and not path.is_file():
            raise ValueError(f"file not found: {path}")
        return path

    @field_validator("imported_predictions")
    @classmethod
    def _files_exist(cls, paths: List[Path]) -> List[Path]:
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ValueError(f"files not found: {', '.join(missing)}")
        return paths


class BacktestSettings(BaseModel):
    start_month: Optional[Month] = None
    end_month: Optional[Month] = None
    months: int = Field(12, ge=1, description="Range length when start/end are omitted")
    max_workers: int = Field(default_factory=lambda: settings.max_workers, ge=1)


def _default_models() -> List[ModelSpec]:
    return [
        ModelSpec(name="arimax2d", kind=ModelKind.ARIMAX_2D),
        ModelSpec(name="naive", kind=ModelKind.NAIVE),
        ModelSpec(name="linear", kind=ModelKind.LINEAR),
    ]


class RunConfig(BaseModel):
    """Validated contents of a run configuration file."""

    inputs: InputPaths = Field(default_factory=InputPaths)
    prediction_month: Optional[Month] = None
    horizon_count: Optional[int] = Field(None, ge=1, description="Columns to use; defaults to the data's")
    models: List[ModelSpec] = Field(default_factory=_default_models, min_length=1)
    forecast_model: Optional[str] = Field(None, description="Model run by the forecast command")
    backtest: BacktestSettings = Field(default_factory=BacktestSettings)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    output_dir: Path = Path("out")
    scale: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check_references(self) -> "RunConfig":
        names = [spec.name for spec in self.models]
        if len(set(names)) != len(names):
            raise ValueError(f"model names must be unique, got {names}")
        if self.forecast_model is not None and self.forecast_model not in names:
            raise ValueError(f"forecast_model '{self.forecast_model}' is not among {names}")
        if self.inputs.values is not None and self.inputs.covariates is None:
            needing = [spec.name for spec in self.models if set(spec.covariate_names) - {CALENDAR_MONTH}]
            if needing:
                raise ValueError(f"models {needing} name covariates but inputs.covariates is not set")
        # The top-level seed is authoritative for generated data
        if self.synth.seed != self.seed:
            self.synth = self.synth.model_copy(update={"seed": self.seed})
        return self

    def selected_model(self) -> ModelSpec:
        """The model the forecast command runs."""
        if self.forecast_model is None:
            return self.models[0]
        return next(spec for spec in self.models if spec.name == self.forecast_model)


def load_run_config(path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Read a YAML run config and apply command-line overrides.

    Overrides whose value is ``None`` are ignored.
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r") as handle:
                raw = yaml.safe_load(handle) or {}
        except FileNotFoundError:
            raise InvalidConfig(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise InvalidConfig(f"config file is not valid YAML: {e}")
        if not isinstance(raw, dict):
            raise InvalidConfig("config file must contain a mapping at the top level")

    raw.update({key: value for key, value in overrides.items() if value is not None})

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise InvalidConfig(f"invalid run config: {e}")
