import logging
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from .backtest import BacktestPlan, default_range, emit_report, newest_cohort_slice, run
from .cohort_matrix import CohortCovariates, CohortMatrix
from .config import RunConfig, settings
from .errors import EmptySlice, InvalidConfig
from .models import ModelKind, ModelRegistry, ModelSpec, model_registry
from .storage import (
    read_covariates_csv,
    read_imported_predictions,
    read_records_csv,
    write_csv,
    write_json,
    write_wide_csv,
)
from .synth import generate

logger = logging.getLogger(__name__)


class CohortcastManager:
    """Runs the forecast, backtest and synth commands for one validated run config."""

    def __init__(self, config: RunConfig, registry: ModelRegistry = model_registry):
        self.config = config
        self.registry = registry

    def forecast(self) -> Dict[str, Any]:
        """Fill the input matrix with the selected model and write it out."""
        if self.config.inputs.values is None:
            raise InvalidConfig("forecast needs inputs.values")
        matrix, covariates = self._load_inputs()
        if self.config.prediction_month is not None:
            matrix = matrix.as_of(self.config.prediction_month)

        spec = self.config.selected_model()
        model = self.registry.build(spec)
        filled = model.fill(matrix, covariates)
        output = filled.unscaled()

        out_dir = self.config.output_dir
        files = [
            write_wide_csv(output, out_dir / "filled_matrix.csv"),
            write_csv(output.provenance_frame(), out_dir / "provenance.csv"),
            write_csv(output.diagnostics_frame(), out_dir / "diagnostics.csv"),
        ]
        predicted = int(output.predicted_mask().sum())
        files.append(write_json(self._manifest("forecast", matrix.scale_factor, {
            "model": spec.name,
            "prediction_month": str(matrix.prediction_month),
            "predicted_cells": predicted,
            "fallback_columns": output.fallback_columns(),
        }), out_dir / "manifest.json"))

        logger.info(f"{spec.name} predicted {predicted} cells at {matrix.prediction_month}")
        return {
            "command": "forecast",
            "model": spec.name,
            "prediction_month": str(matrix.prediction_month),
            "predicted_cells": predicted,
            "files": [str(f) for f in files],
        }

    def backtest(self) -> Dict[str, Any]:
        """Score every configured model over the backtest range."""
        if self.config.inputs.values is not None:
            truth, covariates = self._load_inputs()
        else:
            logger.info("no inputs.values configured, backtesting on generated data")
            truth, covariates = generate(self.config.synth)
            if self.config.scale:
                truth = truth.max_scaled()

        window = self.config.backtest
        default_start, default_end = default_range(truth, window.months)
        start = window.start_month or default_start
        end = window.end_month or default_end

        plan = BacktestPlan(
            truth=truth,
            covariates=covariates,
            start_month=start,
            end_month=end,
            models=self._backtest_models(),
            horizon_count=self.config.horizon_count,
            seed=self.config.seed,
            max_workers=window.max_workers,
        )
        report = run(plan, self.registry, histogram_bin_width=settings.histogram_bin_width)
        files = emit_report(report, self.config.output_dir, self._manifest("backtest", truth.scale_factor))

        summary = report.summary()
        try:
            newest = newest_cohort_slice(report)
            newest_smape = {row["model"]: row["value"] for _, row in newest.iterrows()}
        except EmptySlice:
            newest_smape = {}
        logger.info(f"scored {len(report.records)} cells over {len(report.months)} months")
        return {
            "command": "backtest",
            "range": [str(start), str(end)],
            "records": len(report.records),
            "smape": {row["model"]: row["smape"] for _, row in summary.iterrows()},
            "newest_cohort_smape": newest_smape,
            "failures": len(report.failures),
            "files": [str(f) for f in files],
        }

    def synth(self) -> Dict[str, Any]:
        """Write generated values and covariates in the input formats."""
        matrix, covariates = generate(self.config.synth)
        out_dir = self.config.output_dir
        files = [
            write_csv(matrix.to_records_frame(), out_dir / "values.csv"),
            write_csv(covariates.to_frame(), out_dir / "covariates.csv"),
        ]
        files.append(write_json(self._manifest("synth", 1.0, {
            "cohorts": [str(matrix.cohorts[0]), str(matrix.cohorts[-1])],
            "prediction_month": str(matrix.prediction_month),
        }), out_dir / "manifest.json"))
        return {
            "command": "synth",
            "cohorts": matrix.n_cohorts,
            "horizon_count": matrix.horizon_count,
            "files": [str(f) for f in files],
        }

    def _load_inputs(self) -> Tuple[CohortMatrix, Optional[CohortCovariates]]:
        inputs = self.config.inputs
        matrix = read_records_csv(inputs.values, horizon_count=self.config.horizon_count, scale=self.config.scale)
        covariates = read_covariates_csv(inputs.covariates) if inputs.covariates is not None else None
        return matrix, covariates

    def _backtest_models(self) -> List[ModelSpec]:
        """Configured models plus one imported model per model_name in each predictions file."""
        models = list(self.config.models)
        taken = {spec.name for spec in models}
        for path in self.config.inputs.imported_predictions:
            frame = read_imported_predictions(path)
            for name in sorted(frame["model_name"].unique()):
                if name in taken:
                    raise InvalidConfig(f"imported model '{name}' from {path} clashes with a configured model")
                taken.add(name)
                try:
                    models.append(ModelSpec(name=name, kind=ModelKind.IMPORTED, path=path))
                except ValidationError as e:
                    raise InvalidConfig(f"imported model '{name}' from {path} is not a valid model: {e}")
        return models

    def _manifest(self, command: str, scale_factor: float, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        manifest = {
            "command": command,
            "app": settings.app_name,
            "version": settings.app_version,
            "seed": self.config.seed,
            "scaled": scale_factor != 1.0,
            "scale_factor": scale_factor,
            "config": self.config.model_dump(mode="json"),
        }
        manifest.update(extra or {})
        return manifest
