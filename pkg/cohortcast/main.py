import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError

from .config import load_run_config, settings
from .errors import CohortcastError, InvalidConfig, IoFailure, ModelFailure
from .logging_config import configure_logging

logger = logging.getLogger(__name__)

COMMANDS = {
    "forecast": "Fill the unknown cells of the input matrix",
    "backtest": "Score models over a range of simulated prediction months",
    "synth": "Write a generated cohort dataset",
}


class CommandResponse(BaseModel):
    """Summary printed to standard output after a command."""
    success: bool
    message: str
    data: Optional[Dict[str, Any]] = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Two-dimensional ARIMAX forecasting of cohort revenue matrices",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub = subcommands.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", type=Path, help="YAML run configuration")
        sub.add_argument("--out", type=Path, dest="output_dir", help="Output directory")
        sub.add_argument("--seed", type=int, help="Random seed")
        sub.add_argument("--prediction-month", dest="prediction_month", help="Prediction month as YYYY-MM")
        sub.add_argument("--log-level", dest="log_level", help="Logging level")
        sub.add_argument("--log-format", dest="log_format", choices=["kv", "json"], help="Diagnostics format")
    return parser


def run_command(command: str, config_path: Optional[Path] = None, **overrides: Any) -> Dict[str, Any]:
    """Load the run config and execute one command, returning its summary."""
    from .commands import CohortcastManager

    config = load_run_config(config_path, **overrides)
    manager = CohortcastManager(config)
    return getattr(manager, command)()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)

    try:
        result = run_command(
            args.command,
            args.config,
            output_dir=args.output_dir,
            seed=args.seed,
            prediction_month=args.prediction_month,
        )
    except CohortcastError as e:
        logger.error(e.detail, extra={"code": e.code})
        logger.debug("command failed", exc_info=True)
        return e.exit_code
    except ValidationError as e:
        logger.error(str(e), extra={"code": InvalidConfig.code})
        return InvalidConfig.exit_code
    except np.linalg.LinAlgError as e:
        logger.error(f"linear algebra failure: {e}", extra={"code": ModelFailure.code})
        logger.debug("command failed", exc_info=True)
        return ModelFailure.exit_code
    except OSError as e:
        logger.error(str(e), extra={"code": IoFailure.code})
        logger.debug("command failed", exc_info=True)
        return IoFailure.exit_code

    response = CommandResponse(success=True, message=f"{args.command} completed", data=result)
    print(response.model_dump_json(indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
