"""Conditional distributed PCRLB for quantized decentralized sensor networks."""

from .config import ScenarioConfig, load_config
from .errors import (ConfigError, DisconnectedGraphError, FilterDivergence, FusionError, NumericalError,
                     SingularMatrixError)
from .harness import RunRecord, RunResult, report_ledger, run_scenario, sweep_bits

__all__ = [
    "ScenarioConfig", "load_config",
    "ConfigError", "DisconnectedGraphError", "FilterDivergence", "FusionError", "NumericalError",
    "SingularMatrixError",
    "RunRecord", "RunResult", "report_ledger", "run_scenario", "sweep_bits",
]

__version__ = "0.1.0"
