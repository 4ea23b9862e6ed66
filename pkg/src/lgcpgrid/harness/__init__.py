from .metrics import (
    Mse2Result,
    exceedance_indicators,
    field_mse,
    mse2_decomposition,
    mse2_from_indicators,
    predictive_mse2,
)
from .scenarios import generate_scenarios, scenario_parameters
from .study import ConfigError, MetricsReport, StudyConfig, run_study, run_table1

__all__ = [
    "ConfigError",
    "MetricsReport",
    "Mse2Result",
    "StudyConfig",
    "exceedance_indicators",
    "field_mse",
    "generate_scenarios",
    "mse2_decomposition",
    "mse2_from_indicators",
    "predictive_mse2",
    "run_study",
    "run_table1",
    "scenario_parameters",
]
