"""Discrete-event simulator of a blockchain-enabled NB-IoT monitoring system."""

from .config import (PROFILES, CalibrationProfile, ConfigError, Mode, ScenarioConfig, SensorKind,
                     SensorModel, load_config)
from .system import Simulation, SimulationResult, simulate

__all__ = [
    "PROFILES", "CalibrationProfile", "ConfigError", "Mode", "ScenarioConfig", "SensorKind",
    "SensorModel", "Simulation", "SimulationResult", "load_config", "simulate",
]
__version__ = "0.1.0"
