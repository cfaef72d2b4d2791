"""Discrete-event simulator for serverless clusters."""

from .config import ScenarioConfig, load, loads
from .controller import RunResult, Simulation, run_config
from .metrics import RunSummary

__all__ = ["RunResult", "RunSummary", "ScenarioConfig", "Simulation", "load", "loads", "run_config"]
__version__ = "0.1.0"
