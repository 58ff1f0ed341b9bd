from .energy import EnergyLedger, consume_idle
from .engine import InvariantViolation, Simulator, run
from .scenario import ScenarioConfig, ScenarioError, load_scenario, scenario_from_dict

__all__ = [
    "EnergyLedger",
    "InvariantViolation",
    "ScenarioConfig",
    "ScenarioError",
    "Simulator",
    "consume_idle",
    "load_scenario",
    "run",
    "scenario_from_dict",
]
