"""EMT simulation of a bulk grid with synchronous machines, grid-following
inverters and aggregated full-converter offshore wind plants."""
from pathlib import Path

from .case_model import SystemCase, load_case, parse_case, validate_case
from .engine import Simulation, SimulationError, run_simulation
from .powerflow import snapshot_for_emt, solve_powerflow
from .recording import Recording, read_csv, write_csv
from .scenario import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

DATA_DIR = Path(__file__).parent / "data"

__all__ = [
    "DATA_DIR", "Recording", "Scenario", "Simulation", "SimulationError", "SystemCase",
    "load_case", "load_scenario", "parse_case", "parse_scenario", "read_csv", "run_simulation",
    "snapshot_for_emt", "solve_powerflow", "validate_case", "write_csv",
]
