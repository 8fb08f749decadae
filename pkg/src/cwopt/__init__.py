"""Construction-waste hauling schedules and treatment-fee subsidy design."""

from .scenario import Scenario, generate_scenario, load_scenario

__version__ = "0.1.0"

__all__ = ["Scenario", "generate_scenario", "load_scenario", "__version__"]
