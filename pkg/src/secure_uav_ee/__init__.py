"""Energy-efficient secure UAV-OFDMA downlink design.

Alternating optimisation of subcarrier scheduling, transmit power, UAV
trajectory and velocity under a robust eavesdropper-leakage constraint.
"""

from .model import (FlightParams, FlightPlan, IterParams, Scenario, Schedule, Solution, energy_efficiency,
                    straight_line_plan, validate_scenario)

__version__ = "0.1.0"

__all__ = ["FlightParams", "FlightPlan", "IterParams", "Scenario", "Schedule", "Solution", "energy_efficiency",
           "straight_line_plan", "validate_scenario", "__version__"]
