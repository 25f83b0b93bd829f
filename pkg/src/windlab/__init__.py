"""Wind turbine control laboratory.

A blade-element-momentum rotor model coupled to a discrete control
environment, with three controllers (double deep Q-learning with prioritized
replay, tabular value iteration, quantized PID) and a benchmark harness that
compares them on shared wind scenarios.
"""

__version__ = "0.1.0"

from .aero import (  # noqa: F401
    AirfoilPolar, BladeSection, RotorConfig, OperatingPoint, AeroSolution,
    reference_turbine, solve_rotor, cp_nominal,
)
