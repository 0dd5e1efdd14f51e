"""Thevenin tracking and emergency capacity estimation for LCC-HVDC terminals.

The package is organised in layers:

* :mod:`hvdccap.phasor`    -- phasor samples, per-unit bases and conversions
* :mod:`hvdccap.converter` -- LCC converter steady-state model, constraints and
  the alternating AC/DC power-flow solve
* :mod:`hvdccap.estimator` -- adaptive measurement screening and windowed total
  least squares identification of the grid Thevenin equivalent
* :mod:`hvdccap.engine`    -- the capacity sweep and multi-terminal allocation
* :mod:`hvdccap.simulate`  -- synthetic PMU trajectory generation with ground truth
* :mod:`hvdccap.fileio`    -- CSV schemas and the flat key/value config format
* :mod:`hvdccap.cli`       -- command line front end (local or against a server)
* :mod:`hvdccap.service`   -- FastAPI application wrapping the engine
"""

__version__ = "0.1.0"

from .phasor import PerUnitBase, PmuSample, delta, physical_to_pu, pu_to_physical
from .converter import AcSide, DcOperatingPoint, HvdcConfig, VdcolCurve
from .estimator import ExcitationParams, TheveninEstimate, TeEstimator
from .engine import AllocationPlan, CapacityEngine, CapacityResult, allocate, estimate_capacity
from .simulate import ScenarioConfig, SimEvent, TrajectoryRecord, generate

__all__ = [
    "PerUnitBase",
    "PmuSample",
    "delta",
    "pu_to_physical",
    "physical_to_pu",
    "AcSide",
    "DcOperatingPoint",
    "HvdcConfig",
    "VdcolCurve",
    "ExcitationParams",
    "TheveninEstimate",
    "TeEstimator",
    "AllocationPlan",
    "CapacityEngine",
    "CapacityResult",
    "allocate",
    "estimate_capacity",
    "ScenarioConfig",
    "SimEvent",
    "TrajectoryRecord",
    "generate",
]
