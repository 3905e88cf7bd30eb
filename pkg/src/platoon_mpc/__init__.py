"""Centralized model predictive control of vehicle platoons with human takeover."""
from .controller import ControllerConfig, PlatoonController
from .costfn import ConstraintSpec, CostWeights
from .dynamics import PlatoonState, VehicleParams, build_platoon_model, discretize_vehicle
from .errors import (InfeasibleError, InvalidParameterError, NumericalError, PlatoonMPCError,
                     ScenarioError)
from .qp import QpProblem, solve_dare, solve_qp
from .sim import Event, Scenario, Telemetry, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConstraintSpec", "ControllerConfig", "CostWeights", "Event", "InfeasibleError",
    "InvalidParameterError", "NumericalError", "PlatoonController", "PlatoonMPCError",
    "PlatoonState", "QpProblem", "Scenario", "ScenarioError", "Telemetry", "VehicleParams",
    "build_platoon_model", "discretize_vehicle", "run_scenario", "solve_dare", "solve_qp",
]
