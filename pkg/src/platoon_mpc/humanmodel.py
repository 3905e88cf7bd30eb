"""Minimum-change prediction of a human driver's future control moves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costfn import ConstraintSpec
from .dynamics import VehicleDiscrete, build_human_prediction
from .errors import InfeasibleError, InvalidParameterError
from .qp import ActiveSetSolver, QpProblem

# slack allowed on the measured state before it counts as out of bounds
STATE_TOL = 1e-6


@dataclass(frozen=True)
class HumanPrediction:
    delta_u_seq: np.ndarray
    binding: bool
    iterations: int = 0


def human_stage_constraints(spec: ConstraintSpec) -> tuple[np.ndarray, np.ndarray]:
    g_mat = np.array([[0.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])
    g_vec = np.array([spec.v_min, -spec.v_max, spec.a_min, -spec.a_max])
    return g_mat, g_vec


def human_constraints(vehicle: VehicleDiscrete, x, u_prev: float, spec: ConstraintSpec, horizon: int):
    """``(C, c)`` such that ``C dU <= c`` keeps every predicted stage within bounds."""
    pred = build_human_prediction(vehicle, horizon)
    g_mat, g_vec = human_stage_constraints(spec)
    g_bar = np.kron(np.eye(horizon), g_mat)
    free = pred.phi @ np.asarray(x, dtype=float) + pred.lam[:, 0] * float(u_prev)
    return g_bar @ pred.gamma, -(g_bar @ free) - np.tile(g_vec, horizon)


def rollout(vehicle: VehicleDiscrete, x, u_prev: float, delta_u_seq) -> np.ndarray:
    """States after each move of ``delta_u_seq``, shape ``(N, 3)``."""
    x = np.asarray(x, dtype=float)
    u = float(u_prev)
    out = []
    for du in np.asarray(delta_u_seq, dtype=float).reshape(-1):
        u += du
        x = vehicle.a_mat @ x + vehicle.b_vec * u
        out.append(x)
    return np.array(out)


def predict_human(vehicle: VehicleDiscrete, x, u_prev: float, spec: ConstraintSpec,
                  horizon: int, r_delta: float = 1.0, solver: ActiveSetSolver | None = None) -> HumanPrediction:
    """Smallest change-in-control sequence that keeps v and a within limits.

    Raises :class:`InfeasibleError` when no sequence exists, e.g. when the
    actuator lag already commits the vehicle to a violation.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (3,):
        raise InvalidParameterError("single-vehicle state must have length 3")
    if horizon < 1:
        raise InvalidParameterError("horizon must be >= 1")
    v, a = x[1], x[2]
    if (v < spec.v_min - STATE_TOL or v > spec.v_max + STATE_TOL
            or a < spec.a_min - STATE_TOL or a > spec.a_max + STATE_TOL):
        raise InvalidParameterError(f"human vehicle state v={v}, a={a} is outside the limits")
    c_mat, c_vec = human_constraints(vehicle, x, u_prev, spec, horizon)
    problem = QpProblem(2.0 * r_delta * np.eye(horizon), np.zeros(horizon), c_mat, c_vec)
    sol = (solver or ActiveSetSolver()).solve(problem)
    if not sol.optimal:
        raise InfeasibleError(f"human prediction QP ended with status {sol.status}")
    return HumanPrediction(sol.z, bool(sol.active_set), sol.iterations)
