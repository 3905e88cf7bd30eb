"""Vehicle and platoon longitudinal dynamics.

Every stacked platoon vector in this package uses the ordering
``[p_1 .. p_M, v_1 .. v_M, a_1 .. a_M]``; controls are ``[u_1 .. u_M]``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidParameterError


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class VehicleParams:
    """Physical and driver-preference parameters of one vehicle.

    Attributes:
        tau: mechanical actuation lag [s]
        length: vehicle length [m]
        standstill: desired standstill distance to the predecessor [m]
        headway: desired headway time [s]
    """

    tau: float
    length: float = 2.5
    standstill: float = 6.0
    headway: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise InvalidParameterError(f"length must be positive, got {self.length}")
        if not (math.isfinite(self.standstill) and self.standstill >= 0):
            raise InvalidParameterError(f"standstill must be >= 0, got {self.standstill}")
        if not (math.isfinite(self.headway) and self.headway >= 0):
            raise InvalidParameterError(f"headway must be >= 0, got {self.headway}")


@dataclass(frozen=True)
class VehicleDiscrete:
    a_mat: np.ndarray
    b_vec: np.ndarray
    dt: float


@dataclass(frozen=True)
class PlatoonModel:
    m: int
    a_m: np.ndarray
    b_m: np.ndarray
    dt: float
    vehicles: tuple

    @property
    def nx(self) -> int:
        return 3 * self.m

    def vehicle(self, i: int) -> VehicleDiscrete:
        """Single-vehicle model of vehicle ``i`` (0-based)."""
        idx = [i, self.m + i, 2 * self.m + i]
        return VehicleDiscrete(
            _frozen(self.a_m[np.ix_(idx, idx)]), _frozen(self.b_m[idx, i]), self.dt
        )


@dataclass(frozen=True)
class PlatoonState:
    x: np.ndarray
    k: int = 0

    def __post_init__(self):
        x = _frozen(self.x).reshape(-1)
        if x.size % 3 != 0 or x.size == 0:
            raise InvalidParameterError(f"state length {x.size} is not a positive multiple of 3")
        if not np.all(np.isfinite(x)):
            raise InvalidParameterError("state contains non-finite entries")
        object.__setattr__(self, "x", x)

    @property
    def m(self) -> int:
        return self.x.size // 3

    @property
    def positions(self) -> np.ndarray:
        return self.x[: self.m]

    @property
    def velocities(self) -> np.ndarray:
        return self.x[self.m : 2 * self.m]

    @property
    def accelerations(self) -> np.ndarray:
        return self.x[2 * self.m :]

    def vehicle(self, i: int) -> np.ndarray:
        """``[p, v, a]`` of vehicle ``i`` (0-based)."""
        return self.x[[i, self.m + i, 2 * self.m + i]]


@dataclass(frozen=True)
class PredictionMatrices:
    """Stacked N-step prediction ``X = phi x + lam u_prev + gamma dU``."""

    phi: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    horizon: int


def continuous_matrices(tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ``(A_c, B_c)`` of the first-order-lag vehicle."""
    a_c = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / tau]])
    b_c = np.array([0.0, 0.0, 1.0 / tau])
    return a_c, b_c


def _lag_terms(tau: float, dt: float) -> tuple[float, float, float, float, float, float]:
    # 1 - exp(-dt/tau) via expm1 keeps precision for dt << tau
    one_minus_e = -math.expm1(-dt / tau)
    e = 1.0 - one_minus_e
    a12 = tau * one_minus_e
    b1 = dt - a12
    a02 = tau * b1
    b0 = -a02 + 0.5 * dt * dt
    return e, a12, a02, b0, b1, one_minus_e


def discretize_vehicle(params: VehicleParams | float, dt: float) -> VehicleDiscrete:
    """Exact zero-order-hold discretization of one vehicle.

    ``params`` may be a :class:`VehicleParams` or a bare lag ``tau``.
    """
    tau = params.tau if isinstance(params, VehicleParams) else float(params)
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if not (math.isfinite(tau) and tau > 0):
        raise InvalidParameterError(f"tau must be positive, got {tau}")
    e, a12, a02, b0, b1, b2 = _lag_terms(tau, dt)
    a_mat = np.array([[1.0, dt, a02], [0.0, 1.0, a12], [0.0, 0.0, e]])
    b_vec = np.array([b0, b1, b2])
    return VehicleDiscrete(_frozen(a_mat), _frozen(b_vec), float(dt))


def build_platoon_model(vehicles, dt: float) -> PlatoonModel:
    vehicles = tuple(vehicles)
    if not vehicles:
        raise InvalidParameterError("platoon needs at least one vehicle")
    m = len(vehicles)
    a_m = np.zeros((3 * m, 3 * m))
    b_m = np.zeros((3 * m, m))
    for i, veh in enumerate(vehicles):
        d = discretize_vehicle(veh, dt)
        idx = [i, m + i, 2 * m + i]
        a_m[np.ix_(idx, idx)] = d.a_mat
        b_m[idx, i] = d.b_vec
    return PlatoonModel(m, _frozen(a_m), _frozen(b_m), float(dt), vehicles)


def _prediction(a: np.ndarray, b: np.ndarray, horizon: int) -> PredictionMatrices:
    if int(horizon) != horizon or horizon < 1:
        raise InvalidParameterError(f"horizon must be a positive integer, got {horizon}")
    horizon = int(horizon)
    b = b.reshape(a.shape[0], -1)
    nx, nu = b.shape
    phi = np.zeros((nx * horizon, nx))
    lam = np.zeros((nx * horizon, nu))
    gamma = np.zeros((nx * horizon, nu * horizon))
    power = np.eye(nx)       # A^j
    partial = np.zeros((nx, nx))  # I + A + ... + A^(j-1)
    blocks = []
    for j in range(horizon):
        partial = partial + power
        power = a @ power
        phi[j * nx : (j + 1) * nx] = power
        blocks.append(partial @ b)
        lam[j * nx : (j + 1) * nx] = blocks[j]
    for j in range(horizon):
        for i in range(j + 1):
            gamma[j * nx : (j + 1) * nx, i * nu : (i + 1) * nu] = blocks[j - i]
    return PredictionMatrices(_frozen(phi), _frozen(lam), _frozen(gamma), horizon)


def build_prediction(model: PlatoonModel, horizon: int) -> PredictionMatrices:
    return _prediction(model.a_m, model.b_m, horizon)


def build_human_prediction(vehicle: VehicleDiscrete, horizon: int) -> PredictionMatrices:
    return _prediction(vehicle.a_mat, vehicle.b_vec, horizon)


def step_platoon(model: PlatoonModel, x, u_prev, delta_u, noise=None):
    """Advance one sample: ``X+ = A X + B (U_prev + dU) + W``.

    Returns ``(next_state, u_applied)``.
    """
    k = x.k if isinstance(x, PlatoonState) else 0
    xv = x.x if isinstance(x, PlatoonState) else np.asarray(x, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    delta_u = np.asarray(delta_u, dtype=float).reshape(-1)
    if xv.shape != (model.nx,):
        raise InvalidParameterError(f"state must have length {model.nx}, got {xv.shape}")
    if u_prev.shape != (model.m,) or delta_u.shape != (model.m,):
        raise InvalidParameterError(f"controls must have length {model.m}")
    u = u_prev + delta_u
    nxt = model.a_m @ xv + model.b_m @ u
    if noise is not None:
        noise = np.asarray(noise, dtype=float).reshape(-1)
        if noise.shape != (model.nx,):
            raise InvalidParameterError(f"noise must have length {model.nx}")
        nxt = nxt + noise
    return PlatoonState(nxt, k + 1), u
