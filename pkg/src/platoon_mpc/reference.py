"""Time-varying platoon reference: velocity ramp and virtual-leader positions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PlatoonState
from .errors import InvalidParameterError


@dataclass(frozen=True)
class ReferenceConfig:
    v_d: float
    k_m: int
    dt: float

    def __post_init__(self):
        if self.v_d < 0:
            raise InvalidParameterError(f"v_d must be >= 0, got {self.v_d}")
        if int(self.k_m) != self.k_m or self.k_m < 1:
            raise InvalidParameterError(f"k_m must be a positive integer, got {self.k_m}")
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class ReferenceState:
    """Start of the current ramp: index, velocity and virtual-leader position."""

    k0: int
    v_bar: float
    p_bar: float


@dataclass(frozen=True)
class ReferenceVector:
    x_star: np.ndarray

    @property
    def m(self) -> int:
        return self.x_star.size // 3

    @property
    def positions(self) -> np.ndarray:
        return self.x_star[: self.m]

    @property
    def velocity(self) -> float:
        return float(self.x_star[self.m])

    @property
    def acceleration(self) -> float:
        return float(self.x_star[-1])


def constant_distances(vehicles) -> np.ndarray:
    """Constant part of the desired gap, ``d_i = l_(i-1) + r_i``.

    The virtual leader in front of vehicle 1 is given vehicle 1's length.
    """
    lengths = [vehicles[0].length] + [v.length for v in vehicles[:-1]]
    return np.array([l + v.standstill for l, v in zip(lengths, vehicles)])


def _headways(vehicles, headways) -> np.ndarray:
    h = np.array([v.headway for v in vehicles] if headways is None else headways, dtype=float)
    if h.shape != (len(vehicles),):
        raise InvalidParameterError(f"expected {len(vehicles)} headways, got {h.shape}")
    return h


def init_reference(config: ReferenceConfig, platoon_state: PlatoonState, vehicles,
                   headways=None) -> ReferenceState:
    h = _headways(vehicles, headways)
    d = constant_distances(vehicles)
    v_bar = max(0.0, float(np.min(platoon_state.velocities)))
    p_bar = float(platoon_state.positions[0] + d[0] + h[0] * v_bar)
    return ReferenceState(platoon_state.k, v_bar, p_bar)


def reset_on_takeover(config: ReferenceConfig, vehicles, k: int, human_index: int,
                      platoon_state: PlatoonState, headways=None) -> ReferenceState:
    """Restart the ramp from the state of vehicle ``human_index`` (0-based)."""
    m = len(vehicles)
    if not 0 <= human_index < m:
        raise InvalidParameterError(f"vehicle index {human_index} out of range for M={m}")
    h = _headways(vehicles, headways)
    d = constant_distances(vehicles)
    v_bar = max(0.0, float(platoon_state.velocities[human_index]))
    p_bar = float(platoon_state.positions[human_index]
                  + np.sum(d[: human_index + 1] + h[: human_index + 1] * v_bar))
    return ReferenceState(int(k), v_bar, p_bar)


def leader_reference(config: ReferenceConfig, state: ReferenceState, k: int):
    """``(p*, v*, a*)`` of the virtual lead vehicle at sample ``k``."""
    n = k - state.k0
    if n < 0:
        raise InvalidParameterError(f"k={k} precedes ramp start k0={state.k0}")
    t = config.dt * n
    t_ramp = config.dt * config.k_m
    if n < config.k_m:
        a = (config.v_d - state.v_bar) / t_ramp
        return 0.5 * a * t * t + state.v_bar * t + state.p_bar, a * t + state.v_bar, a
    # linear piece continued from the end of the ramp so p* stays continuous
    p_end = 0.5 * (config.v_d + state.v_bar) * t_ramp + state.p_bar
    return p_end + config.v_d * (t - t_ramp), config.v_d, 0.0


def reference_at(config: ReferenceConfig, state: ReferenceState, vehicles, k: int,
                 headways=None) -> ReferenceVector:
    h = _headways(vehicles, headways)
    d = constant_distances(vehicles)
    p_lead, v_ref, a_ref = leader_reference(config, state, k)
    m = len(vehicles)
    positions = p_lead - np.cumsum(d + h * v_ref)
    x_star = np.concatenate([positions, np.full(m, v_ref), np.full(m, a_ref)])
    return ReferenceVector(x_star)


def reference_window(config, state, vehicles, k: int, horizon: int, headways=None) -> np.ndarray:
    """Stacked references for samples ``k+1 .. k+horizon``."""
    return np.concatenate([
        reference_at(config, state, vehicles, k + j, headways).x_star
        for j in range(1, horizon + 1)
    ])
