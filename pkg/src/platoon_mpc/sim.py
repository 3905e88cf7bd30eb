"""Closed-loop scenario simulation with scripted human drivers."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .controller import ControllerConfig, PlatoonController
from .costfn import ConstraintSpec, CostWeights
from .dynamics import PlatoonState, build_platoon_model, step_platoon
from .errors import ScenarioError
from .reference import ReferenceConfig

log = logging.getLogger(__name__)

TAKEOVER = "takeover"
RELEASE = "release"
SET_HEADWAY = "set_headway"
EVENT_KINDS = (TAKEOVER, RELEASE, SET_HEADWAY)


@dataclass(frozen=True)
class Event:
    """A timed scenario event. ``vehicle`` is 1-based."""

    time: float
    kind: str
    vehicle: int
    profile: tuple = ()  # takeover only: ((time, target_velocity), ...)
    headway: float | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian acceleration noise; ``covariance`` holds one variance per vehicle."""

    seed: int
    covariance: tuple


@dataclass(frozen=True)
class InitialState:
    positions: tuple
    velocities: tuple | None = None
    accelerations: tuple | None = None


@dataclass(frozen=True)
class Scenario:
    vehicles: tuple
    dt: float = 0.5
    duration: float = 400.0
    v_d: float = 27.78
    k_m: int = 40
    horizon: int = 20
    weights: CostWeights = field(default_factory=CostWeights)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    events: tuple = ()
    initial: InitialState | None = None
    noise: NoiseSpec | None = None
    human_gain: float = 1.0

    @property
    def m(self) -> int:
        return len(self.vehicles)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def sample_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not math.isclose(k * self.dt, t, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(t))):
            raise ScenarioError(f"time {t} is not a multiple of dt={self.dt}")
        return k

    def validate(self) -> None:
        if not self.vehicles:
            raise ScenarioError("scenario needs at least one vehicle")
        if self.dt <= 0:
            raise ScenarioError("dt must be positive")
        if self.duration < 0:
            raise ScenarioError("duration_s must be >= 0")
        self.sample_of(self.duration)
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ScenarioError("events must be sorted by time")
        human = [False] * self.m
        for n, e in enumerate(self.events):
            where = f"events[{n}]"
            if e.kind not in EVENT_KINDS:
                raise ScenarioError(f"{where}.kind: unknown event kind {e.kind!r}")
            if not 1 <= e.vehicle <= self.m:
                raise ScenarioError(f"{where}.vehicle: {e.vehicle} out of range 1..{self.m}")
            if not 0 <= e.time <= self.duration:
                raise ScenarioError(f"{where}.time: {e.time} outside [0, {self.duration}]")
            self.sample_of(e.time)
            i = e.vehicle - 1
            if e.kind == TAKEOVER:
                if human[i]:
                    raise ScenarioError(f"{where}: vehicle {e.vehicle} is already human-driven")
                if not e.profile:
                    raise ScenarioError(f"{where}.profile: takeover needs a velocity profile")
                human[i] = True
            elif e.kind == RELEASE:
                if not human[i]:
                    raise ScenarioError(f"{where}: vehicle {e.vehicle} was not taken over")
                human[i] = False
            elif e.headway is None or not e.headway > 0:
                raise ScenarioError(f"{where}.headway: must be positive")
        if self.noise is not None and len(self.noise.covariance) != self.m:
            raise ScenarioError("noise.covariance needs one entry per vehicle")


@dataclass
class Telemetry:
    """Per-sample record of a run; row ``n`` is sample ``k = n``."""

    dt: float
    m: int
    k: list = field(default_factory=list)
    x: list = field(default_factory=list)
    u: list = field(default_factory=list)
    du: list = field(default_factory=list)
    x_ref: list = field(default_factory=list)
    headways: list = field(default_factory=list)
    human_mask: list = field(default_factory=list)
    active: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    status: list = field(default_factory=list)
    fallback: list = field(default_factory=list)
    predicted_next: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.k)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.k, dtype=float) * self.dt

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return self.array("x")[:, : self.m]

    @property
    def velocities(self) -> np.ndarray:
        return self.array("x")[:, self.m : 2 * self.m]

    @property
    def accelerations(self) -> np.ndarray:
        return self.array("x")[:, 2 * self.m :]

    @property
    def gaps(self) -> np.ndarray:
        p = self.positions
        return p[:, :-1] - p[:, 1:]


def initial_conditions(scenario: Scenario) -> PlatoonState:
    """Initial platoon state; defaults to rest with ``d_min + 10`` m spacing."""
    m = scenario.m
    spec = scenario.constraints
    init = scenario.initial
    if init is None:
        positions = -np.arange(m) * (spec.d_min + 10.0)
        velocities = np.zeros(m)
        accelerations = np.zeros(m)
    else:
        positions = np.asarray(init.positions, dtype=float)
        velocities = np.zeros(m) if init.velocities is None else np.asarray(init.velocities, dtype=float)
        accelerations = np.zeros(m) if init.accelerations is None else np.asarray(init.accelerations, dtype=float)
        for name, arr in (("positions", positions), ("velocities", velocities),
                          ("accelerations", accelerations)):
            if arr.shape != (m,):
                raise ScenarioError(f"initial.{name}: expected {m} entries")
        gaps = positions[:-1] - positions[1:]
        if np.any(gaps < spec.d_min):
            i = int(np.flatnonzero(gaps < spec.d_min)[0])
            raise ScenarioError(
                f"initial.positions: gap between vehicles {i + 1} and {i + 2} is "
                f"{gaps[i]:.3f} m, below d_min={spec.d_min}")
    return PlatoonState(np.concatenate([positions, velocities, accelerations]), 0)


def target_velocity(profile, t: float) -> float:
    """Last profile velocity whose time is <= ``t``; the first entry before that."""
    target = profile[0][1]
    for time, v in profile:
        if time <= t + 1e-9:
            target = v
    return float(target)


def human_control(vehicle, x_i, u_prev: float, v_target: float, spec: ConstraintSpec,
                  gain: float) -> float:
    """Scripted driver: proportional velocity tracking within vehicle and speed limits."""
    _, v, a = x_i
    u = gain * (v_target - v)
    lo, hi = spec.a_min, spec.a_max
    # keep the next-sample velocity inside [v_min, v_max]
    a12, b1 = vehicle.a_mat[1, 2], vehicle.b_vec[1]
    lo = max(lo, (spec.v_min - v - a12 * a) / b1)
    hi = min(hi, (spec.v_max - v - a12 * a) / b1)
    if lo > hi:
        return float(np.clip(u, spec.a_min, spec.a_max))
    return float(np.clip(u, lo, hi))


def run_scenario(scenario: Scenario, controller_factory=PlatoonController) -> Telemetry:
    """Simulate the closed loop for ``scenario.duration`` seconds."""
    scenario.validate()
    model = build_platoon_model(scenario.vehicles, scenario.dt)
    config = ControllerConfig(
        scenario.weights, scenario.constraints, scenario.horizon,
        ReferenceConfig(scenario.v_d, scenario.k_m, scenario.dt))
    x = initial_conditions(scenario)
    ctrl = controller_factory(model, config, x)
    rng = np.random.default_rng(scenario.noise.seed) if scenario.noise else None
    noise_std = (np.sqrt(np.asarray(scenario.noise.covariance, dtype=float))
                 if scenario.noise else None)

    by_sample: dict = {}
    for e in scenario.events:
        by_sample.setdefault(scenario.sample_of(e.time), []).append(e)
    profiles: dict = {}
    tel = Telemetry(scenario.dt, scenario.m)
    m = scenario.m
    for k in range(scenario.steps + 1):
        t = k * scenario.dt
        for e in by_sample.get(k, ()):
            i = e.vehicle - 1
            if e.kind == SET_HEADWAY:
                ctrl.set_headway(i, e.headway)
            elif e.kind == TAKEOVER:
                ctrl.handle_takeover(i, x, k)
                profiles[i] = e.profile
            else:
                ctrl.handle_release(i, x, k)
                profiles.pop(i, None)
            log.info("t=%.1f s: %s vehicle %d", t, e.kind, e.vehicle)
        try:
            res = ctrl.control_step(x, k)
        except Exception as exc:
            raise RuntimeError(f"controller failed at step {k}: {exc}") from exc
        u_prev = ctrl.state.u_prev
        u = res.u_applied.copy()
        du = res.delta_u.copy()
        for i, profile in profiles.items():
            u[i] = human_control(model.vehicle(i), x.vehicle(i), u_prev[i],
                                 target_velocity(profile, t), scenario.constraints,
                                 scenario.human_gain)
            du[i] = u[i] - u_prev[i]
        tel.k.append(k)
        tel.x.append(x.x.copy())
        tel.u.append(u)
        tel.du.append(du)
        tel.x_ref.append(ctrl.reference(k))
        tel.headways.append(ctrl.state.headways.copy())
        tel.human_mask.append(tuple(ctrl.state.switch.human_mask))
        tel.active.append(res.diagnostics.active_constraints)
        tel.iterations.append(res.diagnostics.iterations)
        tel.status.append(res.diagnostics.status)
        tel.fallback.append(res.diagnostics.fallback)
        tel.predicted_next.append(res.diagnostics.predicted_next
                                  if res.diagnostics.predicted_next is not None
                                  else np.full(3 * m, np.nan))
        if k == scenario.steps:
            break
        w = None
        if rng is not None:
            w = np.zeros(3 * m)
            w[2 * m :] = rng.standard_normal(m) * noise_std
        x, _ = step_platoon(model, x, u_prev, du, w)
        ctrl.observe_applied(u)
    return tel
