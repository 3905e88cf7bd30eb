"""Receding-horizon platoon controller with human takeover handling."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from . import costfn
from .costfn import ConstraintSpec, CostWeights
from .dynamics import PlatoonModel, PlatoonState, build_prediction
from .errors import InfeasibleError, InvalidParameterError
from .humanmodel import predict_human
from .qp import ActiveSetSolver, QpProblem
from .reference import ReferenceConfig, init_reference, reference_at, reference_window, reset_on_takeover

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwitchState:
    """Which vehicles are currently human-driven (``True``)."""

    human_mask: tuple
    changed_at: int = 0

    @classmethod
    def all_platoon(cls, m: int) -> "SwitchState":
        return cls(tuple([False] * m), 0)

    @property
    def alpha(self) -> np.ndarray:
        return np.diag([0.0 if h else 1.0 for h in self.human_mask])

    @property
    def any_human(self) -> bool:
        return any(self.human_mask)

    def with_vehicle(self, index: int, human: bool, k: int) -> "SwitchState":
        mask = list(self.human_mask)
        mask[index] = human
        return SwitchState(tuple(mask), k)


@dataclass(frozen=True)
class ControllerConfig:
    weights: CostWeights
    constraints: ConstraintSpec
    horizon: int
    reference: ReferenceConfig


@dataclass
class ControllerState:
    u_prev: np.ndarray
    reference_state: object
    headways: np.ndarray
    switch: SwitchState
    terminal: np.ndarray | None = None
    terminal_key: tuple | None = None
    warm_z: np.ndarray | None = None
    warm_active: list | None = None
    warm_key: tuple | None = None


@dataclass
class StepDiagnostics:
    status: str
    iterations: int
    active_constraints: int
    fallback: bool = False
    human_fallback: bool = False
    dropped_rows: int = 0
    predicted_next: np.ndarray | None = None
    objective: float = float("nan")


@dataclass
class ControlResult:
    delta_u: np.ndarray
    u_applied: np.ndarray
    diagnostics: StepDiagnostics
    plan: np.ndarray = field(default_factory=lambda: np.zeros(0))


class PlatoonController:
    """Centralized MPC for one platoon.

    Stateful across samples: call :meth:`control_step` once per sample and
    :meth:`observe_applied` with the control that was actually applied.
    """

    def __init__(self, model: PlatoonModel, config: ControllerConfig, x0: PlatoonState,
                 headways=None, solver: ActiveSetSolver | None = None):
        self.model = model
        self.config = config
        self.pred = build_prediction(model, config.horizon)
        self.solver = solver or ActiveSetSolver()
        vehicles = model.vehicles
        h = np.array([v.headway for v in vehicles] if headways is None else headways, dtype=float)
        self.state = ControllerState(
            u_prev=np.zeros(model.m),
            reference_state=init_reference(config.reference, x0, vehicles, h),
            headways=h,
            switch=SwitchState.all_platoon(model.m),
        )

    # bookkeeping -----------------------------------------------------------

    def set_headway(self, index: int, headway: float) -> None:
        if headway < 0:
            raise InvalidParameterError("headway must be >= 0")
        h = self.state.headways.copy()
        h[index] = headway
        self.state.headways = h

    def handle_takeover(self, index: int, x: PlatoonState, k: int) -> None:
        if self.state.switch.human_mask[index]:
            raise InvalidParameterError(f"vehicle {index + 1} is already human-driven")
        self.state.switch = self.state.switch.with_vehicle(index, True, k)
        self.state.reference_state = reset_on_takeover(
            self.config.reference, self.model.vehicles, k, index, x, self.state.headways)
        self._discard_warm_start()

    def handle_release(self, index: int, x: PlatoonState, k: int) -> None:
        if not self.state.switch.human_mask[index]:
            raise InvalidParameterError(f"vehicle {index + 1} is not human-driven")
        self.state.switch = self.state.switch.with_vehicle(index, False, k)
        self.state.reference_state = init_reference(
            self.config.reference, replace(x, k=k), self.model.vehicles, self.state.headways)
        self._discard_warm_start()

    def observe_applied(self, u_applied) -> None:
        u = np.asarray(u_applied, dtype=float).reshape(-1)
        if u.shape != (self.model.m,):
            raise InvalidParameterError(f"applied control must have length {self.model.m}")
        self.state.u_prev = u.copy()

    def _discard_warm_start(self) -> None:
        self.state.warm_z = None
        self.state.warm_active = None
        self.state.warm_key = None

    def terminal_weight(self) -> np.ndarray:
        key = tuple(self.state.headways.tolist())
        if self.state.terminal is None or self.state.terminal_key != key:
            q = costfn.stage_penalty(self.config.weights, self.state.headways)
            self.state.terminal = costfn.terminal_cost(self.model, q, self.config.weights.r)
            self.state.terminal_key = key
        return self.state.terminal

    def reference(self, k: int) -> np.ndarray:
        return reference_at(self.config.reference, self.state.reference_state,
                            self.model.vehicles, k, self.state.headways).x_star

    # solve -----------------------------------------------------------------

    def predict_humans(self, x: PlatoonState):
        """Stacked ``(N*M,)`` human-move prediction; zeros for platoon vehicles."""
        m, horizon = self.model.m, self.config.horizon
        out = np.zeros((horizon, m))
        fallback = False
        for i, human in enumerate(self.state.switch.human_mask):
            if not human:
                continue
            try:
                hp = predict_human(self.model.vehicle(i), x.vehicle(i), self.state.u_prev[i],
                                   self.config.constraints, horizon, self.config.weights.r,
                                   solver=ActiveSetSolver())
                out[:, i] = hp.delta_u_seq
            except (InfeasibleError, InvalidParameterError) as exc:
                # hold the previous human control over the horizon
                log.info("human prediction for vehicle %d unavailable: %s", i + 1, exc)
                fallback = True
        return out.reshape(-1), fallback

    def assemble(self, x: PlatoonState, k: int):
        """Build the QP for sample ``k``; returns ``(problem, human_pred, dropped_rows, human_fallback)``."""
        cfg = self.config
        mask = self.state.switch.human_mask
        refs = reference_window(cfg.reference, self.state.reference_state, self.model.vehicles,
                                k, cfg.horizon, self.state.headways)
        human_pred, human_fallback = (self.predict_humans(x) if any(mask)
                                      else (np.zeros(cfg.horizon * self.model.m), False))
        problem = costfn.condense(self.pred, x, self.state.u_prev, refs, cfg.weights,
                                  self.state.headways, self.terminal_weight(), mask, human_pred)
        c_mat, c_vec = costfn.build_constraints(cfg.constraints, self.pred, x, self.state.u_prev,
                                                mask, human_pred)
        # rows that no controlled move can influence only constrain human-driven states
        live = np.any(c_mat != 0.0, axis=1)
        dropped = int(np.count_nonzero(~live))
        problem = QpProblem(problem.hessian, problem.linear, c_mat[live], c_vec[live])
        return problem, human_pred, dropped, human_fallback

    def _warm_start(self, n: int, n_ctrl: int, key):
        st = self.state
        if st.warm_key != key or st.warm_z is None or st.warm_z.size != n:
            return None, None
        z0 = np.concatenate([st.warm_z[n_ctrl:], np.zeros(n_ctrl)])
        return z0, st.warm_active

    def control_step(self, x: PlatoonState, k: int | None = None) -> ControlResult:
        """Solve the MPC problem at sample ``k`` and return the first move.

        ``u_applied`` holds the previous control for human-driven vehicles;
        their actual control is injected by the caller and reported back
        through :meth:`observe_applied`.
        """
        k = x.k if k is None else k
        m = self.model.m
        if x.x.shape != (3 * m,):
            raise InvalidParameterError(f"state must have length {3 * m}")
        mask = np.array(self.state.switch.human_mask, dtype=bool)
        ctrl = np.flatnonzero(~mask)
        if ctrl.size == 0:
            diag = StepDiagnostics("no-controlled-vehicle", 0, 0)
            return ControlResult(np.zeros(m), self.state.u_prev.copy(), diag)

        if self.state.switch.any_human:
            self._anchor_on_human(x, k)
        problem, human_pred, dropped, human_fallback = self.assemble(x, k)
        key = (tuple(mask.tolist()), problem.m_c)
        z0, w0 = self._warm_start(problem.n, ctrl.size, key)
        sol = self.solver.solve(problem, warm_start=z0, active_set=None if w0 is None else w0)

        delta_u = np.zeros(m)
        fallback = not sol.optimal
        if sol.optimal:
            delta_u[ctrl] = sol.z[: ctrl.size]
            self.state.warm_z = sol.z
            self.state.warm_active = self._shift_active(sol.active_set, problem.m_c)
            self.state.warm_key = key
        else:
            log.warning("k=%d: platoon QP %s, applying braking fallback", k, sol.status)
            delta_u[ctrl] = self._braking_move(x, ctrl)
            self._discard_warm_start()
        u_applied = self.state.u_prev + delta_u
        predicted = self.model.a_m @ x.x + self.model.b_m @ (
            u_applied + np.where(mask, human_pred[:m], 0.0))
        diag = StepDiagnostics(sol.status, sol.iterations, len(sol.active_set), fallback,
                               human_fallback, dropped, predicted, sol.objective)
        return ControlResult(delta_u, u_applied, diag, sol.z)

    def _anchor_on_human(self, x: PlatoonState, k: int) -> None:
        # while a driver has control the ramp restarts from the foremost human vehicle
        lead = self.state.switch.human_mask.index(True)
        self.state.reference_state = reset_on_takeover(
            self.config.reference, self.model.vehicles, k, lead, x, self.state.headways)

    def _shift_active(self, active, m_c: int):
        rows_per_stage = m_c // self.config.horizon
        if rows_per_stage * self.config.horizon != m_c:
            return None
        return [i - rows_per_stage for i in active if i >= rows_per_stage]

    def _braking_move(self, x: PlatoonState, ctrl) -> np.ndarray:
        """Change in control that brakes as hard as a_min and v_min allow."""
        spec = self.config.constraints
        moves = []
        for i in ctrl:
            veh = self.model.vehicle(i)
            _, v, a = x.vehicle(i)
            # smallest u keeping the next-sample velocity >= v_min
            u_floor = (spec.v_min - v - veh.a_mat[1, 2] * a) / veh.b_vec[1]
            u = float(np.clip(max(spec.a_min, u_floor), spec.a_min, spec.a_max))
            moves.append(u - self.state.u_prev[i])
        return np.array(moves)
