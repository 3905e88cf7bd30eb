"""Independent oracles and the sampled self-check suites behind ``validate``.

Each ``check_*`` function draws its instances from a seeded generator and
returns a :class:`CheckResult`; sizes are parameters so the command line
can run quick versions while the test suite runs the full ones.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import itertools
import time

import numpy as np
import scipy.linalg as sla

from . import costfn
from .controller import PlatoonController
from .costfn import ConstraintSpec, CostWeights
from .dynamics import VehicleParams, build_platoon_model, discretize_vehicle
from .errors import InfeasibleError
from .humanmodel import predict_human, rollout
from .qp import QpProblem, solve_dare, dare_residual, solve_qp

STUDY_TAUS = (0.5, 0.2, 0.3, 0.6, 0.4)
STUDY_STANDSTILL = (6.0, 6.0, 5.0, 8.0, 7.0)
STUDY_HEADWAYS = (1.0, 1.3, 1.5, 0.8, 1.2)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    metric: float
    tolerance: float
    instances: int
    seconds: float
    detail: str = ""


def study_vehicles() -> tuple:
    return tuple(VehicleParams(t, 2.5, r, h)
                 for t, r, h in zip(STUDY_TAUS, STUDY_STANDSTILL, STUDY_HEADWAYS))


# oracles ---------------------------------------------------------------------

def expm_discretization(tau: float, dt: float):
    """Zero-order-hold ``(A, B)`` from the matrix exponential of the augmented system."""
    aug = np.zeros((4, 4))
    aug[0, 1] = 1.0
    aug[1, 2] = 1.0
    aug[2, 2] = -1.0 / tau
    aug[2, 3] = 1.0 / tau
    e = sla.expm(aug * dt)
    return e[:3, :3], e[:3, 3]


def brute_force_qp(problem: QpProblem, feas_tol: float = 1e-9):
    """Exact QP optimum by enumerating every candidate active set.

    Each subset of rows (at most ``n`` of them) is solved as an equality
    constrained problem through the full KKT matrix; the best primal
    feasible candidate is the optimum because ``H`` is positive definite.
    Returns ``None`` when no candidate is feasible.
    """
    h, f = problem.hessian, problem.linear
    c_mat, c_vec = problem.c_mat, problem.c_vec
    n, m = problem.n, problem.m_c
    best, best_obj = None, np.inf
    for size in range(0, min(n, m) + 1):
        for rows in itertools.combinations(range(m), size):
            rows = list(rows)
            cs = c_mat[rows]
            if size and np.linalg.matrix_rank(cs) < size:
                continue
            kkt = np.block([[h, cs.T], [cs, np.zeros((size, size))]])
            sol = np.linalg.solve(kkt, np.concatenate([-f, c_vec[rows]]))
            z = sol[:n]
            if m and np.max(c_mat @ z - c_vec) > feas_tol * (1.0 + np.abs(c_vec).max()):
                continue
            obj = 0.5 * z @ h @ z + f @ z
            if obj < best_obj:
                best, best_obj = z, obj
    return None if best is None else (best, float(best_obj))


def random_qp(rng: np.random.Generator, n: int, m_c: int) -> QpProblem:
    """Random strictly convex QP with a known feasible point.

    Roughly a third of the rows pass exactly through that point, which
    produces degenerate vertices.
    """
    g = rng.standard_normal((n, n))
    h = g @ g.T + 0.1 * np.eye(n)
    f = 3.0 * rng.standard_normal(n)
    c_mat = rng.standard_normal((m_c, n))
    z_feas = rng.standard_normal(n)
    slack = np.where(rng.random(m_c) < 0.3, 0.0, rng.exponential(1.0, m_c))
    return QpProblem(h, f, c_mat, c_mat @ z_feas + slack)


def nominal_condense(model, pred, x, u_prev, refs, weights: CostWeights, headways, terminal,
                     spec: ConstraintSpec) -> QpProblem:
    """Condensed QP with no human-model terms at all (every vehicle controlled)."""
    nx, horizon = 3 * model.m, pred.horizon
    q_mat = costfn.stage_penalty(weights, headways)
    gamma = np.ascontiguousarray(pred.gamma)
    free = pred.phi @ x + pred.lam @ u_prev
    residual = free - refs
    blocks = [q_mat] * (horizon - 1) + [terminal]
    omega_gamma = np.empty_like(gamma)
    omega_res = np.empty_like(residual)
    for j, block in enumerate(blocks):
        rows = slice(j * nx, (j + 1) * nx)
        omega_gamma[rows] = block @ gamma[rows]
        omega_res[rows] = block @ residual[rows]
    hess = gamma.T @ omega_gamma + weights.r * np.eye(gamma.shape[1])
    hess = 2.0 * 0.5 * (hess + hess.T)
    g_mat, g_vec = costfn.stage_constraint_matrix(spec, model.m)
    free_st = free.reshape(horizon, nx)
    gamma_st = gamma.reshape(horizon, nx, gamma.shape[1])
    c_mat = np.concatenate([g_mat @ gamma_st[j] for j in range(horizon)])
    c_vec = np.concatenate([-(g_mat @ free_st[j]) - g_vec for j in range(horizon)])
    return QpProblem(hess, 2.0 * gamma.T @ omega_res, c_mat, c_vec)


class NominalController(PlatoonController):
    """Controller whose QP assembly has no switch or human-prediction code path."""

    def assemble(self, x, k):
        from .reference import reference_window

        cfg = self.config
        refs = reference_window(cfg.reference, self.state.reference_state, self.model.vehicles,
                                k, cfg.horizon, self.state.headways)
        problem = nominal_condense(self.model, self.pred, x.x, self.state.u_prev, refs,
                                   cfg.weights, self.state.headways, self.terminal_weight(),
                                   cfg.constraints)
        return problem, np.zeros(cfg.horizon * self.model.m), 0, False


# checks ----------------------------------------------------------------------

def _result(name, metric, tol, count, t0, detail="", passed=None) -> CheckResult:
    ok = bool(metric <= tol) if passed is None else bool(passed)
    return CheckResult(name, ok, float(metric), tol, count, time.perf_counter() - t0, detail)


def check_cost_equivalence(rng: np.random.Generator, count: int = 1000) -> CheckResult:
    """Sum-form cost against the quadratic form with the stage penalty matrix."""
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(count):
        m, horizon = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        q = rng.uniform(0.0, 5.0, 5)
        weights = CostWeights(q[0], q[1] + 1e-3, q[2], q[3], q[4] + 1e-3)
        h = rng.uniform(0.0, 3.0, m)
        xi, zeta, psi = (rng.standard_normal((horizon + 1, m)) * 5.0 for _ in range(3))
        du = rng.standard_normal((horizon, m))
        g = rng.standard_normal((3 * m, 3 * m))
        terminal = g @ g.T
        j_sum = costfn.cost_sum_form(xi, zeta, psi, du, weights, h, terminal)
        errors = np.hstack([xi, zeta, psi])
        j_mat = costfn.cost_matrix_form(errors, du, costfn.stage_penalty(weights, h), terminal, weights.r)
        worst = max(worst, abs(j_sum - j_mat) / (1.0 + abs(j_sum)))
    return _result("cost sum vs matrix form", worst, 1e-9, count, t0)


def check_discretization(taus=(0.05, 0.2, 0.5, 1.0, 3.0), dts=(0.01, 0.1, 0.5, 1.0, 2.0)) -> CheckResult:
    """Closed-form ZOH discretization against the matrix exponential."""
    t0 = time.perf_counter()
    worst = 0.0
    for tau, dt in itertools.product(taus, dts):
        disc = discretize_vehicle(tau, dt)
        a_ref, b_ref = expm_discretization(tau, dt)
        worst = max(worst, np.abs(disc.a_mat - a_ref).max(), np.abs(disc.b_vec - b_ref).max())
    return _result("discretization vs expm", worst, 1e-9, len(taus) * len(dts), t0)


def check_qp_oracle(rng: np.random.Generator, count: int = 500, max_n: int = 6,
                    max_m: int = 10) -> CheckResult:
    """Active-set solver against exhaustive active-set enumeration."""
    t0 = time.perf_counter()
    worst_z, worst_obj, failures = 0.0, 0.0, 0
    for _ in range(count):
        n, m_c = int(rng.integers(1, max_n + 1)), int(rng.integers(0, max_m + 1))
        problem = random_qp(rng, n, m_c)
        sol = solve_qp(problem)
        oracle = brute_force_qp(problem)
        if oracle is None or not sol.optimal:
            failures += 1
            continue
        z_ref, obj_ref = oracle
        worst_z = max(worst_z, np.linalg.norm(sol.z - z_ref))
        worst_obj = max(worst_obj, abs(sol.objective - obj_ref))
    ok = failures == 0 and worst_z <= 1e-7 and worst_obj <= 1e-9
    detail = f"max |z - z*| = {worst_z:.2e}, max objective gap = {worst_obj:.2e}, failures = {failures}"
    return _result("QP vs enumeration oracle", worst_z, 1e-7, count, t0, detail, ok)


def scalar_dare_root(a: float, b: float, q: float, r: float) -> float:
    """Positive root of the scalar Riccati equation."""
    # b^2 p^2 + (r - a^2 r - q b^2) p - q r = 0
    lin = r - a * a * r - q * b * b
    return (-lin + np.sqrt(lin * lin + 4.0 * b * b * q * r)) / (2.0 * b * b)


def check_dare() -> CheckResult:
    """Study-configuration DARE residual and the scalar closed-form root."""
    t0 = time.perf_counter()
    vehicles = study_vehicles()
    model = build_platoon_model(vehicles, 0.5)
    q = costfn.stage_penalty(CostWeights(), STUDY_HEADWAYS)
    sol = solve_dare(model.a_m, model.b_m, q, 2.0 * np.eye(model.m))
    resid = dare_residual(model.a_m, model.b_m, q, 2.0 * np.eye(model.m), sol.p_mat)
    p_scalar = float(solve_dare(0.5, 1.0, 1.0, 1.0).p_mat[0, 0])
    err = abs(p_scalar - scalar_dare_root(0.5, 1.0, 1.0, 1.0))
    ok = resid <= 1e-8 and err <= 1e-10
    return _result("DARE residual", resid, 1e-8, 2, t0,
                   f"study residual {resid:.2e}, scalar error {err:.2e}", ok)


def _rollout_feasible(states, spec: ConstraintSpec, tol: float) -> bool:
    v, a = states[:, 1], states[:, 2]
    return bool(np.all(v >= spec.v_min - tol) and np.all(v <= spec.v_max + tol)
                and np.all(a >= spec.a_min - tol) and np.all(a <= spec.a_max + tol))


def check_human_predictor(rng: np.random.Generator, count: int = 500, horizon: int = 20) -> CheckResult:
    """Zero prediction iff holding the control is feasible; predictions always feasible."""
    t0 = time.perf_counter()
    spec = ConstraintSpec()
    tol = 1e-8
    mismatches, infeasible_pred, no_solution = 0, 0, 0
    for _ in range(count):
        veh = discretize_vehicle(float(rng.uniform(0.1, 1.0)), 0.5)
        v = float(rng.choice([rng.uniform(0.0, spec.v_max), spec.v_min, spec.v_max],
                             p=[0.8, 0.1, 0.1]))
        a = float(rng.uniform(-3.0, 2.0))
        u_prev = float(rng.uniform(spec.a_min, spec.a_max))
        x = np.array([0.0, v, a])
        hold_ok = _rollout_feasible(rollout(veh, x, u_prev, np.zeros(horizon)), spec, tol)
        try:
            pred = predict_human(veh, x, u_prev, spec, horizon)
        except InfeasibleError:
            no_solution += 1
            mismatches += int(hold_ok)
            continue
        is_zero = bool(np.max(np.abs(pred.delta_u_seq)) <= 1e-12)
        mismatches += int(is_zero != hold_ok)
        infeasible_pred += int(not _rollout_feasible(rollout(veh, x, u_prev, pred.delta_u_seq), spec, tol))
    ok = mismatches == 0 and infeasible_pred == 0
    detail = (f"iff mismatches = {mismatches}, infeasible predictions = {infeasible_pred}, "
              f"no feasible sequence = {no_solution}")
    return _result("human predictor", mismatches + infeasible_pred, 0, count, t0, detail, ok)


def check_switch_reduction(duration: float = 60.0) -> CheckResult:
    """All-platoon run against the controller without human-model code."""
    from .scenario_io import bundled_scenario
    from .sim import SET_HEADWAY, run_scenario

    t0 = time.perf_counter()
    base = bundled_scenario("paper_study")
    events = tuple(e for e in base.events if e.kind == SET_HEADWAY and e.time <= duration)
    scenario = replace(base, duration=duration, events=events)
    a = run_scenario(scenario)
    b = run_scenario(scenario, controller_factory=NominalController)
    worst = 0.0
    for name in ("x", "u", "du"):
        worst = max(worst, float(np.max(np.abs(a.array(name) - b.array(name)))))
    return _result("switch reduction", worst, 1e-12, len(a), t0)


def run_suite(seed: int = 0, quick: bool = True) -> list:
    """All checks; ``quick`` shrinks the sampled instance counts."""
    rng = np.random.default_rng(seed)
    scale = 0.2 if quick else 1.0
    return [
        check_cost_equivalence(rng, int(1000 * scale)),
        check_discretization(),
        check_qp_oracle(rng, int(500 * scale)),
        check_dare(),
        check_human_predictor(rng, int(500 * scale)),
        check_switch_reduction(40.0 if quick else 100.0),
    ]
