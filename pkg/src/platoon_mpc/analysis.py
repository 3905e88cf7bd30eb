"""Post-run checks on telemetry and the fixed-layout timeseries table."""
from __future__ import annotations

import csv
import io

import numpy as np

from .reference import constant_distances
from .sim import Scenario, Telemetry

TOL = 1e-6


def timeseries_columns(m: int) -> list:
    """Column order of ``timeseries.csv``.

    ``t``; positions ``p1..pM``; velocities ``v1..vM``; accelerations
    ``a1..aM``; applied controls ``u1..uM``; gaps ``gap1_2..gap(M-1)_M``
    (front-bumper distance ``p_(i-1) - p_i``); leader reference velocity
    ``v_ref`` and acceleration ``a_ref``.
    """
    cols = ["t"]
    for name in ("p", "v", "a", "u"):
        cols += [f"{name}{i}" for i in range(1, m + 1)]
    cols += [f"gap{i}_{i + 1}" for i in range(1, m)]
    return cols + ["v_ref", "a_ref"]


def timeseries_rows(tel: Telemetry) -> np.ndarray:
    m = tel.m
    if len(tel) == 0:
        return np.zeros((0, len(timeseries_columns(m))))
    x_ref = tel.array("x_ref")
    return np.column_stack([
        tel.t, tel.positions, tel.velocities, tel.accelerations, tel.array("u"),
        tel.gaps, x_ref[:, m], x_ref[:, 2 * m],
    ])


def timeseries_csv(tel: Telemetry) -> str:
    """CSV text with ``repr`` floats, so identical runs give identical bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(timeseries_columns(tel.m))
    for row in timeseries_rows(tel):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def controlled_mask(tel: Telemetry) -> np.ndarray:
    """``True`` where a vehicle is under platoon control at that sample."""
    if len(tel) == 0:
        return np.zeros((0, tel.m), dtype=bool)
    return ~np.asarray(tel.human_mask, dtype=bool)


def constraint_violations(tel: Telemetry, scenario: Scenario, tol: float = TOL) -> dict:
    """Count samples breaking a limit on a platoon-controlled vehicle.

    A gap counts when either vehicle of the pair is platoon-controlled.
    """
    spec = scenario.constraints
    ctrl = controlled_mask(tel)
    if len(tel) == 0:
        return {k: 0 for k in ("d_min", "d_max", "v_min", "v_max", "a_min", "a_max")}
    v, a, g = tel.velocities, tel.accelerations, tel.gaps
    pair = ctrl[:, :-1] | ctrl[:, 1:]
    return {
        "d_min": int(np.sum(pair & (g < spec.d_min - tol))),
        "d_max": int(np.sum(pair & (g > spec.d_max + tol))),
        "v_min": int(np.sum(ctrl & (v < spec.v_min - tol))),
        "v_max": int(np.sum(ctrl & (v > spec.v_max + tol))),
        "a_min": int(np.sum(ctrl & (a < spec.a_min - tol))),
        "a_max": int(np.sum(ctrl & (a > spec.a_max + tol))),
    }


def desired_gaps(scenario: Scenario, headways, v: float) -> np.ndarray:
    """Steady-state gaps ``d_i + h_i v`` for vehicles 2..M."""
    d = constant_distances(scenario.vehicles)
    return (d + np.asarray(headways, dtype=float) * v)[1:]


def spacing_error(tel: Telemetry, scenario: Scenario, window) -> float:
    """Largest relative gap error against ``d_i + h_i v_d`` over samples ``window``."""
    rows = np.asarray(window, dtype=int)
    if rows.size == 0:
        return 0.0
    hw = tel.array("headways")[rows]
    target = np.array([desired_gaps(scenario, h, scenario.v_d) for h in hw])
    return float(np.max(np.abs(tel.gaps[rows] - target) / target))


def summarize(tel: Telemetry, scenario: Scenario) -> dict:
    """Invariant and solver statistics for ``summary.json``."""
    viol = constraint_violations(tel, scenario)
    statuses: dict = {}
    for s in tel.status:
        statuses[s] = statuses.get(s, 0) + 1
    out = {
        "samples": len(tel),
        "violations": viol,
        "total_violations": int(sum(viol.values())),
        "solver_status": dict(sorted(statuses.items())),
        "fallback_steps": int(sum(tel.fallback)),
        "max_qp_iterations": int(max(tel.iterations, default=0)),
    }
    if len(tel):
        out["min_gap"] = float(tel.gaps.min()) if tel.m > 1 else None
        out["velocity_range"] = [float(tel.velocities.min()), float(tel.velocities.max())]
        out["acceleration_range"] = [float(tel.accelerations.min()), float(tel.accelerations.max())]
    return out
