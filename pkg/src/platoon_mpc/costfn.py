"""Finite-horizon platoon cost, its condensed QP form and stacked state constraints."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PlatoonModel, PredictionMatrices
from .errors import InvalidParameterError
from .qp import QpProblem, solve_dare


@dataclass(frozen=True)
class CostWeights:
    q1: float = 1.0
    q2: float = 1.0
    q3: float = 1.0
    q4: float = 1.0
    r: float = 2.0

    def __post_init__(self):
        for name in ("q1", "q2", "q3", "q4", "r"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"weight {name} must be >= 0")
        if self.q2 <= 0:
            raise InvalidParameterError("q2 must be positive")
        if self.r <= 0:
            raise InvalidParameterError("r must be positive")


@dataclass(frozen=True)
class ConstraintSpec:
    d_min: float = 2.0
    d_max: float = 130.0
    v_min: float = 0.0
    v_max: float = 27.8
    a_min: float = -6.0
    a_max: float = 3.0

    def __post_init__(self):
        for lo, hi in (("d_min", "d_max"), ("v_min", "v_max"), ("a_min", "a_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise InvalidParameterError(f"{lo} must be below {hi}")


def toeplitz_relative(m: int) -> np.ndarray:
    """Symmetric tridiagonal matrix with 2 on the diagonal and -1 off it."""
    return 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)


def stage_penalty(weights: CostWeights, headways) -> np.ndarray:
    """Stage weight ``Q`` on the stacked error ``[xi; zeta; psi]``."""
    h = np.asarray(headways, dtype=float).reshape(-1)
    if np.any(h < 0):
        raise InvalidParameterError("headways must be >= 0")
    m = h.size
    t_h = np.diag(h) - np.diag(h[1:], k=1)
    q = np.zeros((3 * m, 3 * m))
    q[:m, :m] = weights.q1 * toeplitz_relative(m) + weights.q2 * np.eye(m)
    q[:m, m : 2 * m] = weights.q1 * t_h
    q[m : 2 * m, :m] = weights.q1 * t_h.T
    q[m : 2 * m, m : 2 * m] = weights.q1 * np.diag(h * h) + weights.q3 * np.eye(m)
    q[2 * m :, 2 * m :] = weights.q4 * np.eye(m)
    return q


def cost_sum_form(xi, zeta, psi, delta_u, weights: CostWeights, headways, terminal) -> float:
    """Literal double-sum cost.

    ``xi``, ``zeta``, ``psi`` hold per-stage position, velocity and
    acceleration errors for stages ``0 .. N`` (shape ``(N+1, M)``); the last
    stage enters only through ``terminal``. ``delta_u`` has shape ``(N, M)``.
    Virtual vehicles 0 and M+1 have zero error.
    """
    xi, zeta, psi = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (xi, zeta, psi))
    delta_u = np.atleast_2d(np.asarray(delta_u, dtype=float))
    h = np.asarray(headways, dtype=float).reshape(-1)
    n_stages, m = xi.shape
    horizon = n_stages - 1
    if zeta.shape != xi.shape or psi.shape != xi.shape or delta_u.shape != (horizon, m) or h.size != m:
        raise InvalidParameterError("inconsistent error/control dimensions")
    total = 0.0
    for j in range(horizon):
        for i in range(1, m + 2):
            xi_i = xi[j, i - 1] if i <= m else 0.0
            xi_prev = xi[j, i - 2] if i >= 2 else 0.0
            zeta_i = zeta[j, i - 1] if i <= m else 0.0
            h_i = h[i - 1] if i <= m else 0.0
            eta = xi_i - xi_prev + h_i * zeta_i
            total += weights.q1 * eta * eta
        for i in range(m):
            total += (weights.q2 * xi[j, i] ** 2 + weights.q3 * zeta[j, i] ** 2
                      + weights.q4 * psi[j, i] ** 2 + weights.r * delta_u[j, i] ** 2)
    e_n = np.concatenate([xi[horizon], zeta[horizon], psi[horizon]])
    return float(total + e_n @ np.asarray(terminal, dtype=float) @ e_n)


def cost_matrix_form(errors, delta_u, q_mat, terminal, r: float) -> float:
    """Quadratic-form cost over stacked error rows ``errors`` (shape ``(N+1, 3M)``)."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    delta_u = np.atleast_2d(np.asarray(delta_u, dtype=float))
    horizon = errors.shape[0] - 1
    stage = sum(e @ q_mat @ e for e in errors[:horizon])
    return float(stage + r * np.sum(delta_u * delta_u) + errors[horizon] @ terminal @ errors[horizon])


def terminal_cost(model: PlatoonModel, q_final, r_weight: float):
    """Terminal weight from the Riccati equation of ``(A_M, B_M, Q, r I)``."""
    r_mat = r_weight * np.eye(model.m) if np.isscalar(r_weight) else np.asarray(r_weight)
    return solve_dare(model.a_m, model.b_m, q_final, r_mat).p_mat


def controlled_columns(human_mask, horizon: int) -> np.ndarray:
    """Indices of stacked ``dU`` entries that belong to platoon-controlled vehicles."""
    mask = np.asarray(human_mask, dtype=bool)
    m = mask.size
    return np.array([s * m + i for s in range(horizon) for i in range(m) if not mask[i]], dtype=int)


def _human_columns(human_mask, horizon: int) -> np.ndarray:
    mask = np.asarray(human_mask, dtype=bool)
    m = mask.size
    return np.array([s * m + i for s in range(horizon) for i in range(m) if mask[i]], dtype=int)


def free_response(pred: PredictionMatrices, x_k, u_prev, human_mask=None, human_pred=None) -> np.ndarray:
    """Predicted states with all controlled ``dU`` set to zero.

    ``human_pred`` is the stacked ``(N*M,)`` human change-in-control
    prediction (controlled entries are ignored) or ``(N, M)``.
    """
    x_k = np.asarray(getattr(x_k, "x", x_k), dtype=float)
    out = pred.phi @ x_k + pred.lam @ np.asarray(u_prev, dtype=float)
    if human_mask is not None and np.any(human_mask) and human_pred is not None:
        cols = _human_columns(human_mask, pred.horizon)
        out = out + pred.gamma[:, cols] @ np.asarray(human_pred, dtype=float).reshape(-1)[cols]
    return out


def _omega_blocks(q_mat, terminal, horizon: int):
    return [q_mat] * (horizon - 1) + [np.asarray(terminal, dtype=float)]


def condense(pred: PredictionMatrices, x_k, u_prev, refs, weights: CostWeights, headways,
             terminal, human_mask=None, human_pred=None) -> QpProblem:
    """Condensed QP in the controlled change-in-control moves.

    The stacked prediction covers samples ``k+1 .. k+N``: stages ``1 .. N-1``
    are weighted by the stage penalty and sample ``k+N`` by ``terminal``. The
    stage at ``k`` does not depend on the decision and is dropped together
    with every other constant. Columns of human-driven vehicles are removed,
    so ``hessian`` is positive definite. Returned in ``0.5 z'Hz + f'z`` form.
    """
    horizon = pred.horizon
    nx = pred.phi.shape[1]
    m = nx // 3
    if human_mask is None:
        human_mask = np.zeros(m, dtype=bool)
    cols = controlled_columns(human_mask, horizon)
    if cols.size == 0:
        raise InvalidParameterError("no platoon-controlled vehicle: empty decision vector")
    refs = np.asarray(refs, dtype=float).reshape(-1)
    if refs.size != nx * horizon:
        raise InvalidParameterError(f"references must have length {nx * horizon}")
    q_mat = stage_penalty(weights, headways)
    # contiguous so the BLAS reduction order matches the full matrix
    gamma_c = np.ascontiguousarray(pred.gamma[:, cols])
    residual = free_response(pred, x_k, u_prev, human_mask, human_pred) - refs
    omega_gamma = np.empty_like(gamma_c)
    omega_res = np.empty_like(residual)
    for j, block in enumerate(_omega_blocks(q_mat, terminal, horizon)):
        rows = slice(j * nx, (j + 1) * nx)
        omega_gamma[rows] = block @ gamma_c[rows]
        omega_res[rows] = block @ residual[rows]
    hess = gamma_c.T @ omega_gamma + weights.r * np.eye(cols.size)
    hess = 2.0 * 0.5 * (hess + hess.T)
    linear = 2.0 * gamma_c.T @ omega_res
    return QpProblem(hess, linear)


def stage_constraint_matrix(spec: ConstraintSpec, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-stage ``(G, g)`` with ``G x + g <= 0``.

    Row order: d_min, d_max (M-1 rows each), v_min, v_max, a_min, a_max (M each).
    """
    t = -np.eye(m - 1, m) + np.eye(m - 1, m, k=1)
    z_d = np.zeros((m - 1, m))
    z = np.zeros((m, m))
    eye = np.eye(m)
    g_mat = np.block([
        [t, z_d, z_d],
        [-t, z_d, z_d],
        [z, -eye, z],
        [z, eye, z],
        [z, z, -eye],
        [z, z, eye],
    ])
    g_vec = np.concatenate([
        np.full(m - 1, spec.d_min), np.full(m - 1, -spec.d_max),
        np.full(m, spec.v_min), np.full(m, -spec.v_max),
        np.full(m, spec.a_min), np.full(m, -spec.a_max),
    ])
    return g_mat, g_vec


def build_constraints(spec: ConstraintSpec, pred: PredictionMatrices, x_k, u_prev,
                      human_mask=None, human_pred=None):
    """Stacked state constraints as ``c_mat @ z <= c_vec`` in the controlled moves."""
    horizon = pred.horizon
    nx = pred.phi.shape[1]
    m = nx // 3
    if human_mask is None:
        human_mask = np.zeros(m, dtype=bool)
    g_mat, g_vec = stage_constraint_matrix(spec, m)
    cols = controlled_columns(human_mask, horizon)
    free = free_response(pred, x_k, u_prev, human_mask, human_pred).reshape(horizon, nx)
    gamma_c = np.ascontiguousarray(pred.gamma[:, cols]).reshape(horizon, nx, cols.size)
    c_mat = np.concatenate([g_mat @ gamma_c[j] for j in range(horizon)])
    c_vec = np.concatenate([-(g_mat @ free[j]) - g_vec for j in range(horizon)])
    return c_mat, c_vec
