"""Dense convex QP (primal active-set) and discrete algebraic Riccati solvers.

QPs are posed as ``min 0.5 z'Hz + f'z  s.t.  C z <= c``. Multipliers follow
the convention ``H z + f + C_W' mu = 0`` on the working set ``W``, so an
optimal point has ``mu >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .errors import InvalidParameterError, NumericalError

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    linear: np.ndarray
    c_mat: np.ndarray = None
    c_vec: np.ndarray = None

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        f = np.asarray(self.linear, dtype=float).reshape(-1)
        n = f.size
        if h.shape != (n, n):
            raise InvalidParameterError(f"hessian shape {h.shape} does not match n={n}")
        c_mat = np.zeros((0, n)) if self.c_mat is None else np.asarray(self.c_mat, dtype=float)
        c_vec = np.zeros(0) if self.c_vec is None else np.asarray(self.c_vec, dtype=float).reshape(-1)
        c_mat = c_mat.reshape(-1, n)
        if c_mat.shape[0] != c_vec.size:
            raise InvalidParameterError("constraint matrix and vector row counts differ")
        if not (np.all(np.isfinite(c_mat)) and np.all(np.isfinite(c_vec))):
            raise InvalidParameterError("constraint rows must be finite")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "linear", f)
        object.__setattr__(self, "c_mat", c_mat)
        object.__setattr__(self, "c_vec", c_vec)

    @property
    def n(self) -> int:
        return self.linear.size

    @property
    def m_c(self) -> int:
        return self.c_vec.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hessian @ z + self.linear @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    active_set: list
    iterations: int
    status: str
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class DareSolution:
    p_mat: np.ndarray
    residual: float
    iterations: int


class EqualityKktSolution(NamedTuple):
    z: np.ndarray
    multipliers: np.ndarray
    dropped: list


def _cholesky(h: np.ndarray, min_eig: float = 1e-10):
    if not np.allclose(h, h.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(h).max(initial=0.0))):
        raise InvalidParameterError("hessian is not symmetric")
    h = 0.5 * (h + h.T)
    if h.shape[0] and np.linalg.eigvalsh(h)[0] <= min_eig:
        raise InvalidParameterError("hessian is not positive definite")
    return sla.cholesky(h, lower=True)


def _independent_columns(y: np.ndarray, rtol: float = 1e-10) -> list:
    """Greedy left-to-right selection of linearly independent columns."""
    keep: list = []
    basis = np.zeros((y.shape[0], 0))
    for j in range(y.shape[1]):
        col = y[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0:
            continue
        resid = col - basis @ (basis.T @ col)
        resid = resid - basis @ (basis.T @ resid)
        rn = np.linalg.norm(resid)
        if rn > rtol * norm:
            keep.append(j)
            basis = np.column_stack([basis, resid / rn])
    return keep


def _kkt_from_factor(chol, f, c_eq, c_eq_vec) -> EqualityKktSolution:
    n = f.size
    w = sla.solve_triangular(chol, f, lower=True)
    m = c_eq.shape[0]
    if m == 0:
        z = -sla.solve_triangular(chol.T, w, lower=False)
        return EqualityKktSolution(z, np.zeros(0), [])
    y = sla.solve_triangular(chol, c_eq.T, lower=True)
    s = y.T @ y
    rhs = -(c_eq_vec + y.T @ w)
    mu = np.zeros(m)
    dropped: list = []
    try:
        s_chol = sla.cho_factor(s, lower=True)
        # cho_factor succeeds on some nearly singular matrices; verify conditioning
        if np.min(np.abs(np.diag(s_chol[0]))) ** 2 <= 1e-14 * max(1.0, np.max(np.diag(s))):
            raise np.linalg.LinAlgError
        mu = sla.cho_solve(s_chol, rhs)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        keep = _independent_columns(y)
        dropped = [j for j in range(m) if j not in keep]
        if keep:
            yk = y[:, keep]
            mu[keep] = np.linalg.solve(yk.T @ yk, rhs[keep])
    z = -sla.solve_triangular(chol.T, w + y @ mu, lower=False)
    assert z.shape == (n,)
    return EqualityKktSolution(z, mu, dropped)


def solve_equality_kkt(h, f, c_eq=None, c_eq_vec=None) -> EqualityKktSolution:
    """Solve ``min 0.5 z'Hz + f'z  s.t.  C z = c`` via Cholesky and Schur complement.

    Linearly dependent rows are dropped (the later of two dependent rows
    goes) and reported in ``dropped``; their multipliers are zero.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    n = f.size
    c_eq = np.zeros((0, n)) if c_eq is None else np.asarray(c_eq, dtype=float).reshape(-1, n)
    c_eq_vec = np.zeros(0) if c_eq_vec is None else np.asarray(c_eq_vec, dtype=float).reshape(-1)
    chol = _cholesky(np.asarray(h, dtype=float))
    return _kkt_from_factor(chol, f, c_eq, c_eq_vec)


@dataclass
class ActiveSetSolver:
    """Primal active-set QP solver with a phase-1 feasibility LP.

    One solve at a time per instance; the Cholesky factor of the last
    Hessian is kept as workspace and reused when the same matrix comes back.
    """

    tol_feas: float = 1e-8
    tol_kkt: float = 1e-6
    tol_step: float = 1e-12
    max_iter: int | None = None
    _h_cache: np.ndarray | None = field(default=None, repr=False)
    _chol_cache: np.ndarray | None = field(default=None, repr=False)

    def _factor(self, h: np.ndarray) -> np.ndarray:
        if self._h_cache is not None and self._h_cache.shape == h.shape and np.array_equal(self._h_cache, h):
            return self._chol_cache
        chol = _cholesky(h)
        self._h_cache = h.copy()
        self._chol_cache = chol
        return chol

    def _violation(self, problem: QpProblem, z) -> float:
        if problem.m_c == 0:
            return 0.0
        return float(np.max(problem.c_mat @ z - problem.c_vec, initial=-np.inf))

    def _phase_one(self, problem: QpProblem):
        """Minimize the largest (row-scaled) constraint violation with an LP."""
        c_mat, c_vec = problem.c_mat, problem.c_vec
        n = problem.n
        scale = np.maximum(1.0, np.linalg.norm(c_mat, axis=1))
        a_ub = np.hstack([c_mat, -scale[:, None]])
        cost = np.zeros(n + 1)
        cost[-1] = 1.0
        bounds = [(None, None)] * n + [(0.0, None)]
        res = linprog(cost, A_ub=a_ub, b_ub=c_vec, bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if res.status != 0 or res.x is None:
            return None, np.inf
        return res.x[:n], float(res.x[-1])

    def _start(self, problem: QpProblem, chol, warm_start, active_set):
        """Pick a feasible starting point and working set."""
        tol = self.tol_feas
        c_mat, c_vec = problem.c_mat, problem.c_vec
        if active_set:
            w0 = sorted(set(int(i) for i in active_set if 0 <= int(i) < problem.m_c))
            sol = _kkt_from_factor(chol, problem.linear, c_mat[w0], c_vec[w0])
            if self._violation(problem, sol.z) <= tol:
                keep = [w0[j] for j in range(len(w0)) if j not in sol.dropped]
                return sol.z, keep
        if warm_start is not None:
            z0 = np.asarray(warm_start, dtype=float).reshape(-1)
            if z0.shape == (problem.n,) and self._violation(problem, z0) <= tol:
                return z0, self._active_independent(problem, chol, z0)
        z_free = _kkt_from_factor(chol, problem.linear, c_mat[:0], c_vec[:0]).z
        if self._violation(problem, z_free) <= tol:
            return z_free, []
        z0 = np.zeros(problem.n)
        if self._violation(problem, z0) <= tol:
            return z0, self._active_independent(problem, chol, z0)
        z1, t = self._phase_one(problem)
        if z1 is None or t > tol:
            return None, None
        return z1, []

    def _active_independent(self, problem, chol, z) -> list:
        slack = problem.c_vec - problem.c_mat @ z
        rows = [int(i) for i in np.flatnonzero(np.abs(slack) <= self.tol_feas)]
        if not rows:
            return []
        y = sla.solve_triangular(chol, problem.c_mat[rows].T, lower=True)
        return [rows[j] for j in _independent_columns(y)]

    def solve(self, problem: QpProblem, warm_start=None, active_set=None) -> QpSolution:
        chol = self._factor(problem.hessian)
        f = problem.linear
        c_mat, c_vec = problem.c_mat, problem.c_vec
        max_iter = self.max_iter or 50 * (problem.n + problem.m_c)

        z, work = self._start(problem, chol, warm_start, active_set)
        if z is None:
            return QpSolution(np.zeros(problem.n), [], 0, INFEASIBLE)
        work = list(work)
        mu = np.zeros(len(work))
        # rows found dependent on the working set cannot block (c'p = 0 in exact arithmetic)
        skip: set = set()
        for it in range(1, max_iter + 1):
            eq = _kkt_from_factor(chol, f, c_mat[work], c_vec[work])
            if eq.dropped:
                skip.update(work[j] for j in eq.dropped)
                work = [w for j, w in enumerate(work) if j not in eq.dropped]
                mu = np.delete(eq.multipliers, eq.dropped)
            else:
                mu = eq.multipliers
            p = eq.z - z
            if np.max(np.abs(p), initial=0.0) <= self.tol_step * (1.0 + np.max(np.abs(z), initial=0.0)):
                z = eq.z
                if mu.size == 0 or mu.min() >= -self.tol_kkt:
                    return self._finish(problem, z, work, mu, it, OPTIMAL)
                # most negative multiplier leaves; argmin returns the first of ties
                j = int(np.argmin(np.where(mu == mu.min(), np.array(work), np.inf)))
                del work[j]
                skip.clear()
                continue
            alpha, block = 1.0, None
            if problem.m_c:
                cp = c_mat @ p
                mask = cp > 1e-14 * np.maximum(1.0, np.abs(c_mat).max(axis=1) * np.abs(p).max())
                if work:
                    mask[work] = False
                if skip:
                    mask[list(skip)] = False
                if np.any(mask):
                    idx = np.flatnonzero(mask)
                    ratios = np.maximum(c_vec[idx] - c_mat[idx] @ z, 0.0) / cp[idx]
                    r_min = ratios.min()
                    if r_min < 1.0:
                        alpha = float(r_min)
                        block = int(idx[np.flatnonzero(ratios == r_min)[0]])
            z = z + alpha * p
            if block is not None:
                work.append(block)
        log.warning("active-set solver hit the iteration cap (%d)", max_iter)
        return self._finish(problem, z, work, mu, max_iter, MAX_ITERATIONS)

    def _finish(self, problem, z, work, mu, iterations, status) -> QpSolution:
        order = np.argsort(work, kind="stable")
        work_sorted = [int(work[i]) for i in order]
        mu_sorted = np.asarray(mu)[order] if len(mu) == len(work) else np.zeros(len(work))
        return QpSolution(z, work_sorted, iterations, status, mu_sorted, problem.objective(z))


def solve_qp(problem: QpProblem, warm_start=None, active_set=None, **options) -> QpSolution:
    """Solve ``problem`` with a fresh :class:`ActiveSetSolver`."""
    return ActiveSetSolver(**options).solve(problem, warm_start, active_set)


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Post-hoc optimality certificate of a solution."""
    z = sol.z
    grad = problem.hessian @ z + problem.linear
    if sol.active_set:
        grad = grad + problem.c_mat[sol.active_set].T @ sol.multipliers
    viol = problem.c_mat @ z - problem.c_vec if problem.m_c else np.zeros(0)
    active_slack = viol[sol.active_set] if sol.active_set else np.zeros(0)
    return {
        "stationarity": float(np.linalg.norm(grad)),
        "primal": float(max(0.0, viol.max(initial=0.0))),
        "dual": float(min(0.0, np.min(sol.multipliers, initial=0.0))),
        "complementarity": float(np.max(np.abs(active_slack * sol.multipliers), initial=0.0)),
    }


def dare_residual(a, b, q, r, p) -> float:
    """Relative Frobenius defect of ``p`` in the discrete Riccati equation."""
    a, b, q, r, p = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (a, b, q, r, p))
    bp = b.T @ p
    rhs = a.T @ p @ a - (bp @ a).T @ np.linalg.solve(r + bp @ b, bp @ a) + q
    return float(np.linalg.norm(rhs - p) / max(np.linalg.norm(p), 1e-300))


def solve_dare(a_mat, b_mat, q_mat, r_mat, tol: float = 1e-10, max_iter: int = 10_000) -> DareSolution:
    """Riccati fixed-point iteration started from ``P0 = Q``.

    Stops when the relative Frobenius change drops below ``tol``.
    """
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.asarray(b_mat, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q_mat, dtype=float))
    r = np.atleast_2d(np.asarray(r_mat, dtype=float))
    n, nu = b.shape
    if a.shape != (n, n) or q.shape != (n, n) or r.shape != (nu, nu):
        raise InvalidParameterError("inconsistent DARE dimensions")
    if np.linalg.eigvalsh(0.5 * (r + r.T))[0] <= 0:
        raise InvalidParameterError("R must be positive definite")
    p = 0.5 * (q + q.T)
    for it in range(1, max_iter + 1):
        bp = b.T @ p
        gain = np.linalg.solve(r + bp @ b, bp @ a)
        p_new = a.T @ p @ a - (bp @ a).T @ gain + q
        p_new = 0.5 * (p_new + p_new.T)
        if not np.all(np.isfinite(p_new)):
            raise NumericalError("Riccati iteration diverged", iterations=it)
        change = np.linalg.norm(p_new - p)
        size = np.linalg.norm(p_new)
        if not (np.isfinite(change) and np.isfinite(size)):
            raise NumericalError("Riccati iteration diverged", iterations=it)
        p = p_new
        if change <= tol * max(size, 1e-300):
            return DareSolution(p, dare_residual(a, b, q, r, p), it)
    res = dare_residual(a, b, q, r, p)
    raise NumericalError(
        f"Riccati iteration did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res, iterations=max_iter,
    )
