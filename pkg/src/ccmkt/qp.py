"""Exact solver for tiny dense convex QPs by active-set enumeration.

Problem form::

    minimize    1/2 x'Qx + q'x
    subject to  A_ineq x <= b_ineq
                A_eq x    = b_eq

Candidate active sets are visited by increasing cardinality, then
lexicographically, and the first one whose KKT point is primal and dual
feasible is returned.  Equality duals follow the price convention
``Qx + q + A_ineq' mu - A_eq' nu = 0``, so the dual of a balance row
``sum(p) = demand`` is the marginal cost of demand.

The enumeration kernel is compiled with numba and reused by the
tatonnement and re-dispatch loops so that all three paths share one
solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .exceptions import DimensionLimit, Infeasible, SingularKkt

MAX_VARS = 8
MAX_INEQ = 16
MAX_EQ = 2

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-13
PSD_TOL = 1e-10
DEFAULT_REGULARIZATION = 1e-9

# kernel status codes
OK = 0
INFEASIBLE = 1
SINGULAR = 2


@numba.njit(cache=True, inline="always", error_model="numpy")
def _lu_solve_inplace(M, rhs, s):
    """Gaussian elimination with partial pivoting on the leading s x s block.

    Overwrites M and rhs; the solution ends up in rhs[:s].
    """
    scale = 0.0
    for i in range(s):
        for j in range(s):
            a = abs(M[i, j])
            if a > scale:
                scale = a
    if scale == 0.0:
        return s == 0
    thresh = PIVOT_TOL * scale
    for k in range(s):
        piv = k
        big = abs(M[k, k])
        for i in range(k + 1, s):
            a = abs(M[i, k])
            if a > big:
                big = a
                piv = i
        if big <= thresh:
            return False
        if piv != k:
            for j in range(k, s):
                t = M[k, j]
                M[k, j] = M[piv, j]
                M[piv, j] = t
            t = rhs[k]
            rhs[k] = rhs[piv]
            rhs[piv] = t
        inv = 1.0 / M[k, k]
        for i in range(k + 1, s):
            f = M[i, k] * inv
            if f != 0.0:
                for j in range(k + 1, s):
                    M[i, j] -= f * M[k, j]
                rhs[i] -= f * rhs[k]
    for k in range(s - 1, -1, -1):
        acc = rhs[k]
        for j in range(k + 1, s):
            acc -= M[k, j] * rhs[j]
        rhs[k] = acc / M[k, k]
    return True


@numba.njit(cache=True, inline="always", error_model="numpy")
def _try_active_set(Q, q, A, b, Aeq, beq, idx, c, M, rhs, x, mu, nu, dual_tol):
    n = Q.shape[0]
    m = A.shape[0]
    k = Aeq.shape[0]
    s = n + c + k
    for i in range(s):
        for j in range(s):
            M[i, j] = 0.0
    for i in range(n):
        for j in range(n):
            M[i, j] = Q[i, j]
        rhs[i] = -q[i]
    for t in range(c):
        row = idx[t]
        for j in range(n):
            M[n + t, j] = A[row, j]
            M[j, n + t] = A[row, j]
        rhs[n + t] = b[row]
    for t in range(k):
        for j in range(n):
            M[n + c + t, j] = Aeq[t, j]
            M[j, n + c + t] = -Aeq[t, j]
        rhs[n + c + t] = beq[t]
    if not _lu_solve_inplace(M, rhs, s):
        return SINGULAR
    for t in range(c):
        if rhs[n + t] < -dual_tol:
            return INFEASIBLE
    for r in range(m):
        acc = 0.0
        for j in range(n):
            acc += A[r, j] * rhs[j]
        if acc > b[r] + FEAS_TOL:
            return INFEASIBLE
    for j in range(n):
        x[j] = rhs[j]
    for r in range(m):
        mu[r] = 0.0
    for t in range(c):
        mu[idx[t]] = max(rhs[n + t], 0.0)
    for t in range(k):
        nu[t] = rhs[n + c + t]
    return OK


@numba.njit(cache=True, error_model="numpy")
def kkt_workspace(n, m, k):
    """Scratch buffers for :func:`kkt_enumerate_ws` sized for (n, m, k)."""
    cmax = max(min(m, n - k), 0)
    smax = n + cmax + k
    return np.empty((smax, smax)), np.empty(smax), np.empty(max(cmax, 1), dtype=np.int64)


@numba.njit(cache=True, error_model="numpy")
def kkt_enumerate_ws(Q, q, A, b, Aeq, beq, x, mu, nu, M, rhs, idx):
    """Solve the QP by active-set enumeration; write the result into x, mu, nu.

    Returns OK, INFEASIBLE or SINGULAR.  M, rhs and idx are scratch space
    at least as large as :func:`kkt_workspace` makes them.
    """
    n = Q.shape[0]
    m = A.shape[0]
    k = Aeq.shape[0]
    cmax = max(min(m, n - k), 0)
    qscale = 0.0
    for j in range(n):
        if abs(q[j]) > qscale:
            qscale = abs(q[j])
    dual_tol = DUAL_TOL * (1.0 + qscale)
    solved_any = False
    for c in range(cmax + 1):
        for t in range(c):
            idx[t] = t
        while True:
            status = _try_active_set(Q, q, A, b, Aeq, beq, idx, c, M, rhs, x, mu, nu, dual_tol)
            if status == OK:
                return OK
            if status == INFEASIBLE:
                solved_any = True
            t = c - 1
            while t >= 0 and idx[t] == m - c + t:
                t -= 1
            if t < 0:
                break
            idx[t] += 1
            for u in range(t + 1, c):
                idx[u] = idx[u - 1] + 1
    if solved_any:
        return INFEASIBLE
    return SINGULAR


@numba.njit(cache=True, error_model="numpy")
def kkt_enumerate(Q, q, A, b, Aeq, beq, x, mu, nu):
    M, rhs, idx = kkt_workspace(Q.shape[0], A.shape[0], Aeq.shape[0])
    return kkt_enumerate_ws(Q, q, A, b, Aeq, beq, x, mu, nu, M, rhs, idx)


def _as_matrix(a, cols):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, cols))
    return np.atleast_2d(a)


def _pivoted_cholesky_is_psd(Q):
    """Diagonally pivoted Cholesky; False when a negative pivot shows up."""
    A = np.array(Q, dtype=float)
    n = A.shape[0]
    tol = PSD_TOL * max(1.0, np.abs(A).max(initial=0.0))
    for k in range(n):
        piv = k + int(np.argmax(np.diag(A)[k:]))
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            A[:, [k, piv]] = A[:, [piv, k]]
        d = A[k, k]
        if d < -tol:
            return False
        if d <= tol:
            # remaining block must vanish for a PSD matrix
            return bool(np.all(np.abs(A[k:, k:]) <= np.sqrt(tol) + tol))
        A[k + 1:, k] /= np.sqrt(d)
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k + 1:, k])
    return True


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    A_ineq: np.ndarray = field(default=None)
    b_ineq: np.ndarray = field(default=None)
    A_eq: np.ndarray = field(default=None)
    b_eq: np.ndarray = field(default=None)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.size
        if Q.shape != (n, n):
            raise ValueError(f"Q has shape {Q.shape}, expected ({n}, {n})")
        A = _as_matrix(self.A_ineq if self.A_ineq is not None else [], n)
        b = np.asarray(self.b_ineq if self.b_ineq is not None else [], dtype=float).ravel()
        Aeq = _as_matrix(self.A_eq if self.A_eq is not None else [], n)
        beq = np.asarray(self.b_eq if self.b_eq is not None else [], dtype=float).ravel()
        if A.shape != (b.size, n):
            raise ValueError(f"A_ineq has shape {A.shape}, expected ({b.size}, {n})")
        if Aeq.shape != (beq.size, n):
            raise ValueError(f"A_eq has shape {Aeq.shape}, expected ({beq.size}, {n})")
        if n > MAX_VARS or b.size > MAX_INEQ or beq.size > MAX_EQ:
            raise DimensionLimit(
                f"problem size n={n}, m={b.size}, k={beq.size} exceeds "
                f"limits ({MAX_VARS}, {MAX_INEQ}, {MAX_EQ})"
            )
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0.0))):
            raise ValueError("Q must be symmetric")
        if np.any(np.diag(Q) < 0) or not _pivoted_cholesky_is_psd(Q):
            raise ValueError("Q must be positive semidefinite")
        for name, value in (("Q", Q), ("q", q), ("A_ineq", A), ("b_ineq", b), ("A_eq", Aeq), ("b_eq", beq)):
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} contains non-finite entries")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.q.size

    @property
    def m(self):
        return self.b_ineq.size

    @property
    def k(self):
        return self.b_eq.size


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    objective: float
    active_set: tuple


def solve_qp(problem: QpProblem, regularization: float | None = None) -> QpSolution:
    """Return the global optimum of ``problem`` with Q replaced by Q + reg*I.

    With ``regularization=None`` a ridge of ``DEFAULT_REGULARIZATION`` is
    added only when Q has a zero on its diagonal.
    """
    Q = problem.Q
    if regularization is None:
        regularization = DEFAULT_REGULARIZATION if np.any(np.diag(Q) == 0.0) else 0.0
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    if regularization > 0:
        Q = Q + regularization * np.eye(problem.n)
    x = np.zeros(problem.n)
    mu = np.zeros(problem.m)
    nu = np.zeros(problem.k)
    status = kkt_enumerate(
        np.ascontiguousarray(Q),
        problem.q,
        np.ascontiguousarray(problem.A_ineq),
        problem.b_ineq,
        np.ascontiguousarray(problem.A_eq),
        problem.b_eq,
        x,
        mu,
        nu,
    )
    if status == INFEASIBLE:
        raise Infeasible("no active set yields a feasible KKT point")
    if status == SINGULAR:
        raise SingularKkt("all candidate KKT systems are singular; add regularization")
    objective = float(0.5 * x @ Q @ x + problem.q @ x)
    active = tuple(int(i) for i in np.flatnonzero(mu > 0.0))
    if problem.m:
        slack = problem.b_ineq - problem.A_ineq @ x
        active = tuple(sorted(set(active) | set(int(i) for i in np.flatnonzero(np.abs(slack) <= FEAS_TOL))))
    return QpSolution(x=x, duals_ineq=mu, duals_eq=nu, objective=objective, active_set=active)


def kkt_residuals(problem: QpProblem, solution: QpSolution, regularization: float = 0.0):
    """Stationarity, primal infeasibility and complementarity of a solution."""
    Q = problem.Q + regularization * np.eye(problem.n)
    x, mu, nu = solution.x, solution.duals_ineq, solution.duals_eq
    grad = Q @ x + problem.q + problem.A_ineq.T @ mu - problem.A_eq.T @ nu
    slack = problem.b_ineq - problem.A_ineq @ x
    primal = max(
        float(np.max(-slack, initial=0.0)),
        float(np.max(np.abs(problem.A_eq @ x - problem.b_eq), initial=0.0)),
    )
    return {
        "stationarity": float(np.max(np.abs(grad), initial=0.0)),
        "primal": primal,
        "complementarity": float(np.max(np.abs(mu * slack), initial=0.0)),
        "dual_sign": float(np.max(-mu, initial=0.0)),
    }
