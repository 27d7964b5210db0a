"""Market equilibrium by price tatonnement, and the centralized reference.

Every producer answers the current energy and reserve prices with its
best response; the prices then move against the aggregate imbalances::

    lambda_e <- lambda_e - rho * (sum(p) + w_forecast - load)
    lambda_r <- lambda_r - rho * (sum(alpha) - 1)

All producers react to the same price iterate (Jacobi order).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .exceptions import Infeasible, ProducerInfeasible
from .market import (
    DEFAULT_ALPHA_REGULARIZATION,
    ForecastSummary,
    MarketConfig,
    Prices,
    ProducerDecision,
    best_response,
    best_response_qp,
    support_constraints,
)
from .qp import QpProblem, kkt_enumerate_ws, kkt_workspace, solve_qp

_CONVERGED = 1
_EXHAUSTED = 0
_CHUNK_DONE = 2


@dataclass(frozen=True)
class TatonnementSettings:
    rho: float = 1e-5
    tol: float = 1e-3
    max_iter: int = 20_000_000
    initial_prices: Prices = field(default_factory=Prices)
    alpha_regularization: float = DEFAULT_ALPHA_REGULARIZATION

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.alpha_regularization < 0:
            raise ValueError("alpha_regularization must be non-negative")


@dataclass(frozen=True)
class EquilibriumResult:
    decisions: tuple
    prices: Prices
    iterations: int
    energy_residual: float
    reserve_residual: float
    converged: bool
    tol: float = 1e-3

    @property
    def energy_cleared(self):
        """True when the energy market balanced, whatever the reserve market did."""
        return abs(self.energy_residual) <= self.tol

    @property
    def dispatch(self):
        return np.array([d.p for d in self.decisions])

    @property
    def alphas(self):
        return np.array([d.alpha for d in self.decisions])


@numba.njit(cache=True)
def _iterate(Qs, q0s, As, bs, ms, net_load, rho, tol, lam_e, lam_r, start, stop, max_iter, p_out, a_out):
    n_prod = Qs.shape[0]
    Aeq = np.zeros((0, 2))
    beq = np.zeros(0)
    nu = np.zeros(0)
    x = np.zeros(2)
    mu = np.zeros(As.shape[1])
    q = np.empty(2)
    M, rhs, idx = kkt_workspace(2, As.shape[1], 0)
    e_res = 0.0
    r_res = 0.0
    for it in range(start, stop):
        sp = 0.0
        sa = 0.0
        for i in range(n_prod):
            m = ms[i]
            q[0] = q0s[i, 0] - lam_e
            q[1] = q0s[i, 1] - lam_r
            status = kkt_enumerate_ws(Qs[i], q, As[i, :m], bs[i, :m], Aeq, beq, x, mu[:m], nu, M, rhs, idx)
            if status != 0:
                return -1 - i, it + 1, lam_e, lam_r, 0.0, 0.0, lam_e, lam_r
            p_out[i] = x[0]
            a_out[i] = max(x[1], 0.0) + 0.0
            sp += p_out[i]
            sa += a_out[i]
        e_res = sp - net_load
        r_res = sa - 1.0
        if abs(e_res) <= tol and abs(r_res) <= tol:
            return _CONVERGED, it + 1, lam_e, lam_r, e_res, r_res, lam_e, lam_r
        if it + 1 >= max_iter:
            return _EXHAUSTED, it + 1, lam_e, lam_r, e_res, r_res, lam_e, lam_r
        used_e = lam_e
        used_r = lam_r
        lam_e -= rho * e_res
        lam_r -= rho * r_res
        if it + 1 == stop:
            return _CHUNK_DONE, it + 1, used_e, used_r, e_res, r_res, lam_e, lam_r
    return _CHUNK_DONE, stop, lam_e, lam_r, e_res, r_res, lam_e, lam_r


def _stack_producer_problems(config, summaries, alpha_regularization):
    n = config.n_producers
    problems = [
        best_response_qp(g, s, Prices(), alpha_regularization) for g, s in zip(config.producers, summaries)
    ]
    mmax = max(p.m for p in problems)
    Qs = np.zeros((n, 2, 2))
    q0s = np.zeros((n, 2))
    As = np.zeros((n, mmax, 2))
    bs = np.zeros((n, mmax))
    ms = np.zeros(n, dtype=np.int64)
    for i, qp in enumerate(problems):
        Qs[i] = qp.Q
        q0s[i] = qp.q
        As[i, : qp.m] = qp.A_ineq
        bs[i, : qp.m] = qp.b_ineq
        ms[i] = qp.m
    return Qs, q0s, As, bs, ms


def tatonnement(
    config: MarketConfig,
    summaries,
    settings: TatonnementSettings | None = None,
    trace_path=None,
    trace_every: int | None = None,
) -> EquilibriumResult:
    """Iterate best responses and price updates until both markets clear.

    Hitting ``max_iter`` is not an error: the result comes back with
    ``converged=False`` and the residuals of the last iterate.  When a
    trace path is given, every ``trace_every``-th iterate is appended to it
    as CSV.
    """
    settings = settings or TatonnementSettings()
    summaries = list(summaries)
    if len(summaries) != config.n_producers:
        raise ValueError(f"expected {config.n_producers} summaries, got {len(summaries)}")
    Qs, q0s, As, bs, ms = _stack_producer_problems(config, summaries, settings.alpha_regularization)
    n = config.n_producers
    p_out = np.zeros(n)
    a_out = np.zeros(n)
    max_iter = int(settings.max_iter)
    lam_e, lam_r = settings.initial_prices.energy, settings.initial_prices.reserve

    writer = handle = None
    chunk = max_iter
    if trace_path is not None:
        chunk = max(1, int(trace_every or 1000))
        path = Path(trace_path)
        fresh = not path.exists() or path.stat().st_size == 0
        handle = path.open("a", newline="")
        writer = csv.writer(handle)
        if fresh:
            writer.writerow(["iter", "lambda_e", "lambda_r", "energy_residual", "reserve_residual"])
    try:
        done = 0
        while True:
            stop = min(done + chunk, max_iter)
            status, done, used_e, used_r, e_res, r_res, lam_e, lam_r = _iterate(
                Qs, q0s, As, bs, ms, config.net_load, settings.rho, settings.tol,
                lam_e, lam_r, done, stop, max_iter, p_out, a_out,
            )
            if status < 0:
                index = -status - 1
                prices = Prices(used_e, used_r)
                try:
                    best_response(config.producers[index], summaries[index], prices, settings.alpha_regularization)
                except Infeasible as exc:
                    raise ProducerInfeasible(index, str(exc)) from exc
                raise ProducerInfeasible(index)
            if writer is not None:
                writer.writerow([done, repr(used_e), repr(used_r), repr(e_res), repr(r_res)])
            if status != _CHUNK_DONE:
                break
    finally:
        if handle is not None:
            handle.close()
    decisions = tuple(ProducerDecision(float(p), float(a)) for p, a in zip(p_out, a_out))
    return EquilibriumResult(
        decisions=decisions,
        prices=Prices(float(used_e), float(used_r)),
        iterations=int(done),
        energy_residual=float(e_res),
        reserve_residual=float(r_res),
        converged=status == _CONVERGED,
        tol=settings.tol,
    )


def market_clearing_qp(config: MarketConfig, summaries, alpha_regularization=DEFAULT_ALPHA_REGULARIZATION):
    """One QP over all ``(p_i, alpha_i)`` with each producer's own support rows.

    Variables are ordered ``p_1..p_n, alpha_1..alpha_n``; the two equality
    rows are the energy balance and the reserve balance.
    """
    n = config.n_producers
    summaries = list(summaries)
    if len(summaries) != n:
        raise ValueError(f"expected {n} summaries, got {len(summaries)}")
    Q = np.zeros((2 * n, 2 * n))
    q = np.zeros(2 * n)
    rows, rhs = [], []
    for i, (g, s) in enumerate(zip(config.producers, summaries)):
        Q[i, i] = 2.0 * g.c2
        Q[n + i, n + i] = 2.0 * g.c2 * s.variance
        if s.variance == 0.0:
            Q[n + i, n + i] += alpha_regularization
        q[i] = g.c1
        A, b = support_constraints(g, s)
        for a_row, b_val in zip(A, b):
            row = np.zeros(2 * n)
            row[i], row[n + i] = a_row
            rows.append(row)
            rhs.append(b_val)
    A_eq = np.zeros((2, 2 * n))
    A_eq[0, :n] = 1.0
    A_eq[1, n:] = 1.0
    b_eq = np.array([config.net_load, 1.0])
    return QpProblem(Q=Q, q=q, A_ineq=np.array(rows), b_ineq=np.array(rhs), A_eq=A_eq, b_eq=b_eq)


def clear_market(config: MarketConfig, summaries, alpha_regularization=DEFAULT_ALPHA_REGULARIZATION) -> EquilibriumResult:
    """Solve the joint clearing problem directly.

    Its KKT conditions are the producers' optimality conditions plus the
    two balance equations, so with per-producer summaries the solution is
    the equilibrium itself, with the balance duals as prices.
    """
    n = config.n_producers
    qp = market_clearing_qp(config, summaries, alpha_regularization)
    sol = solve_qp(qp, regularization=0.0)
    x = sol.x
    decisions = tuple(ProducerDecision(float(x[i]), max(float(x[n + i]), 0.0)) for i in range(n))
    return EquilibriumResult(
        decisions=decisions,
        prices=Prices(float(sol.duals_eq[0]), float(sol.duals_eq[1])),
        iterations=1,
        energy_residual=float(x[:n].sum() - config.net_load),
        reserve_residual=float(x[n:].sum() - 1.0),
        converged=True,
    )


def centralized_dispatch(
    config: MarketConfig,
    shared_summary: ForecastSummary,
    alpha_regularization=DEFAULT_ALPHA_REGULARIZATION,
) -> EquilibriumResult:
    """Expected-cost-minimizing dispatch when every producer shares one summary."""
    return clear_market(config, [shared_summary] * config.n_producers, alpha_regularization)
