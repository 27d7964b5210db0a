"""Market primitives and the producer's best-response problem.

A producer chooses a nominal dispatch ``p`` and a participation factor
``alpha`` (its share of the real-time forecast error).  Its private view
of the error is a :class:`ForecastSummary`; the chance constraint is
replaced by enforcing the operating limits at both ends of the sample
support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qp import QpProblem, solve_qp

DEFAULT_ALPHA_REGULARIZATION = 1e-9


@dataclass(frozen=True)
class ProducerParams:
    p_min: float
    p_max: float
    r_max: float
    c1: float
    c2: float

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError(f"need 0 <= p_min <= p_max, got {self.p_min}, {self.p_max}")
        if self.r_max < 0:
            raise ValueError("r_max must be non-negative")
        if self.c2 <= 0:
            raise ValueError("c2 must be positive (strictly convex cost)")
        if self.c1 < 0:
            raise ValueError("c1 must be non-negative")

    def marginal_cost(self, p):
        return 2.0 * self.c2 * p + self.c1


@dataclass(frozen=True)
class MarketConfig:
    producers: tuple
    load: float
    wind_forecast: float
    spill_cost: float
    shed_cost: float

    def __post_init__(self):
        object.__setattr__(self, "producers", tuple(self.producers))
        if not self.producers:
            raise ValueError("market needs at least one producer")
        if self.load <= 0:
            raise ValueError("load must be positive")
        if self.wind_forecast < 0:
            raise ValueError("wind_forecast must be non-negative")

    def sanity_warnings(self):
        """Slack costs at or below the top marginal cost make emergency actions cheap."""
        top = max(g.marginal_cost(g.p_max) for g in self.producers)
        out = []
        if self.spill_cost <= top:
            out.append(f"spill_cost {self.spill_cost} does not exceed the top marginal cost {top}")
        if self.shed_cost <= top:
            out.append(f"shed_cost {self.shed_cost} does not exceed the top marginal cost {top}")
        return out

    @property
    def n_producers(self):
        return len(self.producers)

    @property
    def net_load(self):
        return self.load - self.wind_forecast


@dataclass(frozen=True)
class ForecastSummary:
    variance: float
    w_lo: float
    w_hi: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be non-negative")
        if not self.w_lo <= 0 <= self.w_hi:
            raise ValueError(f"support must bracket zero, got [{self.w_lo}, {self.w_hi}]")

    @property
    def width(self):
        return self.w_hi - self.w_lo

    @property
    def degenerate(self):
        return self.variance == 0.0


@dataclass(frozen=True)
class ProducerDecision:
    p: float
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class Prices:
    energy: float = 0.0
    reserve: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.energy) and np.isfinite(self.reserve)):
            raise ValueError("prices must be finite")


def expected_cost(params: ProducerParams, decision: ProducerDecision, summary: ForecastSummary) -> float:
    """Expected production cost under the affine recourse policy."""
    p, a = decision.p, decision.alpha
    return params.c2 * p * p + params.c1 * p + params.c2 * a * a * summary.variance


def support_constraints(params: ProducerParams, summary: ForecastSummary):
    """Rows (over ``[p, alpha]``) enforcing the limits at the support ends.

    Rows whose coefficients are all zero carry no information (they read
    ``0 <= r_max``) and are dropped.
    """
    lo, hi = summary.w_lo, summary.w_hi
    rows = [
        ([1.0, -lo], params.p_max),
        ([-1.0, hi], -params.p_min),
        ([0.0, hi], params.r_max),
        ([0.0, -lo], params.r_max),
        ([0.0, -1.0], 0.0),
    ]
    rows = [(a, b) for a, b in rows if any(v != 0.0 for v in a)]
    A = np.array([a for a, _ in rows], dtype=float)
    b = np.array([b for _, b in rows], dtype=float)
    return A, b


def build_best_response_qp(params: ProducerParams, summary: ForecastSummary, prices: Prices) -> QpProblem:
    """Negative expected profit of one producer as a 2-variable QP in ``(p, alpha)``.

    Reserve is remunerated at ``prices.reserve`` per unit of ``alpha``,
    the same sign the reserve balance dual takes in the centralized
    dispatch, so that the tatonnement reserve update is stabilizing.
    """
    Q = np.diag([2.0 * params.c2, 2.0 * params.c2 * summary.variance])
    q = np.array([params.c1 - prices.energy, -prices.reserve])
    A, b = support_constraints(params, summary)
    return QpProblem(Q=Q, q=q, A_ineq=A, b_ineq=b)


def best_response_qp(params, summary, prices, alpha_regularization=DEFAULT_ALPHA_REGULARIZATION):
    qp = build_best_response_qp(params, summary, prices)
    if summary.variance == 0.0 and alpha_regularization > 0:
        Q = qp.Q.copy()
        Q[1, 1] += alpha_regularization
        qp = QpProblem(Q=Q, q=qp.q, A_ineq=qp.A_ineq, b_ineq=qp.b_ineq)
    return qp


def best_response(
    params: ProducerParams,
    summary: ForecastSummary,
    prices: Prices,
    alpha_regularization: float = DEFAULT_ALPHA_REGULARIZATION,
) -> ProducerDecision:
    qp = best_response_qp(params, summary, prices, alpha_regularization)
    sol = solve_qp(qp, regularization=0.0)
    return ProducerDecision(p=float(sol.x[0]), alpha=max(float(sol.x[1]), 0.0))


def profit(params, decision, summary, prices):
    """Expected profit: energy and reserve revenue minus expected cost."""
    revenue = prices.energy * decision.p + prices.reserve * decision.alpha
    return revenue - expected_cost(params, decision, summary)


def check_feasible(params, decision, summary, tol=1e-9):
    """Whether a decision honours the producer's own support constraints."""
    A, b = support_constraints(params, summary)
    x = np.array([decision.p, decision.alpha])
    return bool(np.all(A @ x <= b + tol))
