"""Out-of-sample re-dispatch, reliability and cost statistics.

For each realized forecast error ``w_s`` the operator re-dispatches the
producers around their day-ahead nominal points at least cost, using wind
spillage ``wc`` and load shedding ``ls`` only as a last resort::

    min  sum_i c2_i (p_i + r_i)^2 + c1_i (p_i + r_i) + c_spill wc + c_shed ls
    s.t. sum_i r_i + ls - wc = -w_s
         p_min_i <= p_i + r_i <= p_max_i,   |r_i| <= r_max_i
         0 <= wc <= w_forecast + w_s,       0 <= ls <= load
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .equilibrium import EquilibriumResult
from .exceptions import EmptyInput, Infeasible, NominalOutOfBounds, NotConverged, SingularKkt
from .forecast import ForecastDataset
from .market import MarketConfig, Prices, ProducerDecision, ProducerParams
from .qp import INFEASIBLE, OK, kkt_enumerate_ws, kkt_workspace

VIOLATION_TOL = 1e-6
SLACK_REGULARIZATION = 1e-9
NOMINAL_TOL = 1e-9
CVAR_TAIL = 0.05


@dataclass(frozen=True)
class RedispatchOutcome:
    adjustments: np.ndarray
    spillage: float
    shedding: float
    emergency_cost: float
    total_cost: float
    violated: bool
    w_s: float = 0.0

    @property
    def balance_residual(self):
        return float(np.sum(self.adjustments) + self.shedding + self.w_s - self.spillage)


@dataclass(frozen=True)
class RunStatistics:
    reliability: float
    mean_cost: float
    cvar5: float
    payoffs_mean: np.ndarray
    payoffs: np.ndarray | None = None
    scenario_count: int = 0


@numba.njit(cache=True, error_model="numpy")
def _redispatch_loop(c1, c2, nominal, lb, ub, w_forecast, load, c_spill, c_shed, scenarios, reg,
                     r_out, wc_out, ls_out):
    n = c1.size
    nv = n + 2
    m = 2 * n + 4
    Q = np.zeros((nv, nv))
    q = np.zeros(nv)
    A = np.zeros((m, nv))
    b = np.zeros(m)
    Aeq = np.ones((1, nv))
    Aeq[0, n + 1] = -1.0
    beq = np.zeros(1)
    for i in range(n):
        Q[i, i] = 2.0 * c2[i]
        q[i] = 2.0 * c2[i] * nominal[i] + c1[i]
        A[2 * i, i] = 1.0
        b[2 * i] = ub[i]
        A[2 * i + 1, i] = -1.0
        b[2 * i + 1] = -lb[i]
    # variable order: r_1..r_n, ls, wc
    Q[n, n] = reg
    Q[n + 1, n + 1] = reg
    q[n] = c_shed
    q[n + 1] = c_spill
    A[2 * n, n] = 1.0
    b[2 * n] = load
    A[2 * n + 1, n] = -1.0
    A[2 * n + 2, n + 1] = 1.0
    A[2 * n + 3, n + 1] = -1.0
    x = np.zeros(nv)
    mu = np.zeros(m)
    nu = np.zeros(1)
    M, rhs, idx = kkt_workspace(nv, m, 1)
    for s in range(scenarios.size):
        w = scenarios[s]
        b[2 * n + 2] = w_forecast + w
        beq[0] = -w
        status = kkt_enumerate_ws(Q, q, A, b, Aeq, beq, x, mu, nu, M, rhs, idx)
        if status != OK:
            return status, s
        for i in range(n):
            r_out[s, i] = x[i]
        ls_out[s] = x[n] if x[n] > 0.0 else 0.0
        wc_out[s] = x[n + 1] if x[n + 1] > 0.0 else 0.0
    return OK, scenarios.size


def _prepare(config: MarketConfig, nominal):
    nominal = np.asarray(nominal, dtype=float).ravel()
    gens = config.producers
    if nominal.size != len(gens):
        raise ValueError(f"expected {len(gens)} nominal set points, got {nominal.size}")
    for i, (g, p) in enumerate(zip(gens, nominal)):
        if not g.p_min - NOMINAL_TOL <= p <= g.p_max + NOMINAL_TOL:
            raise NominalOutOfBounds(f"producer {i}: nominal {p} outside [{g.p_min}, {g.p_max}]")
    nominal = np.clip(nominal, [g.p_min for g in gens], [g.p_max for g in gens])
    c1 = np.array([g.c1 for g in gens])
    c2 = np.array([g.c2 for g in gens])
    r_max = np.array([g.r_max for g in gens])
    lb = np.maximum(np.array([g.p_min for g in gens]) - nominal, -r_max)
    ub = np.minimum(np.array([g.p_max for g in gens]) - nominal, r_max)
    return nominal, c1, c2, lb, ub


def redispatch_batch(config: MarketConfig, nominal, scenarios):
    """Re-dispatch every scenario; returns ``(r, spillage, shedding, total_cost)`` arrays.

    ``r`` has one row per scenario.  Costs are evaluated exactly, without
    the slack regularization used inside the solver.
    """
    nominal, c1, c2, lb, ub = _prepare(config, nominal)
    w = np.ascontiguousarray(np.asarray(scenarios, dtype=float).ravel())
    if np.any(w < -config.wind_forecast):
        raise ValueError("scenario realizes negative wind output (w_s < -w_forecast)")
    n, count = nominal.size, w.size
    r = np.zeros((count, n))
    wc = np.zeros(count)
    ls = np.zeros(count)
    status, s = _redispatch_loop(
        c1, c2, nominal, lb, ub, float(config.wind_forecast), float(config.load),
        float(config.spill_cost), float(config.shed_cost), w, SLACK_REGULARIZATION, r, wc, ls,
    )
    if status == INFEASIBLE:
        raise Infeasible(f"re-dispatch infeasible for scenario {s} (w_s={w[s]})")
    if status != OK:
        raise SingularKkt(f"re-dispatch KKT systems singular for scenario {s}")
    out = nominal + r
    cost = (c2 * out * out + c1 * out).sum(axis=1) + config.spill_cost * wc + config.shed_cost * ls
    return r, wc, ls, cost


def redispatch(config: MarketConfig, nominal, w_s: float) -> RedispatchOutcome:
    r, wc, ls, cost = redispatch_batch(config, nominal, [w_s])
    spill, shed = float(wc[0]), float(ls[0])
    return RedispatchOutcome(
        adjustments=r[0],
        spillage=spill,
        shedding=shed,
        emergency_cost=config.spill_cost * spill + config.shed_cost * shed,
        total_cost=float(cost[0]),
        violated=spill > VIOLATION_TOL or shed > VIOLATION_TOL,
        w_s=float(w_s),
    )


def cvar(costs, tail: float = CVAR_TAIL) -> float:
    """Mean of the ``ceil(tail * N)`` largest costs."""
    costs = np.asarray(costs, dtype=float).ravel()
    if costs.size == 0:
        raise EmptyInput("cvar of an empty cost vector")
    if not 0 < tail <= 1:
        raise ValueError("tail must lie in (0, 1]")
    k = math.ceil(tail * costs.size)
    # guard against tail*N landing a hair above an integer
    if k > 1 and math.isclose(tail * costs.size, k - 1, rel_tol=1e-12):
        k -= 1
    worst = np.sort(costs, kind="stable")[::-1][:k]
    return float(worst.mean())


def payoff_per_scenario(params: ProducerParams, decision: ProducerDecision, prices: Prices, r_is):
    out = decision.p + np.asarray(r_is, dtype=float)
    return (
        prices.energy * decision.p
        + prices.reserve * decision.alpha
        - params.c2 * out * out
        - params.c1 * out
    )


def evaluate_out_of_sample(
    config: MarketConfig,
    result: EquilibriumResult,
    scenarios,
    require_converged: bool = True,
    keep_payoffs: bool = False,
    dump_path=None,
) -> RunStatistics:
    """Reliability, mean cost, CVaR and mean payoffs over a scenario set.

    ``require_converged=False`` lets callers evaluate a run whose reserve
    price never settled; the nominal dispatch is used as it stands.
    """
    if require_converged and not result.converged:
        raise NotConverged("equilibrium did not converge; refusing to evaluate")
    w = scenarios.samples if isinstance(scenarios, ForecastDataset) else np.asarray(scenarios, dtype=float)
    if w.size == 0:
        raise EmptyInput("no scenarios to evaluate")
    nominal = result.dispatch
    r, wc, ls, cost = redispatch_batch(config, nominal, w)
    violated = (wc > VIOLATION_TOL) | (ls > VIOLATION_TOL)
    pay = np.column_stack([
        payoff_per_scenario(g, d, result.prices, r[:, i])
        for i, (g, d) in enumerate(zip(config.producers, result.decisions))
    ])
    if dump_path is not None:
        _dump(dump_path, w, r, wc, ls, cost, violated)
    return RunStatistics(
        reliability=1.0 - float(violated.sum()) / w.size,
        mean_cost=float(cost.mean()),
        cvar5=cvar(cost, CVAR_TAIL),
        payoffs_mean=pay.mean(axis=0),
        payoffs=pay if keep_payoffs else None,
        scenario_count=int(w.size),
    )


def _dump(path, w, r, wc, ls, cost, violated):
    n = r.shape[1]
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["scenario_index", "w_s", *[f"r_{i + 1}" for i in range(n)], "w_spill", "l_shed", "cost", "violated"])
        for s in range(w.size):
            out.writerow([s, repr(float(w[s])), *[repr(float(v)) for v in r[s]], repr(float(wc[s])),
                          repr(float(ls[s])), repr(float(cost[s])), int(violated[s])])
