"""Experiment loops: private data, equilibrium, out-of-sample evaluation, CSV output.

Every random stream is keyed by ``derive_seed(base_seed, tag, ...)``:

* ``("private", size, run, producer)`` - a producer's own dataset
* ``("augment", size, run, producer)`` - its synthetic draws in learning mode
* ``("oos", run)`` - the evaluation scenarios, shared by all modes and sizes

so mode comparisons at a fixed run index are paired.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .equilibrium import tatonnement
from .evaluation import evaluate_out_of_sample
from .exceptions import NoConvergence, ProducerInfeasible
from .forecast import (
    dissimilarity_l2,
    draw_samples,
    fit_beta_mle,
    learn_and_augment,
    pool_datasets,
    summarize,
)
from .rng import derive_seed

log = logging.getLogger(__name__)

NAN = float("nan")


def private_seed(base_seed, sample_size, run_index, producer_index):
    return derive_seed(base_seed, "private", sample_size, run_index, producer_index)


def augment_seed(base_seed, sample_size, run_index, producer_index):
    return derive_seed(base_seed, "augment", sample_size, run_index, producer_index)


def oos_seed(base_seed, run_index):
    return derive_seed(base_seed, "oos", run_index)


@lru_cache(maxsize=8)
def _oos_dataset(dist, count, seed):
    return draw_samples(dist, count, seed)


def out_of_sample_set(config: ExperimentConfig, run_index: int):
    return _oos_dataset(config.distribution, config.oos_count, oos_seed(config.base_seed, run_index))


@dataclass(frozen=True)
class ExperimentRow:
    mode: str
    sample_size: int
    run_index: int
    producer_count: int
    converged: bool
    iterations: int
    lambda_e: float
    lambda_r: float
    p: tuple
    alpha: tuple
    variance: tuple
    w_lo: tuple
    w_hi: tuple
    payoffs: tuple
    reliability: float
    mean_cost: float
    cvar5: float
    alpha_hat: tuple | None = None
    beta_hat: tuple | None = None
    note: str = ""

    def csv_values(self):
        out = [self.mode, self.sample_size, self.run_index, self.producer_count,
               "true" if self.converged else "false", self.iterations,
               _fmt(self.lambda_e), _fmt(self.lambda_r)]
        for i in range(self.producer_count):
            out += [_fmt(self.p[i]), _fmt(self.alpha[i]), _fmt(self.variance[i]), _fmt(self.w_lo[i]), _fmt(self.w_hi[i])]
            if self.alpha_hat is not None:
                out += [_fmt(self.alpha_hat[i]), _fmt(self.beta_hat[i])]
            out.append(_fmt(self.payoffs[i]))
        out += [_fmt(self.reliability), _fmt(self.mean_cost), _fmt(self.cvar5)]
        return out


def _fmt(x):
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def row_header(producer_count: int, learning: bool):
    head = ["mode", "sample_size", "run", "producer_count", "converged", "iterations", "lambda_e", "lambda_r"]
    for i in range(1, producer_count + 1):
        head += [f"p_{i}", f"alpha_{i}", f"var_{i}", f"wlo_{i}", f"whi_{i}"]
        if learning:
            head += [f"ahat_{i}", f"bhat_{i}"]
        head.append(f"payoff_{i}")
    return head + ["reliability", "mean_cost", "cvar5"]


def producer_datasets(config: ExperimentConfig, sample_size: int, run_index: int):
    n = config.market.n_producers
    return [
        draw_samples(config.distribution, sample_size, private_seed(config.base_seed, sample_size, run_index, i))
        for i in range(n)
    ]


def summaries_for_mode(config: ExperimentConfig, datasets, sample_size: int, run_index: int):
    """Per-producer summaries (and beta fits in learning mode) from private datasets."""
    fits = None
    if config.mode == "sharing":
        pooled = summarize(pool_datasets(datasets))
        return [pooled] * len(datasets), None
    if config.mode == "learning":
        dist = config.distribution
        fits = [fit_beta_mle(d, dist.scale, dist.offset) for d in datasets]
        datasets = [
            learn_and_augment(d, f, config.augment_count, augment_seed(config.base_seed, sample_size, run_index, i))
            for i, (d, f) in enumerate(zip(datasets, fits))
        ]
    return [summarize(d) for d in datasets], fits


def _failed_row(config, sample_size, run_index, summaries, fits, note):
    n = config.market.n_producers
    nan_n = (NAN,) * n
    return ExperimentRow(
        mode=config.mode, sample_size=sample_size, run_index=run_index, producer_count=n,
        converged=False, iterations=0, lambda_e=NAN, lambda_r=NAN, p=nan_n, alpha=nan_n,
        variance=tuple(s.variance for s in summaries) if summaries else nan_n,
        w_lo=tuple(s.w_lo for s in summaries) if summaries else nan_n,
        w_hi=tuple(s.w_hi for s in summaries) if summaries else nan_n,
        payoffs=nan_n, reliability=NAN, mean_cost=NAN, cvar5=NAN,
        alpha_hat=_fit_field(config, fits, "alpha_hat"), beta_hat=_fit_field(config, fits, "beta_hat"),
        note=note,
    )


def _fit_field(config, fits, name):
    if config.mode != "learning":
        return None
    if fits is None:
        return (NAN,) * config.market.n_producers
    return tuple(getattr(f, name) for f in fits)


def run_single(config: ExperimentConfig, sample_size: int, run_index: int, trace_path=None) -> ExperimentRow:
    """One cell of the experiment grid.

    Reliability and cost statistics are filled whenever the energy market
    cleared; payoffs only when both markets converged, since an unsettled
    reserve price makes them meaningless.
    """
    datasets = producer_datasets(config, sample_size, run_index)
    try:
        summaries, fits = summaries_for_mode(config, datasets, sample_size, run_index)
    except NoConvergence as exc:
        log.warning("size %d run %d: %s", sample_size, run_index, exc)
        return _failed_row(config, sample_size, run_index, None, None, f"beta fit failed: {exc}")
    try:
        result = tatonnement(config.market, summaries, config.solver, trace_path=trace_path, trace_every=config.trace_every)
    except ProducerInfeasible as exc:
        log.warning("size %d run %d: %s", sample_size, run_index, exc)
        return _failed_row(config, sample_size, run_index, summaries, fits, str(exc))
    n = config.market.n_producers
    reliability = mean_cost = cvar5 = NAN
    payoffs = (NAN,) * n
    if result.energy_cleared:
        stats = evaluate_out_of_sample(config.market, result, out_of_sample_set(config, run_index), require_converged=False)
        reliability, mean_cost, cvar5 = stats.reliability, stats.mean_cost, stats.cvar5
        if result.converged:
            payoffs = tuple(float(v) for v in stats.payoffs_mean)
    return ExperimentRow(
        mode=config.mode, sample_size=sample_size, run_index=run_index, producer_count=n,
        converged=result.converged, iterations=result.iterations,
        lambda_e=result.prices.energy, lambda_r=result.prices.reserve,
        p=tuple(result.dispatch), alpha=tuple(result.alphas),
        variance=tuple(s.variance for s in summaries),
        w_lo=tuple(s.w_lo for s in summaries), w_hi=tuple(s.w_hi for s in summaries),
        payoffs=payoffs, reliability=reliability, mean_cost=mean_cost, cvar5=cvar5,
        alpha_hat=_fit_field(config, fits, "alpha_hat"), beta_hat=_fit_field(config, fits, "beta_hat"),
    )


def _cell(config, size, run):
    trace = None
    if config.trace_every:
        trace = config.output_dir / f"trace_{config.mode}_{size}_{run}.csv"
    return run_single(config, size, run, trace_path=trace)


def row_path(config):
    return config.output_dir / f"rows_{config.mode}.csv"


def aggregate_path(config):
    return config.output_dir / f"aggregate_{config.mode}.csv"


def run_experiment(config: ExperimentConfig, n_jobs: int = 1, progress=None):
    """Run the (sample_size x run) grid, writing rows as they finish.

    Returns ``(rows, aggregate)``; rows are sorted by (size, run).  The
    aggregate is computed from the row file as written, so the two files
    always agree.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    n = config.market.n_producers
    cells = [(s, r) for s in config.sample_sizes for r in range(config.runs)]
    rows = []
    path = row_path(config)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(row_header(n, config.mode == "learning"))
        fh.flush()

        def emit(row):
            rows.append(row)
            writer.writerow(row.csv_values())
            fh.flush()
            os.fsync(fh.fileno())
            if progress is not None:
                progress(row)

        if n_jobs == 1:
            for s, r in cells:
                emit(_cell(config, s, r))
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                futures = [pool.submit(_cell, config, s, r) for s, r in cells]
                for fut in as_completed(futures):
                    emit(fut.result())
    rows.sort(key=lambda row: (row.sample_size, row.run_index))
    table = aggregate_rows(read_rows(path))
    write_aggregate(table, aggregate_path(config))
    return rows, table


def read_rows(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    return float(v) if v not in ("", None) else NAN


def _stats(values, prefix):
    vals = np.array([v for v in values if not math.isnan(v)])
    if vals.size == 0:
        return {f"{prefix}_mean": NAN, f"{prefix}_min": NAN, f"{prefix}_max": NAN}
    return {f"{prefix}_mean": float(vals.mean()), f"{prefix}_min": float(vals.min()), f"{prefix}_max": float(vals.max())}


def aggregate_rows(rows):
    """Per-size summary of parsed row dicts (as read back from the row CSV).

    Empty cells are skipped: cost statistics average over runs whose
    energy market cleared, payoffs over fully converged runs.  The counts
    of both are reported.  Dissimilarities are the l2 distance between
    two producers' per-run estimate vectors.
    """
    if not rows:
        return []
    n = int(rows[0]["producer_count"])
    learning = "ahat_1" in rows[0]
    sizes = sorted({int(r["sample_size"]) for r in rows})
    table = []
    for size in sizes:
        group = sorted((r for r in rows if int(r["sample_size"]) == size), key=lambda r: int(r["run"]))
        out = {
            "mode": group[0]["mode"],
            "sample_size": size,
            "runs": len(group),
            "converged": sum(r["converged"] == "true" for r in group),
            "energy_cleared": sum(r["reliability"] != "" for r in group),
        }
        for key in ("reliability", "mean_cost", "cvar5"):
            out.update(_stats([_num(r[key]) for r in group], key))
        for i in range(1, n + 1):
            out.update(_stats([_num(r[f"payoff_{i}"]) for r in group], f"payoff_{i}"))
        estimates = {
            "var": lambda r, i: _num(r[f"var_{i}"]),
            "width": lambda r, i: _num(r[f"whi_{i}"]) - _num(r[f"wlo_{i}"]),
        }
        if learning:
            estimates["ahat"] = lambda r, i: _num(r[f"ahat_{i}"])
            estimates["bhat"] = lambda r, i: _num(r[f"bhat_{i}"])
        for name, get in estimates.items():
            for i, j in combinations(range(1, n + 1), 2):
                a = [get(r, i) for r in group]
                b = [get(r, j) for r in group]
                out[f"dis_{name}_{i}_{j}"] = dissimilarity_l2(a, b)
        table.append(out)
    return table


def write_aggregate(table, path):
    if not table:
        Path(path).write_text("")
        return
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0]))
        writer.writeheader()
        for row in table:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})


def with_mode(config: ExperimentConfig, mode: str) -> ExperimentConfig:
    return replace(config, mode=mode)
