"""``ccmkt`` command line: run experiments, solve one equilibrium, validate configs."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import MODES, default_config, load_config, validate_config
from .equilibrium import TatonnementSettings, tatonnement
from .exceptions import CcmktError, ConfigError
from .experiment import aggregate_path, producer_datasets, row_path, run_experiment, summaries_for_mode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _sizes(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="ccmkt", description="Chance-constrained energy and reserve market experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--rho", type=float, help="price step (overrides solver.rho)")
        p.add_argument("--max-iter", type=int, help="iteration cap (overrides solver.max_iter)")

    run = sub.add_parser("run", help="run the experiment grid and write row/aggregate CSVs")
    run.add_argument("--config", help="YAML config; defaults to the built-in two-producer system")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--seed", type=_u64)
    run.add_argument("--runs", type=int)
    run.add_argument("--oos", type=int)
    run.add_argument("--sizes", type=_sizes)
    run.add_argument("--out")
    run.add_argument("--trace-every", type=int)
    run.add_argument("--jobs", type=int, default=1, help="worker processes for grid cells")
    solver_flags(run)

    solve = sub.add_parser("solve", help="print one equilibrium (first sample size, run 0)")
    solve.add_argument("--config")
    solve.add_argument("--mode", choices=MODES)
    solve.add_argument("--seed", type=_u64)
    solver_flags(solve)

    val = sub.add_parser("validate", help="parse a config and list warnings")
    val.add_argument("--config", required=True)
    return parser


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    solver = cfg.solver
    if getattr(args, "rho", None) is not None or getattr(args, "max_iter", None) is not None:
        try:
            solver = TatonnementSettings(
                rho=args.rho if args.rho is not None else solver.rho,
                tol=solver.tol,
                max_iter=args.max_iter if args.max_iter is not None else solver.max_iter,
                initial_prices=solver.initial_prices,
                alpha_regularization=solver.alpha_regularization,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg.with_overrides(
        mode=getattr(args, "mode", None),
        base_seed=getattr(args, "seed", None),
        runs=getattr(args, "runs", None),
        oos_count=getattr(args, "oos", None),
        sample_sizes=getattr(args, "sizes", None),
        output_dir=getattr(args, "out", None),
        trace_every=getattr(args, "trace_every", None),
        solver=solver,
    )


def _cmd_run(args):
    cfg = _load(args)
    for w in validate_config(cfg):
        logging.getLogger("ccmkt").info("config: %s", w)

    def progress(row):
        print(f"size={row.sample_size} run={row.run_index} converged={row.converged} "
              f"iterations={row.iterations} reliability={row.reliability:.4f}", file=sys.stderr)

    _, table = run_experiment(cfg, n_jobs=args.jobs, progress=progress)
    for agg in table:
        print(f"size={agg['sample_size']} runs={agg['runs']} converged={agg['converged']} "
              f"energy_cleared={agg['energy_cleared']} reliability={agg['reliability_mean']:.4f} "
              f"mean_cost={agg['mean_cost_mean']:.2f} cvar5={agg['cvar5_mean']:.2f}")
    print(f"rows: {row_path(cfg)}")
    print(f"aggregate: {aggregate_path(cfg)}")
    return EXIT_OK


def _cmd_solve(args):
    cfg = _load(args)
    size = cfg.sample_sizes[0]
    datasets = producer_datasets(cfg, size, 0)
    summaries, _ = summaries_for_mode(cfg, datasets, size, 0)
    res = tatonnement(cfg.market, summaries, cfg.solver)
    for i, (d, s) in enumerate(zip(res.decisions, summaries), 1):
        print(f"producer {i}: p={d.p:.6f} alpha={d.alpha:.6f} var={s.variance:.6f} support=[{s.w_lo:.6f}, {s.w_hi:.6f}]")
    print(f"prices: energy={res.prices.energy:.6f} reserve={res.prices.reserve:.6f}")
    print(f"residuals: energy={res.energy_residual:.3e} reserve={res.reserve_residual:.3e}")
    print(f"iterations={res.iterations} converged={res.converged}")
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_config(args.config)
    warnings = validate_config(cfg)
    for w in warnings:
        print(f"warning: {w}")
    print(f"ok: {cfg.market.n_producers} producers, mode={cfg.mode}, sizes={list(cfg.sample_sizes)}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "solve": _cmd_solve, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CcmktError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
