"""Chance-constrained energy and reserve markets with sample-based forecasts."""

from .config import ExperimentConfig, default_config, load_config
from .equilibrium import (
    EquilibriumResult,
    TatonnementSettings,
    centralized_dispatch,
    clear_market,
    tatonnement,
)
from .evaluation import (
    RedispatchOutcome,
    RunStatistics,
    cvar,
    evaluate_out_of_sample,
    payoff_per_scenario,
    redispatch,
)
from .exceptions import CcmktError
from .experiment import run_experiment, run_single
from .forecast import (
    BetaFit,
    ForecastDataset,
    Normal,
    ScaledBeta,
    dissimilarity_l2,
    draw_samples,
    fit_beta_mle,
    learn_and_augment,
    pool_datasets,
    summarize,
)
from .market import (
    ForecastSummary,
    MarketConfig,
    Prices,
    ProducerDecision,
    ProducerParams,
    best_response,
)
from .qp import QpProblem, QpSolution, solve_qp

__version__ = "0.1.0"

__all__ = [
    "BetaFit", "CcmktError", "EquilibriumResult", "ExperimentConfig", "ForecastDataset", "ForecastSummary",
    "MarketConfig", "Normal", "Prices", "ProducerDecision", "ProducerParams", "QpProblem",
    "QpSolution", "RedispatchOutcome", "RunStatistics", "ScaledBeta", "TatonnementSettings",
    "best_response", "centralized_dispatch", "clear_market", "cvar", "default_config", "dissimilarity_l2",
    "draw_samples", "evaluate_out_of_sample", "fit_beta_mle", "learn_and_augment", "load_config",
    "payoff_per_scenario", "pool_datasets", "redispatch", "run_experiment", "run_single", "solve_qp", "summarize", "tatonnement",
]
