"""scikit-learn style wrappers around the functional API.

Sample matrices follow the usual layout: rows are forecast-error samples
and column ``i`` is producer ``i``'s private dataset.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import DEFAULTS, config_from_dict
from .equilibrium import TatonnementSettings, clear_market, tatonnement
from .evaluation import evaluate_out_of_sample, redispatch_batch
from .forecast import ForecastDataset, fit_beta_mle, learn_and_augment, pool_datasets, summarize
from .rng import derive_seed


def _default_market():
    return config_from_dict({"market": DEFAULTS["market"]}).market


def _scenarios(X):
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"scenarios must be a vector or a single column, got shape {X.shape}")
        X = X[:, 0]
    return X


class MarketEquilibrium(BaseEstimator):
    """Clear the day-ahead market from per-producer sample columns.

    ``method="tatonnement"`` iterates prices; ``method="clear_market"``
    solves the joint clearing problem directly (same fixed point).
    ``share=True`` pools all columns before summarizing.
    """

    def __init__(self, market=None, method="tatonnement", share=False, rho=1.0, tol=1e-3, max_iter=100_000):
        self.market = market
        self.method = method
        self.share = share
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        market = self.market if self.market is not None else _default_market()
        if X.shape[1] != market.n_producers:
            raise ValueError(f"X has {X.shape[1]} columns but the market has {market.n_producers} producers")
        datasets = [ForecastDataset(X[:, i]) for i in range(X.shape[1])]
        if self.share:
            summaries = [summarize(pool_datasets(datasets))] * len(datasets)
        else:
            summaries = [summarize(d) for d in datasets]
        if self.method == "tatonnement":
            settings = TatonnementSettings(rho=self.rho, tol=self.tol, max_iter=self.max_iter)
            result = tatonnement(market, summaries, settings)
        elif self.method == "clear_market":
            result = clear_market(market, summaries)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.market_ = market
        self.summaries_ = summaries
        self.result_ = result
        self.dispatch_ = result.dispatch
        self.alphas_ = result.alphas
        self.prices_ = result.prices
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Total re-dispatch cost of each scenario."""
        check_is_fitted(self, "result_")
        return redispatch_batch(self.market_, self.dispatch_, _scenarios(X))[3]

    def score(self, X, y=None):
        """Reliability: fraction of scenarios settled without spillage or shedding."""
        check_is_fitted(self, "result_")
        stats = evaluate_out_of_sample(self.market_, self.result_, _scenarios(X), require_converged=False)
        return stats.reliability


class BetaAugmenter(TransformerMixin, BaseEstimator):
    """Fit a scaled beta to each column and append synthetic draws."""

    def __init__(self, scale=65.0, offset=65.0 / 3.0, generated_count=1000, seed=0):
        self.scale = scale
        self.offset = offset
        self.generated_count = generated_count
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.fits_ = [fit_beta_mle(ForecastDataset(X[:, i]), self.scale, self.offset) for i in range(X.shape[1])]
        self.alpha_hat_ = np.array([f.alpha_hat for f in self.fits_])
        self.beta_hat_ = np.array([f.beta_hat for f in self.fits_])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "fits_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        cols = [
            learn_and_augment(ForecastDataset(X[:, i]), f, self.generated_count, derive_seed(self.seed, i)).samples
            for i, f in enumerate(self.fits_)
        ]
        return np.column_stack(cols)
