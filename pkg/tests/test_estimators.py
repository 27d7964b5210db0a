import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ccmkt.equilibrium import clear_market
from ccmkt.estimators import BetaAugmenter, MarketEquilibrium
from ccmkt.forecast import Normal, ScaledBeta, draw_samples, summarize


def columns(dist, n, seeds):
    return np.column_stack([draw_samples(dist, n, s).samples for s in seeds])


def test_params_and_clone():
    est = MarketEquilibrium(rho=0.5, share=True)
    assert est.get_params()["rho"] == 0.5
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_fit_predict_score(market):
    X = columns(Normal(50), 30, [1, 2])
    est = MarketEquilibrium(market=market, tol=1e-7, max_iter=1_000_000).fit(X)
    ref = clear_market(market, [summarize(draw_samples(Normal(50), 30, s)) for s in (1, 2)])
    np.testing.assert_allclose(est.dispatch_, ref.dispatch, atol=1e-3)
    w = draw_samples(Normal(50), 500, 9).samples
    costs = est.predict(w)
    assert costs.shape == (500,) and np.all(costs > 0)
    assert 0 <= est.score(w.reshape(-1, 1)) <= 1


def test_clear_market_method_and_sharing(market):
    X = columns(Normal(50), 10, [3, 4])
    a = MarketEquilibrium(market=market, method="clear_market", share=True).fit(X)
    np.testing.assert_allclose(a.summaries_[0].variance, a.summaries_[1].variance)
    with pytest.raises(ValueError):
        MarketEquilibrium(method="magic").fit(X)


def test_not_fitted_and_shape_checks(market):
    with pytest.raises(NotFittedError):
        MarketEquilibrium().predict([0.0])
    with pytest.raises(ValueError):
        MarketEquilibrium(market=market).fit(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        MarketEquilibrium(market=market).fit([[np.nan, 0.0]])


def test_beta_augmenter():
    d = ScaledBeta(5, 10, 65)
    X = columns(d, 200, [5, 6])
    aug = BetaAugmenter(scale=65.0, offset=d.offset, generated_count=300, seed=1)
    out = aug.fit_transform(X)
    assert out.shape == (500, 2)
    np.testing.assert_array_equal(out[:200], X)
    assert np.all(np.abs(aug.alpha_hat_ - 5) < 2) and np.all(np.abs(aug.beta_hat_ - 10) < 4)
    with pytest.raises(NotFittedError):
        BetaAugmenter().transform(X)
