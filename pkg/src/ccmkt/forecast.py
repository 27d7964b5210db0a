"""Forecast-error samples: generation, summaries and beta learning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betaln, digamma, polygamma

from . import rng
from .exceptions import EmptyDataset, LengthMismatch, NoConvergence, OutOfSupport
from .market import ForecastSummary

BOUNDARY_NUDGE = 1e-9
MLE_GRAD_TOL = 1e-10
MLE_MAX_ITER = 200


@dataclass(frozen=True)
class Normal:
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def kind(self):
        return "normal"


@dataclass(frozen=True)
class ScaledBeta:
    """``scale * B`` with ``B ~ Beta(alpha_shape, beta_shape)``, optionally shifted to zero mean."""

    alpha_shape: float
    beta_shape: float
    scale: float
    centered: bool = True

    def __post_init__(self):
        if min(self.alpha_shape, self.beta_shape, self.scale) <= 0:
            raise ValueError("beta shapes and scale must be positive")

    @property
    def kind(self):
        return "scaled_beta"

    @property
    def offset(self):
        """Shift added to a sample to land back on ``[0, scale]``."""
        if not self.centered:
            return 0.0
        return self.scale * self.alpha_shape / (self.alpha_shape + self.beta_shape)

    @property
    def variance(self):
        a, b = self.alpha_shape, self.beta_shape
        return self.scale**2 * a * b / ((a + b) ** 2 * (a + b + 1))


ErrorDistribution = Normal | ScaledBeta


@dataclass(frozen=True)
class ForecastDataset:
    samples: np.ndarray
    seed_label: int = 0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class BetaFit:
    alpha_hat: float
    beta_hat: float
    scale: float
    offset: float

    def __post_init__(self):
        if self.alpha_hat <= 0 or self.beta_hat <= 0:
            raise ValueError("beta estimates must be positive")

    def distribution(self):
        return ScaledBeta(self.alpha_hat, self.beta_hat, self.scale, centered=self.offset != 0.0)


def _sample_dist(dist, key, index):
    if isinstance(dist, Normal):
        return np.sqrt(dist.variance) * rng.standard_normals(key, index)
    if isinstance(dist, ScaledBeta):
        return dist.scale * rng.betas(key, index, dist.alpha_shape, dist.beta_shape) - dist.offset
    raise TypeError(f"unknown distribution {dist!r}")


def draw_samples(dist, count: int, seed: int) -> ForecastDataset:
    """Draw ``count`` i.i.d. errors; sample ``j`` depends only on ``(seed, j)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    return ForecastDataset(_sample_dist(dist, seed, np.arange(count)), seed_label=seed)


def summarize(dataset: ForecastDataset) -> ForecastSummary:
    """Population variance and the sample support, widened to contain 0.

    Sums are exactly rounded (``math.fsum``), so pooling a dataset with a
    copy of itself leaves the summary bitwise unchanged.
    """
    s = dataset.samples
    if s.size == 0:
        raise EmptyDataset("cannot summarize an empty dataset")
    mean = math.fsum(s) / s.size
    return ForecastSummary(
        variance=math.fsum((s - mean) ** 2) / s.size,
        w_lo=min(0.0, float(s.min())),
        w_hi=max(0.0, float(s.max())),
    )


def beta_moment_init(mean: float, var: float):
    """Method-of-moments beta shapes for a given mean and variance on (0, 1).

    Plain arithmetic, so ``fractions.Fraction`` inputs give exact shapes.
    """
    if var <= 0 or not 0 < mean < 1 or var >= mean * (1 - mean):
        raise NoConvergence(f"no beta distribution has mean {mean} and variance {var}")
    common = mean * (1 - mean) / var - 1
    return mean * common, (1 - mean) * common


def _to_unit_interval(dataset, scale, offset):
    u = (dataset.samples + offset) / scale
    if u.size == 0:
        raise EmptyDataset("cannot fit an empty dataset")
    if np.any(u < 0.0) or np.any(u > 1.0):
        bad = u[(u < 0) | (u > 1)][0]
        raise OutOfSupport(f"rescaled sample {bad:.6g} lies outside [0, 1]; check scale/offset")
    return np.clip(u, BOUNDARY_NUDGE, 1.0 - BOUNDARY_NUDGE)


def fit_beta_mle(dataset: ForecastDataset, scale: float, offset: float) -> BetaFit:
    """Maximum likelihood beta shapes with the scale and offset held fixed.

    Newton's method on the two digamma stationarity equations, started from
    the method-of-moments estimate.  The log-likelihood is strictly concave
    in the shapes, so steps are halved until they stay positive and do not
    decrease it.
    """
    u = _to_unit_interval(dataset, scale, offset)
    n = u.size
    mean_log = float(np.mean(np.log(u)))
    mean_log1m = float(np.mean(np.log1p(-u)))
    a, b = beta_moment_init(float(np.mean(u)), float(np.var(u)))

    def loglik(a, b):
        return (a - 1) * mean_log + (b - 1) * mean_log1m - betaln(a, b)

    for _ in range(MLE_MAX_ITER):
        dab = digamma(a + b)
        g = np.array([dab - digamma(a) + mean_log, dab - digamma(b) + mean_log1m])
        if not np.all(np.isfinite(g)):
            break
        if np.max(np.abs(g)) < MLE_GRAD_TOL:
            return BetaFit(float(a), float(b), scale, offset)
        t = polygamma(1, a + b)
        H = np.array([[t - polygamma(1, a), t], [t, t - polygamma(1, b)]])
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        current = loglik(a, b)
        lam = 1.0
        while lam > 1e-12:
            na, nb = a + lam * step[0], b + lam * step[1]
            if na > 0 and nb > 0 and loglik(na, nb) >= current - 1e-12 * abs(current):
                break
            lam *= 0.5
        else:
            break
        a, b = na, nb
    raise NoConvergence(f"beta MLE did not converge from {n} samples")


def learn_and_augment(dataset: ForecastDataset, fit: BetaFit, generated_count: int, seed: int) -> ForecastDataset:
    """Append ``generated_count`` draws from the fitted scaled beta."""
    if generated_count < 0:
        raise ValueError("generated_count must be non-negative")
    if generated_count == 0:
        return dataset
    synthetic = fit.scale * rng.betas(seed, np.arange(generated_count), fit.alpha_hat, fit.beta_hat) - fit.offset
    return ForecastDataset(np.concatenate([dataset.samples, synthetic]), seed_label=dataset.seed_label)


def pool_datasets(datasets) -> ForecastDataset:
    """Concatenate datasets in producer order."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("nothing to pool")
    return ForecastDataset(np.concatenate([d.samples for d in datasets]), seed_label=datasets[0].seed_label)


def dissimilarity_l2(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"vectors of length {a.size} and {b.size}")
    return float(np.linalg.norm(a - b))


def save_dataset(dataset: ForecastDataset, path) -> None:
    Path(path).write_text("".join(f"{v:.17g}\n" for v in dataset.samples))


def load_dataset(path, seed_label: int = 0) -> ForecastDataset:
    values = [float(line) for line in Path(path).read_text().split() if line]
    return ForecastDataset(np.array(values), seed_label=seed_label)
