"""Closed-form endpoint posterior over an empirical dataset.

With a standard normal source and x_t = alpha x0 + beta x1, the bridge
likelihood of endpoint x_n is N(x; beta x_n, alpha^2 I). Bayes' rule over the
dataset gives softmax weights, and the endpoint mean is the weighted average of
the points (a Nadaraya-Watson estimator with a Gaussian kernel).

All functions accept a single query of shape (d,) or a batch of shape (B, d)
and return results with the matching leading shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .bridge import LINEAR, AffineSchedule, coefficients, velocity_from_mean
from .errors import InputError

Temperature = Union[float, str]


@dataclass(frozen=True, eq=False)
class DataSet:
    """Immutable point cloud with optional integer labels and prior weights."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InputError(f"dataset needs shape (N>=1, d>=1), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("dataset contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != pts.shape[0]:
                raise InputError(f"{labels.shape[0]} labels for {pts.shape[0]} points")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != pts.shape[0]:
                raise InputError(f"{w.shape[0]} weights for {pts.shape[0]} points")
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise InputError("prior weights must be finite, nonnegative, with positive sum")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def prior(self) -> np.ndarray:
        """Normalized prior weights (uniform when none were given)."""
        n = len(self)
        if self.weights is None:
            return np.full(n, 1.0 / n)
        return self.weights / self.weights.sum()

    def subset(self, index) -> "DataSet":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        weights = None if self.weights is None else self.weights[index]
        return DataSet(self.points[index], labels, weights)

    def with_weights(self, weights) -> "DataSet":
        return DataSet(self.points, self.labels, weights)

    def classes(self) -> np.ndarray:
        if self.labels is None:
            raise InputError("dataset is unlabeled")
        return np.unique(self.labels)


@dataclass(frozen=True)
class PosteriorEstimate:
    weights: np.ndarray
    mean: np.ndarray
    log_marginal: Union[float, np.ndarray]
    t: float
    query: np.ndarray


def resolve_temperature(temperature: Temperature, dim: int) -> float:
    """Numeric temperature; the string "sqrt_d" maps to sqrt(dim)."""
    if isinstance(temperature, str):
        if temperature != "sqrt_d":
            raise InputError(f"unknown temperature {temperature!r}")
        return float(np.sqrt(dim))
    tau = float(temperature)
    if not tau > 0:
        raise InputError(f"temperature must be positive, got {temperature}")
    return tau


def _queries(x, data: DataSet) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != data.dim:
        raise InputError(f"query shape {x.shape} does not match dataset dim {data.dim}")
    return X, single


def _sq_dists(X: np.ndarray, data: DataSet, beta: float) -> np.ndarray:
    """||x - beta x_n||^2 for every query/point pair, shape (B, N)."""
    P = data.points
    sq = (
        np.einsum("bd,bd->b", X, X)[:, None]
        - 2.0 * beta * (X @ P.T)
        + beta * beta * np.einsum("nd,nd->n", P, P)[None, :]
    )
    return np.maximum(sq, 0.0)


def _log_prior(data: DataSet) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(data.prior)


def posterior_weights(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR,
                      temperature: Temperature = 1.0) -> np.ndarray:
    """Posterior probability of each dataset point being the endpoint of x at time t.

    w_n  ~  prior_n exp(-||x - beta_t x_n||^2 / (2 tau alpha_t^2)), normalized
    by a max-subtracted softmax.
    """
    X, single = _queries(x, data)
    tau = resolve_temperature(temperature, data.dim)
    co = coefficients(sched, t)
    logits = _log_prior(data)[None, :] - _sq_dists(X, data, co.beta) / (2.0 * tau * co.alpha ** 2)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if single else w


def endpoint_mean(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR,
                  temperature: Temperature = 1.0) -> np.ndarray:
    """E[x1 | x_t = x] under the empirical (prior-weighted) endpoint distribution."""
    return posterior_weights(x, t, data, sched, temperature) @ data.points


def empirical_velocity(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR,
                       temperature: Temperature = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return velocity_from_mean(x, endpoint_mean(x, t, data, sched, temperature), t, sched)


def log_marginal_density(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR):
    """log sum_n prior_n N(x; beta_t x_n, alpha_t^2 I), via log-sum-exp."""
    X, single = _queries(x, data)
    co = coefficients(sched, t)
    d = data.dim
    log_norm = -0.5 * d * np.log(2.0 * np.pi * co.alpha ** 2)
    terms = _log_prior(data)[None, :] - _sq_dists(X, data, co.beta) / (2.0 * co.alpha ** 2)
    out = logsumexp(terms, axis=1) + log_norm
    return float(out[0]) if single else out


def empirical_score(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR) -> np.ndarray:
    """grad_x log p_t(x) = (beta_t mu_t(x) - x) / alpha_t^2, with unit temperature."""
    x = np.asarray(x, dtype=float)
    co = coefficients(sched, t)
    mu = endpoint_mean(x, t, data, sched, 1.0)
    return (co.beta * mu - x) / co.alpha ** 2


def posterior(x, t: float, data: DataSet, sched: AffineSchedule = LINEAR,
              temperature: Temperature = 1.0) -> PosteriorEstimate:
    w = posterior_weights(x, t, data, sched, temperature)
    return PosteriorEstimate(
        weights=w,
        mean=w @ data.points,
        log_marginal=log_marginal_density(x, t, data, sched),
        t=float(t),
        query=np.asarray(x, dtype=float),
    )


class EmpiricalPosterior:
    """Mean provider backed by the closed-form posterior over a dataset."""

    def __init__(self, data: DataSet, sched: AffineSchedule = LINEAR, temperature: Temperature = 1.0):
        self.data = data
        self.sched = sched
        self.temperature = resolve_temperature(temperature, data.dim)

    def mean(self, x, t: float) -> np.ndarray:
        return endpoint_mean(x, t, self.data, self.sched, self.temperature)

    def velocity(self, x, t: float) -> np.ndarray:
        return empirical_velocity(x, t, self.data, self.sched, self.temperature)

    def __call__(self, x, t: float) -> np.ndarray:
        return self.velocity(x, t)
