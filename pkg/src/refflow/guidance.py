"""Reference-mean guidance: schedules, guided means and guided velocity fields.

The guided velocity adds a mean-shift correction to any base flow,

    u_guided(x, t) = u_base(x, t) + gamma_t c_t (mu_ref(x, t) - mu_base(x, t)),

where mu_ref is the closed-form endpoint mean over a reference set. The
strength schedule is written gamma_t here to keep it apart from the bridge
coefficient beta_t.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np
from scipy.special import expit

from .bridge import LINEAR, AffineSchedule, coefficients
from .errors import InputError
from .posterior import DataSet, Temperature, endpoint_mean, log_marginal_density

DEFAULT_CUTOFF = 0.85


class MeanProvider(Protocol):
    """Anything that yields an endpoint mean and the matching velocity."""

    def mean(self, x, t: float) -> np.ndarray: ...

    def velocity(self, x, t: float) -> np.ndarray: ...


class GuidanceKind(str, Enum):
    CONSTANT = "constant"
    QUADRATIC_DECAY = "quadratic_decay"
    BELL = "bell"


@dataclass(frozen=True)
class GuidanceSpec:
    kind: GuidanceKind = GuidanceKind.QUADRATIC_DECAY
    gamma0: float = 1.0
    cutoff: float = DEFAULT_CUTOFF
    temperature: Temperature = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GuidanceKind(self.kind))
        if not self.gamma0 >= 0:
            raise InputError(f"guidance strength must be >= 0, got {self.gamma0}")
        if not 0.0 < self.cutoff <= 1.0:
            raise InputError(f"cutoff must lie in (0, 1], got {self.cutoff}")


def schedule_value(spec: GuidanceSpec, t: float) -> float:
    """Guidance strength gamma_t; zero from the cutoff onward."""
    if t >= spec.cutoff:
        return 0.0
    g = spec.gamma0
    if spec.kind is GuidanceKind.CONSTANT:
        return g
    if spec.kind is GuidanceKind.QUADRATIC_DECAY:
        return g * (1.0 - t) ** 2
    return 4.0 * g * t * (1.0 - t)


def guided_mean(mu_base, mu_ref, gamma: float) -> np.ndarray:
    mu_base = np.asarray(mu_base, dtype=float)
    mu_ref = np.asarray(mu_ref, dtype=float)
    if mu_base.shape != mu_ref.shape:
        raise InputError(f"dimension mismatch: {mu_base.shape} vs {mu_ref.shape}")
    return (1.0 - gamma) * mu_base + gamma * mu_ref


def guidance_gain(spec: GuidanceSpec, t: float, sched: AffineSchedule = LINEAR) -> float:
    """gamma_t * c_t, the factor multiplying the mean difference."""
    g = schedule_value(spec, t)
    if g == 0.0:
        return 0.0
    return g * coefficients(sched, t).c


def rmg_velocity(x, t: float, base: MeanProvider, reference: DataSet, spec: GuidanceSpec,
                 sched: AffineSchedule = LINEAR) -> np.ndarray:
    """Base velocity plus the reference-mean correction at (x, t)."""
    u = base.velocity(x, t)
    gain = guidance_gain(spec, t, sched)
    if gain == 0.0:
        return u
    mu_ref = endpoint_mean(x, t, reference, sched, spec.temperature)
    return u + gain * (mu_ref - base.mean(x, t))


class RmgField:
    """Guided velocity field usable directly by the sampler.

    If `record_gains` is set, each evaluation appends (t, gamma_t c_t).
    """

    def __init__(self, base: MeanProvider, reference: DataSet, spec: GuidanceSpec,
                 sched: AffineSchedule = LINEAR, record_gains: bool = False):
        self.base = base
        self.reference = reference
        self.spec = spec
        self.sched = sched
        self.gains: list[tuple[float, float]] | None = [] if record_gains else None

    def __call__(self, x, t: float) -> np.ndarray:
        if self.gains is not None:
            self.gains.append((float(t), guidance_gain(self.spec, t, self.sched)))
        return rmg_velocity(x, t, self.base, self.reference, self.spec, self.sched)


@dataclass(frozen=True, eq=False)
class ArithmeticMixture:
    """(1 - lam) * train + lam * reference, mixed at the endpoint level."""

    lam: float
    train: DataSet
    reference: DataSet

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"mixture weight must lie in [0, 1], got {self.lam}")
        if self.train.dim != self.reference.dim:
            raise InputError("train and reference sets differ in dimension")

    @classmethod
    def union(cls, train: DataSet, reference: DataSet) -> "ArithmeticMixture":
        """Weight that makes the mixture uniform over the pooled points."""
        n, m = len(train), len(reference)
        return cls(m / (n + m), train, reference)


def arithmetic_weight(mix: ArithmeticMixture, x, t: float, sched: AffineSchedule = LINEAR):
    """Exact posterior probability that the endpoint came from the reference part."""
    if mix.lam == 0.0 or mix.lam == 1.0:
        coefficients(sched, t)
        x = np.asarray(x, dtype=float)
        return mix.lam if x.ndim == 1 else np.full(x.shape[0], mix.lam)
    log_rho = log_marginal_density(x, t, mix.reference, sched)
    log_p = log_marginal_density(x, t, mix.train, sched)
    return expit(np.log(mix.lam) + log_rho - np.log1p(-mix.lam) - log_p)


def arithmetic_guided_mean(mix: ArithmeticMixture, x, t: float, sched: AffineSchedule = LINEAR,
                           temperature: Temperature = 1.0, weight: float | None = None) -> np.ndarray:
    """Posterior mean of the arithmetic mixture: state-dependent blend of the two means.

    Passing a constant `weight` replaces the exact state-dependent weight, which
    turns the blend into the scalar-schedule guided mean.
    """
    x = np.asarray(x, dtype=float)
    if weight is not None:
        mu = endpoint_mean(x, t, mix.train, sched, temperature)
        mu_ref = endpoint_mean(x, t, mix.reference, sched, temperature)
        return guided_mean(mu, mu_ref, weight)
    if mix.lam == 0.0:
        return endpoint_mean(x, t, mix.train, sched, temperature)
    if mix.lam == 1.0:
        return endpoint_mean(x, t, mix.reference, sched, temperature)
    omega = np.asarray(arithmetic_weight(mix, x, t, sched))
    mu = endpoint_mean(x, t, mix.train, sched, temperature)
    mu_ref = endpoint_mean(x, t, mix.reference, sched, temperature)
    if omega.ndim == 1:
        omega = omega[:, None]
    return (1.0 - omega) * mu + omega * mu_ref

