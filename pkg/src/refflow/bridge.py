"""Affine bridges x_t = alpha(t) x0 + beta(t) x1 and the velocity/mean duality.

For a bridge with standard normal source, the marginal velocity is affine in
the endpoint mean:

    u_t(x) = a_t x + c_t mu_t(x),   a_t = alpha'/alpha,   c_t = beta' - beta alpha'/alpha

which for the linear bridge reads u = (mu - x) / (1 - t).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import InputError, SingularityError

EPS_MIN = 1e-6
ALPHA_FLOOR = 1e-12
_ENDPOINT_TOL = 1e-12

ScalarFn = Callable[[float], float]


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    CUSTOM = "custom"


class Coefficients(NamedTuple):
    alpha: float
    beta: float
    dalpha: float
    dbeta: float
    a: float
    c: float


@dataclass(frozen=True)
class AffineSchedule:
    """Bridge coefficients alpha(t), beta(t) with caller-supplied derivatives.

    Custom schedules are validated on construction: endpoint conditions
    alpha(0)=1, beta(0)=0, alpha(1)=0, beta(1)=1 and alpha > 0 on a grid over
    [0, 1 - EPS_MIN].
    """

    kind: ScheduleKind = ScheduleKind.LINEAR
    alpha: Optional[ScalarFn] = field(default=None, compare=False)
    beta: Optional[ScalarFn] = field(default=None, compare=False)
    dalpha: Optional[ScalarFn] = field(default=None, compare=False)
    dbeta: Optional[ScalarFn] = field(default=None, compare=False)

    def __post_init__(self):
        kind = ScheduleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ScheduleKind.LINEAR:
            return
        fns = (self.alpha, self.beta, self.dalpha, self.dbeta)
        if any(f is None for f in fns):
            raise InputError("custom schedule needs alpha, beta, dalpha and dbeta")
        checks = (
            (self.alpha(0.0), 1.0, "alpha(0)"),
            (self.beta(0.0), 0.0, "beta(0)"),
            (self.alpha(1.0), 0.0, "alpha(1)"),
            (self.beta(1.0), 1.0, "beta(1)"),
        )
        for got, want, name in checks:
            if abs(got - want) > _ENDPOINT_TOL:
                raise InputError(f"{name} = {got!r}, expected {want}")
        grid = np.linspace(0.0, 1.0 - EPS_MIN, 1001)
        if min(self.alpha(float(t)) for t in grid) <= 0.0:
            raise InputError("alpha(t) must be positive on [0, 1 - eps_min]")

    @classmethod
    def linear(cls) -> "AffineSchedule":
        return cls(ScheduleKind.LINEAR)

    @classmethod
    def custom(cls, alpha: ScalarFn, beta: ScalarFn, dalpha: ScalarFn, dbeta: ScalarFn) -> "AffineSchedule":
        return cls(ScheduleKind.CUSTOM, alpha, beta, dalpha, dbeta)

    def alpha_beta(self, t: float) -> tuple[float, float]:
        if self.kind is ScheduleKind.LINEAR:
            return 1.0 - t, t
        return float(self.alpha(t)), float(self.beta(t))


LINEAR = AffineSchedule.linear()


def _check_time(t: float, upper: float = 1.0) -> float:
    t = float(t)
    if not (0.0 <= t <= upper):
        raise InputError(f"time {t} outside [0, {upper}]")
    return t


def interpolate(x0, x1, t: float, sched: AffineSchedule = LINEAR) -> np.ndarray:
    """Point on the bridge between source x0 and endpoint x1 at time t."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.shape != x1.shape:
        raise InputError(f"dimension mismatch: {x0.shape} vs {x1.shape}")
    t = _check_time(t)
    if sched.kind is ScheduleKind.LINEAR:
        if t == 0.0:
            return x0.copy()
        if t == 1.0:
            return x1.copy()
    alpha, beta = sched.alpha_beta(t)
    return alpha * x0 + beta * x1


def coefficients(sched: AffineSchedule, t: float) -> Coefficients:
    """(alpha, beta, alpha', beta', a, c) at time t."""
    t = _check_time(t)
    if 1.0 - t < EPS_MIN * (1.0 - 1e-9):
        raise SingularityError(f"t = {t} is within eps_min = {EPS_MIN} of 1")
    if sched.kind is ScheduleKind.LINEAR:
        alpha, beta, dalpha, dbeta = 1.0 - t, t, -1.0, 1.0
    else:
        alpha, beta = sched.alpha_beta(t)
        dalpha, dbeta = float(sched.dalpha(t)), float(sched.dbeta(t))
    if alpha <= ALPHA_FLOOR:
        raise SingularityError(f"alpha({t}) = {alpha} is too small")
    a = dalpha / alpha
    # closed form on the linear bridge keeps c = -a exactly
    c = 1.0 / alpha if sched.kind is ScheduleKind.LINEAR else dbeta - beta * a
    return Coefficients(alpha, beta, dalpha, dbeta, a, c)


def velocity_from_mean(x, mean, t: float, sched: AffineSchedule = LINEAR) -> np.ndarray:
    """u = a_t x + c_t mean; for the linear bridge (mean - x) / (1 - t)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != mean.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {mean.shape}")
    co = coefficients(sched, t)
    if sched.kind is ScheduleKind.LINEAR:
        return (mean - x) / co.alpha  # exact zero at the fixed point x = mean
    return co.a * x + co.c * mean


def mean_from_velocity(x, u, t: float, sched: AffineSchedule = LINEAR) -> np.ndarray:
    """Inverse of velocity_from_mean: (u - a_t x) / c_t."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {u.shape}")
    co = coefficients(sched, t)
    if co.c == 0.0:
        raise SingularityError(f"c_t vanishes at t = {t}")
    if sched.kind is ScheduleKind.LINEAR:
        return x + (1.0 - float(t)) * u
    return (u - co.a * x) / co.c
