"""Slow, independent reference computations used to check the fast code paths.

Nothing here shares code with the implementations under test: weights are
evaluated as raw Gaussian densities in extended precision, gradients by
central differences, means by explicit loops.
"""
from __future__ import annotations

from typing import Callable, Sequence

import mpmath
import numpy as np

mpmath.mp.dps = 40


def rel_err(approx, exact, floor: float = 1e-300) -> float:
    """max_i |a_i - e_i| / max(|a_i|, |e_i|, floor)."""
    a = np.asarray(approx, dtype=float)
    e = np.asarray(exact, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(e)), floor)
    return float(np.max(np.abs(a - e) / scale))


def gaussian_bayes_weights(x, points, prior, alpha: float, beta: float, tau: float = 1.0) -> np.ndarray:
    """Posterior over endpoints from explicit Gaussian likelihoods in 40-digit arithmetic.

    p(n | x) = prior_n N(x; beta x_n, tau alpha^2 I) / sum_m prior_m N(x; beta x_m, tau alpha^2 I)
    """
    x = [mpmath.mpf(float(v)) for v in np.asarray(x, dtype=float)]
    d = len(x)
    var = mpmath.mpf(tau) * mpmath.mpf(alpha) ** 2
    norm = (2 * mpmath.pi * var) ** (-mpmath.mpf(d) / 2)
    dens = []
    for p, pi in zip(np.asarray(points, dtype=float), np.asarray(prior, dtype=float)):
        sq = mpmath.fsum((xi - mpmath.mpf(beta) * mpmath.mpf(float(pk))) ** 2 for xi, pk in zip(x, p))
        dens.append(mpmath.mpf(float(pi)) * norm * mpmath.exp(-sq / (2 * var)))
    total = mpmath.fsum(dens)
    return np.array([float(v / total) for v in dens])


def gaussian_mixture_log_density(x, points, prior, alpha: float, beta: float) -> float:
    """log sum_n prior_n N(x; beta x_n, alpha^2 I) in extended precision."""
    x = [mpmath.mpf(float(v)) for v in np.asarray(x, dtype=float)]
    d = len(x)
    var = mpmath.mpf(alpha) ** 2
    norm = (2 * mpmath.pi * var) ** (-mpmath.mpf(d) / 2)
    total = mpmath.mpf(0)
    for p, pi in zip(np.asarray(points, dtype=float), np.asarray(prior, dtype=float)):
        sq = mpmath.fsum((xi - mpmath.mpf(beta) * mpmath.mpf(float(pk))) ** 2 for xi, pk in zip(x, p))
        total += mpmath.mpf(float(pi)) * norm * mpmath.exp(-sq / (2 * var))
    return float(mpmath.log(total))


def weighted_average(weights, points) -> np.ndarray:
    """Explicit loop sum_n w_n x_n."""
    points = np.asarray(points, dtype=float)
    out = np.zeros(points.shape[1])
    for w, p in zip(weights, points):
        out += w * p
    return out


def pooled_kernel_mean(x, t: float, sets: Sequence[np.ndarray]) -> np.ndarray:
    """Nadaraya-Watson endpoint mean over the union of several point sets (linear bridge)."""
    pooled = np.vstack([np.asarray(s, dtype=float) for s in sets])
    w = gaussian_bayes_weights(x, pooled, np.full(len(pooled), 1.0 / len(pooled)), 1.0 - t, t)
    return weighted_average(w, pooled)


def central_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def param_gradients(loss: Callable[[], float], arrays: dict, h: float = 1e-5) -> dict:
    """Central differences of loss() w.r.t. every entry of every array, perturbing in place."""
    out = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        for i in range(arr.size):
            old = arr.flat[i]
            arr.flat[i] = old + h
            up = loss()
            arr.flat[i] = old - h
            down = loss()
            arr.flat[i] = old
            g.flat[i] = (up - down) / (2.0 * h)
        out[name] = g
    return out


def grad_rel_err(analytic: dict, numeric: dict, floor_frac: float = 1e-6) -> float:
    """Worst relative error over all gradient entries.

    The denominator is max(|a|, |n|, floor) with floor = floor_frac * max(1, largest
    |gradient| entry), so entries whose true value is zero are judged on absolute
    difference instead of dividing round-off by round-off.
    """
    big = max(float(np.max(np.abs(v))) for v in numeric.values())
    floor = floor_frac * max(1.0, big)
    worst = 0.0
    for name, n in numeric.items():
        a = analytic[name]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def direct_softmax(logits) -> np.ndarray:
    """exp(l) / sum exp(l) without max subtraction, in extended precision."""
    e = [mpmath.exp(mpmath.mpf(float(v))) for v in np.asarray(logits, dtype=float)]
    s = mpmath.fsum(e)
    return np.array([float(v / s) for v in e])


def rmg_velocity_1d(x: float, t: float, data: Sequence[float], refs: Sequence[float], gamma: float) -> float:
    """Hand-written guided velocity for a scalar state on the linear bridge.

    u = (mu - x)/(1 - t) + gamma * (mu_ref - mu)/(1 - t), each mean an explicit
    Gaussian-kernel average.
    """
    def mean(pts):
        w = [np.exp(-(x - t * p) ** 2 / (2.0 * (1.0 - t) ** 2)) for p in pts]
        return sum(wi * p for wi, p in zip(w, pts)) / sum(w)

    mu, mu_ref = mean(data), mean(refs)
    return (mu - x) / (1.0 - t) + gamma * (mu_ref - mu) / (1.0 - t)


def fine_euler(field: Callable[[np.ndarray, float], np.ndarray], x0, t_end: float, n: int) -> np.ndarray:
    """Plain Euler loop with n steps over [0, t_end], used as a high-resolution reference."""
    x = np.array(x0, dtype=float)
    h = t_end / n
    for k in range(n):
        x = x + h * np.asarray(field(x, k * h))
    return x


def richardson(coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
    """First-order Richardson extrapolation from step h (coarse) and h/2 (fine)."""
    return 2.0 * fine - coarse


def nearest_label(points, refs, ref_labels) -> np.ndarray:
    """Label of the closest reference by brute-force search."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    refs = np.asarray(refs, dtype=float)
    out = []
    for p in points:
        d = [float(np.sum((p - r) ** 2)) for r in refs]
        out.append(ref_labels[int(np.argmin(d))])
    return np.asarray(out)
