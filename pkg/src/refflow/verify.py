"""Registry of oracle checks: each compares a fast code path with an independent computation.

`run_checks()` executes them and returns one `CheckResult` per check with the
measured error (or statistic) and the threshold it was judged against. Slow
checks run the desk-scale experiments and can be skipped.
"""
from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import experiments as ex
from . import oracles
from .bridge import LINEAR, AffineSchedule, coefficients, mean_from_velocity, velocity_from_mean
from .data import mnist_binary, write_idx
from .guidance import (
    ArithmeticMixture,
    GuidanceKind,
    GuidanceSpec,
    RmgField,
    arithmetic_guided_mean,
    arithmetic_weight,
    guidance_gain,
    rmg_velocity,
)
from .metrics import hard_filter, soft_reweight
from .models.fm import fm_loss, fm_loss_and_grad, init_mlp_params, mlp_forward
from .models.nn import time_features
from .models.spg import (
    ANCHOR_KEYS,
    SpgBatch,
    init_spg_params,
    leave_one_out_mask,
    spg_anchor,
    spg_loss_and_grad,
    spg_losses,
    stopped_anchor,
)
from .posterior import (
    DataSet,
    EmpiricalPosterior,
    empirical_score,
    empirical_velocity,
    endpoint_mean,
    log_marginal_density,
    posterior_weights,
)
from .sampler import SamplerConfig, euler_sample, flow_field_grid, sample_source

MNIST_ENV = "REFFLOW_MNIST_DIR"


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    relation: str  # "<=", ">=", "<" or ">"
    passed: bool
    seconds: float
    criterion: Optional[int] = None
    skipped: bool = False
    note: str = ""

    def line(self) -> str:
        tag = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        crit = f"[{self.criterion}] " if self.criterion else ""
        body = self.note if self.skipped else f"{self.value:.3e} {self.relation} {self.threshold:.3e}"
        return f"{tag} {crit}{self.name}: {body} ({self.seconds:.2f}s)"


_OPS = {
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "<": lambda v, t: v < t,
    ">": lambda v, t: v > t,
}


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[[], tuple]
    threshold: float
    relation: str = "<="
    criterion: Optional[int] = None
    slow: bool = False


REGISTRY: list[Check] = []


def check(name: str, threshold: float, relation: str = "<=", criterion: Optional[int] = None, slow: bool = False):
    """Register fn() -> measured value (or (value, note)) under `name`."""
    def deco(fn):
        REGISTRY.append(Check(name, fn, threshold, relation, criterion, slow))
        return fn
    return deco


class Skip(Exception):
    pass


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng([20240611, tag])


# --------------------------------------------------------------- posterior


def weight_oracle_errors(n_triples: int = 1000, seed: int = 1):
    """(max relative error, seconds spent in posterior_weights) over random (x, t, dataset) triples."""
    rng = _rng(seed)
    worst, spent = 0.0, 0.0
    dims = (1, 2, 10)
    for i in range(n_triples):
        d = dims[i % 3]
        n = int(rng.integers(1, 13))
        pts = rng.normal(size=(n, d))
        prior = rng.dirichlet(np.ones(n)) if i % 2 else None
        data = DataSet(pts, weights=prior)
        t = float(rng.uniform(0.0, 0.95))
        tau = float(rng.choice([1.0, 0.5, 2.0]))
        k = int(rng.integers(n))
        x = (1.0 - t) * rng.normal(size=d) + t * pts[k]
        t0 = time.perf_counter()
        w = posterior_weights(x, t, data, temperature=tau)
        spent += time.perf_counter() - t0
        exact = oracles.gaussian_bayes_weights(x, pts, data.prior, 1.0 - t, t, tau)
        worst = max(worst, oracles.rel_err(w, exact, floor=1e-280))
    return worst, spent


@check("posterior_weights vs extended-precision Gaussian Bayes", 1e-9, criterion=1)
def _c1():
    err, spent = weight_oracle_errors()
    if spent >= 5.0:
        return math.inf, f"library time {spent:.2f}s exceeds 5s"
    return err, f"library time {spent:.3f}s"


def score_fd_error(n_probes: int = 200, h: float = 1e-5, seed: int = 2) -> float:
    rng = _rng(seed)
    worst = 0.0
    for i in range(n_probes):
        d = 1 + i % 3
        n = int(rng.integers(1, 9))
        data = DataSet(rng.normal(size=(n, d)))
        t = float(rng.uniform(0.05, 0.95))
        x = (1.0 - t) * rng.normal(size=d) + t * data.points[int(rng.integers(n))]
        s = empirical_score(x, t, data)
        fd = oracles.central_gradient(lambda z: log_marginal_density(z, t, data), x, h)
        floor = 1e-6 * max(1.0, float(np.max(np.abs(fd))))
        worst = max(worst, oracles.rel_err(s, fd, floor))
    return worst


@check("empirical_score vs finite differences of log_marginal_density", 1e-5, criterion=2)
def _c2():
    return score_fd_error()


@check("log_marginal_density vs naive density sum", 1e-10)
def _log_density():
    rng = _rng(3)
    worst = 0.0
    for _ in range(50):
        data = DataSet(rng.normal(size=(5, 2)))
        t = float(rng.uniform(0.0, 0.9))
        x = rng.normal(size=2)
        got = log_marginal_density(x, t, data)
        want = oracles.gaussian_mixture_log_density(x, data.points, data.prior, 1.0 - t, t)
        worst = max(worst, abs(got - want) / max(abs(want), 1.0))
    return worst


@check("empirical_velocity on {-1, 1} vs direct Bayes", 1e-12)
def _two_point_velocity():
    data = DataSet([[-1.0], [1.0]])
    x, t = 0.3, 0.5
    w = oracles.gaussian_bayes_weights([x], data.points, [0.5, 0.5], 1.0 - t, t)
    mu = w[1] - w[0]
    want = (mu - x) / (1.0 - t)
    return abs(float(empirical_velocity(np.array([x]), t, data)[0]) - want)


# ------------------------------------------------------------ bridge, sampler


@check("Euler single-point endpoint vs straight-line formula", 1e-9, criterion=3)
def _c3():
    rng = _rng(4)
    worst = 0.0
    for nfe in (1, 10, 100):
        for d in (1, 2, 5):
            x1 = rng.normal(size=d) * 3
            x0 = rng.normal(size=(64, d))
            cfg = SamplerConfig(nfe=nfe, eps=1e-3, seed=0)
            end = euler_sample(EmpiricalPosterior(DataSet(x1[None, :])), x0, cfg).final
            want = x0 + (1.0 - cfg.eps) * (x1 - x0)
            worst = max(worst, float(np.max(np.abs(end - want))))
    return worst


@check("velocity/mean duality round trip and linear coefficients", 1e-12, criterion=4)
def _c4():
    rng = _rng(5)
    worst = 0.0
    cosine = AffineSchedule.custom(
        lambda t: math.cos(math.pi * t / 2), lambda t: math.sin(math.pi * t / 2),
        lambda t: -math.pi / 2 * math.sin(math.pi * t / 2), lambda t: math.pi / 2 * math.cos(math.pi * t / 2))
    for i in range(1000):
        sched = LINEAR if i % 2 == 0 else cosine
        t = float(rng.uniform(0.0, 0.99))
        x, u = rng.normal(size=(2, 3))
        back = velocity_from_mean(x, mean_from_velocity(x, u, t, sched), t, sched)
        worst = max(worst, float(np.max(np.abs(back - u)) / max(1.0, np.max(np.abs(u)))))
    for t in rng.uniform(0.0, 0.99, size=100):
        co = coefficients(LINEAR, float(t))
        worst = max(worst, abs(co.a + 1.0 / (1.0 - t)) * (1.0 - t), abs(co.c - 1.0 / (1.0 - t)) * (1.0 - t))
    return worst


@check("sample_source moments at n=1e5 (mean err / 0.02, var err / 0.03)", 1.0)
def _source_moments():
    z = sample_source(12345, 100_000, 2)
    return max(float(np.max(np.abs(z.mean(axis=0)))) / 0.02, float(np.max(np.abs(z.var(axis=0) - 1.0))) / 0.03)


@check("Euler nfe=20 error vs Richardson bound (ratio)", 1.5)
def _richardson():
    field_ = EmpiricalPosterior(DataSet([[-1.0], [1.0]]))
    x0 = np.array([[0.3], [-0.7], [1.2]])
    ends = {n: euler_sample(field_, x0, SamplerConfig(n, 1e-3)).final for n in (20, 40, 20480)}
    est = np.abs(oracles.richardson(ends[20], ends[40]) - ends[20])
    return float(np.max(np.abs(ends[20] - ends[20480]) / np.maximum(est, 1e-15)))


def convergence_slope() -> float:
    """log-log slope of endpoint error vs step size against a 1024x finer Euler run."""
    field_ = EmpiricalPosterior(DataSet([[-1.0, 0.5], [1.0, -0.2], [0.4, 1.0]]))
    x0 = sample_source(7, 16, 2)
    eps = 0.1
    errs, hs = [], []
    for n in (10, 20, 40, 80):
        end = euler_sample(field_, x0, SamplerConfig(n, eps)).final
        ref = oracles.fine_euler(field_, x0, 1.0 - eps, 1024 * n)
        errs.append(float(np.mean(np.linalg.norm(end - ref, axis=1))))
        hs.append((1.0 - eps) / n)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@check("Euler convergence order |slope - 1|", 0.2)
def _order():
    return abs(convergence_slope() - 1.0)


@check("flow field odd symmetry for symmetric data", 1e-9)
def _odd():
    field_ = EmpiricalPosterior(DataSet([[1.0, 0.5], [-1.0, -0.5]]))
    pts, vec = flow_field_grid(field_, ((-2, 2), (-2, 2)), (9, 9), 0.4)
    flipped = field_(-pts, 0.4)
    return float(np.max(np.abs(flipped + vec)))


# ------------------------------------------------------------------ guidance


@check("arithmetic mean at lambda=M/(N+M) vs pooled Nadaraya-Watson", 1e-9, criterion=5)
def _c5():
    rng = _rng(6)
    worst = 0.0
    for _ in range(100):
        train = DataSet(rng.normal(size=(int(rng.integers(2, 12)), 2)))
        ref = DataSet(rng.normal(loc=1.0, size=(int(rng.integers(1, 8)), 2)))
        t = float(rng.uniform(0.0, 0.95))
        x = rng.normal(size=2)
        mix = ArithmeticMixture.union(train, ref)
        got = arithmetic_guided_mean(mix, x, t)
        pooled = endpoint_mean(x, t, DataSet(np.vstack([train.points, ref.points])))
        exact = oracles.pooled_kernel_mean(x, t, [train.points, ref.points])
        worst = max(worst, float(np.max(np.abs(got - pooled))), float(np.max(np.abs(got - exact))))
    return worst


@check("arithmetic mean at lambda=0.5 vs weighted-union Bayes", 1e-9)
def _weighted_union():
    rng = _rng(7)
    worst = 0.0
    for _ in range(50):
        n, m = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        train, ref = DataSet(rng.normal(size=(n, 2))), DataSet(rng.normal(size=(m, 2)) + 0.5)
        t = float(rng.uniform(0.0, 0.9))
        x = rng.normal(size=2)
        got = arithmetic_guided_mean(ArithmeticMixture(0.5, train, ref), x, t)
        pooled = np.vstack([train.points, ref.points])
        prior = np.concatenate([np.full(n, 0.5 / n), np.full(m, 0.5 / m)])
        w = oracles.gaussian_bayes_weights(x, pooled, prior, 1.0 - t, t)
        worst = max(worst, float(np.max(np.abs(got - oracles.weighted_average(w, pooled)))))
    return worst


@check("arithmetic weight vs naive density ratio", 1e-9)
def _omega():
    rng = _rng(8)
    worst = 0.0
    for _ in range(50):
        train, ref = DataSet(rng.normal(size=(6, 2))), DataSet(rng.normal(size=(4, 2)) + 1.0)
        t = float(rng.uniform(0.0, 0.9))
        x = rng.normal(size=2)
        got = float(arithmetic_weight(ArithmeticMixture(0.3, train, ref), x, t))
        p = math.exp(oracles.gaussian_mixture_log_density(x, train.points, train.prior, 1.0 - t, t))
        r = math.exp(oracles.gaussian_mixture_log_density(x, ref.points, ref.prior, 1.0 - t, t))
        want = 0.3 * r / (0.7 * p + 0.3 * r)
        worst = max(worst, abs(got - want) / max(want, 1e-300))
    return worst


@check("rmg_velocity 1-D vs hand arithmetic", 1e-12)
def _rmg_hand():
    base = EmpiricalPosterior(DataSet([[-1.0], [1.0]]))
    spec = GuidanceSpec(GuidanceKind.CONSTANT, 1.0)
    got = float(rmg_velocity(np.array([0.0]), 0.5, base, DataSet([[1.0]]), spec)[0])
    return abs(got - oracles.rmg_velocity_1d(0.0, 0.5, [-1.0, 1.0], [1.0], 1.0))


GRID_TIMES = tuple(round(0.1 * k, 1) for k in range(1, 10))


@check("unguided limit and self-reference on a 25x25 grid", 1e-10, criterion=6)
def _c6():
    data = ex.two_moons(500, 0.1, 0)
    base = EmpiricalPosterior(data)
    worst_unguided = worst_self = 0.0
    for t in GRID_TIMES:
        pts, u = flow_field_grid(base, ex.FLOW_BOUNDS, ex.FLOW_RESOLUTION, t)
        off = rmg_velocity(pts, t, base, data, GuidanceSpec(GuidanceKind.CONSTANT, 0.0))
        worst_unguided = max(worst_unguided, float(np.max(np.abs(off - u))))
        self_ref = rmg_velocity(pts, t, base, data, GuidanceSpec(GuidanceKind.CONSTANT, 1.0, cutoff=1.0))
        worst_self = max(worst_self, float(np.max(np.linalg.norm(self_ref - u, axis=1))))
    if worst_unguided > 1e-12:
        return math.inf, f"unguided deviation {worst_unguided:.3e} > 1e-12"
    return worst_self, f"unguided deviation {worst_unguided:.1e}"


@check("quadratic-decay gain max(gamma_t c_t) / gamma0 along 100 trajectories", 1.0, criterion=12)
def _c12_bounded():
    data = ex.two_moons(500, 0.1, 0)
    g0 = 1.5
    rmg = RmgField(EmpiricalPosterior(data), hard_filter(data, 0), GuidanceSpec(GuidanceKind.QUADRATIC_DECAY, g0,
                                                                                  cutoff=1.0), record_gains=True)
    euler_sample(rmg, sample_source(3, 100, 2), SamplerConfig(100, 1e-3))
    return max(v for _, v in rmg.gains) / g0


@check("constant schedule without cutoff: gain(0.999) / gamma0", 100.0, ">", criterion=12)
def _c12_divergent():
    g0 = 0.7
    return guidance_gain(GuidanceSpec(GuidanceKind.CONSTANT, g0, cutoff=1.0), 0.999) / g0


# -------------------------------------------------------------------- models


def fm_gradient_error(draws: int = 3) -> float:
    worst = 0.0
    for s in range(draws):
        rng = _rng(20 + s)
        params = init_mlp_params(2, (5, 4), seed=s)
        x0, x1 = rng.normal(size=(2, 6, 2))
        t = rng.uniform(0.0, 0.95, size=6)
        _, grads = fm_loss_and_grad(params, x0, x1, t)
        num = oracles.param_gradients(lambda: fm_loss(params, x0, x1, t), params.arrays)
        worst = max(worst, oracles.grad_rel_err(grads, num))
    return worst


def tiny_spg_batch(rng: np.random.Generator, m: int = 5, d: int = 2, masked: bool = True) -> SpgBatch:
    mask = rng.random(m) < 0.3 if masked else None
    return SpgBatch(rng.normal(size=(m, d)), rng.normal(size=(m, d)), rng.uniform(0.0, 0.95, size=m),
                    leave_one_out_mask(m, mask))


def tiny_spg(seed: int, d: int = 2):
    params = init_spg_params(d, key_dim=3, gate_hidden=3, refiner_hidden=(4,), seed=seed)
    rng = _rng(40 + seed)
    # move the gates away from their flat initialization so every path carries gradient
    for k, v in params.arrays.items():
        if k.startswith("gate"):
            params.arrays[k] = v + 0.5 * rng.normal(size=v.shape)
    return params


def spg_gradient_error(draws: int = 3, weight: float = 0.1) -> float:
    worst = 0.0
    for s in range(draws):
        rng = _rng(30 + s)
        params = tiny_spg(s)
        batch = tiny_spg_batch(rng)
        _, _, grads = spg_loss_and_grad(params, batch, weight)
        # L_ref's anchor is a constant for differentiation: freeze it at the current value
        sg = stopped_anchor(params, batch)

        def total():
            lm, lr = spg_losses(params, batch, anchor_sg=sg)
            return lm + weight * lr

        num = oracles.param_gradients(total, params.arrays)
        worst = max(worst, oracles.grad_rel_err(grads, num))
    return worst


@check("fm_loss gradient vs central differences", 1e-4, criterion=13)
def _c13_fm():
    return fm_gradient_error()


@check("SPG L_mu + 0.1 L_ref gradient vs central differences", 1e-4, criterion=13)
def _c13_spg():
    return spg_gradient_error()


def stop_gradient_deviation(draws: int = 3) -> tuple[float, float, float]:
    """(max change of L_ref, min change of L_mu, max |FD dL_ref|) under perturbations of q and k."""
    worst_ref, least_mu, worst_fd = 0.0, math.inf, 0.0
    for s in range(draws):
        rng = _rng(50 + s)
        params = tiny_spg(s)
        batch = tiny_spg_batch(rng)
        sg = stopped_anchor(params, batch)
        lm0, lr0 = spg_losses(params, batch, anchor_sg=sg)
        moved = params.copy()
        for k in ANCHOR_KEYS:
            moved.arrays[k] = moved.arrays[k] + 0.3 * rng.normal(size=moved.arrays[k].shape)
        lm1, lr1 = spg_losses(moved, batch, anchor_sg=sg)
        worst_ref = max(worst_ref, abs(lr1 - lr0))
        least_mu = min(least_mu, abs(lm1 - lm0))
        num = oracles.param_gradients(lambda: spg_losses(params, batch, anchor_sg=sg)[1],
                                      {k: params.arrays[k] for k in ANCHOR_KEYS})
        worst_fd = max(worst_fd, max(float(np.max(np.abs(g))) for g in num.values()))
    return worst_ref, least_mu, worst_fd


@check("L_ref change under anchor-path perturbation", 1e-10, criterion=13)
def _c13_sg():
    ref, mu, fd = stop_gradient_deviation()
    if not mu > 0:
        return math.inf, "perturbing q/k left L_mu unchanged"
    if fd > 1e-8:
        return math.inf, f"finite-difference dL_ref/d(q, k) = {fd:.2e} > 1e-8"
    return ref, f"min L_mu change {mu:.2e}, max FD dL_ref {fd:.1e}"


@check("spg_anchor attention vs direct softmax", 1e-10)
def _attn():
    rng = _rng(9)
    params = init_spg_params(3, key_dim=4, seed=1)
    refs = rng.normal(size=(7, 3))
    x = rng.normal(size=3)
    _, attn = spg_anchor(params, x, refs)
    P = params.arrays
    q = P["q.W"] @ x + P["q.b"]
    logits = [float(q @ (P["k.W"] @ r + P["k.b"])) for r in refs]
    return oracles.rel_err(attn, oracles.direct_softmax(logits))


@check("MLP without hidden layers vs hand affine map", 1e-12)
def _affine():
    params = init_mlp_params(3, (), seed=2)
    rng = _rng(10)
    x = rng.normal(size=(4, 3))
    t = 0.3
    W, b = params.arrays["mlp.W0"], params.arrays["mlp.b0"]
    z = np.hstack([x, time_features(t, 4)])
    want = np.array([[sum(W[i, j] * z[r, j] for j in range(z.shape[1])) + b[i] for i in range(3)]
                     for r in range(4)])
    return float(np.max(np.abs(mlp_forward(params, x, t) - want)))


@check("FM fit to one point: relative MSE vs empirical field", 0.05)
def _single_point():
    fit = ex.fm_single_point()
    if fit.loss_drop < 0.5:
        return math.inf, f"probe loss fell only {fit.loss_drop:.1%}"
    return fit.relative_mse, f"probe loss drop {fit.loss_drop:.1%}"


@check("FM on two moons: grid MSE vs recorded reference threshold", 1.0, slow=True)
def _fm_moons():
    ref = ex.load_fm_reference()
    _, mse = ex.fm_two_moons_run()
    return mse / ref["threshold"], f"mse {mse:.4f}, recorded {ref['measured_mse']:.4f}"


# ------------------------------------------------------------------- metrics


@check("soft_reweight at bandwidth 1e-6 vs nearest-reference labels", 0.0)
def _nn_limit():
    data = ex.two_moons(200, 0.1, 1)
    rng = _rng(11)
    refs = data.subset(np.sort(rng.choice(len(data), 40, replace=False)))
    w = soft_reweight(data, refs, 1, bandwidth=1e-6).prior
    nearest = oracles.nearest_label(data.points, refs.points, refs.labels)
    ind = (nearest == 1).astype(float)
    return float(np.max(np.abs(w / w.max() - ind)))


@check("soft_reweight at bandwidth 1e6 vs uniform", 1e-6)
def _wide_limit():
    data = ex.two_moons(200, 0.1, 1)
    refs = data.subset(np.arange(0, 200, 17))
    w = soft_reweight(data, refs, 1, bandwidth=1e6).prior
    return float(np.max(np.abs(w * len(data) - 1.0)))


@check("MNIST pixel scaling: |min + 1| + |max - 1| on an IDX fixture", 0.0)
def _idx_scaling():
    with tempfile.TemporaryDirectory() as tmp:
        img = np.zeros((4, 28, 28), dtype=np.uint8)
        img[:, 5, 5] = 255
        write_idx(img, [0, 1, 0, 1], Path(tmp, "i"), Path(tmp, "l"))
        data = mnist_binary(Path(tmp, "i"), Path(tmp, "l"))
    return abs(float(data.points.min()) + 1.0) + abs(float(data.points.max()) - 1.0)


# -------------------------------------------------------------- experiments


@check("two-moons steering: min hard-filter target fraction", 0.98, ">=", criterion=7, slow=True)
def _c7a():
    res = ex.two_moons_steering()
    return min(r.hard for r in res)


@check("two-moons steering: min soft / hard fraction (soft > unconditional)", 0.9, ">=", criterion=7, slow=True)
def _c7b():
    res = ex.two_moons_steering()
    if any(r.soft_mean <= r.unconditional for r in res):
        return -math.inf, "soft fraction not above unconditional"
    return min(r.soft_mean / r.hard for r in res), "; ".join(
        f"class {r.target}: unc {r.unconditional:.3f} soft {r.soft_mean:.3f} hard {r.hard:.3f}" for r in res)


@check("flow reversal: (f15 - 0.5) * (f85 - 0.5)", 0.0, "<", criterion=8, slow=True)
def _c8():
    r = ex.flow_reversal()
    return (r.generated[0] - 0.5) * (r.generated[1] - 0.5), f"class-1 fractions {r.generated}"


@check("composition tracking Spearman (monotone required)", 0.9, ">=", criterion=9, slow=True)
def _c9():
    r = ex.composition_tracking()
    if not r.monotone:
        return -math.inf, f"not monotone: {list(r.curve.generated)}"
    return r.rho, f"generated {list(r.curve.generated)}"


@check("diversity vs log M slope", 0.0, ">", criterion=10, slow=True)
def _c10():
    return ex.diversity_vs_size().slope


@check("NFE runtime linear-fit R^2 (drift must shrink)", 0.95, ">=", criterion=11, slow=True)
def _c11():
    r = ex.nfe_ablation()
    if not r.drift_fine <= r.drift_coarse:
        return -math.inf, f"drift 100-200 {r.drift_fine:.4f} > 10-20 {r.drift_coarse:.4f}"
    return r.r2, f"drift 10-20 {r.drift_coarse:.4f}, 100-200 {r.drift_fine:.4f}"


@check("SPG control Spearman (single-class fractions >= 0.8)", 0.9, ">=", criterion=14, slow=True)
def _c14():
    r = ex.spg_control()
    if not r.single_class_ok:
        return -math.inf, f"single-class fractions {r.generated}"
    if r.loss_drop < 0.3:
        return -math.inf, f"probe L_mu fell only {r.loss_drop:.1%}"
    return r.rho, f"generated {r.generated}, probe drop {r.loss_drop:.1%}"


@check("MNIST steering M=50 beats M=5 and unconditional", 0.0, ">", criterion=15, slow=True)
def _c15():
    root = os.environ.get(MNIST_ENV)
    if not root:
        raise Skip(f"set {MNIST_ENV} to a directory with MNIST IDX files")
    img, lab = ex.find_mnist(Path(root))
    r = ex.mnist_steering(img, lab)
    return min(r.large - r.small, r.large - r.unconditional), (
        f"unconditional {r.unconditional:.3f}, M=5 {r.small:.3f}, M=50 {r.large:.3f}")


# ---------------------------------------------------------------------- run


def run_check(c: Check) -> CheckResult:
    t0 = time.perf_counter()
    try:
        out = c.fn()
    except Skip as exc:
        return CheckResult(c.name, math.nan, c.threshold, c.relation, True, time.perf_counter() - t0,
                           c.criterion, skipped=True, note=str(exc))
    except Exception as exc:  # a crashing check is a failed check, not an aborted run
        return CheckResult(c.name, math.nan, c.threshold, c.relation, False, time.perf_counter() - t0,
                           c.criterion, note=f"{type(exc).__name__}: {exc}")
    value, note = out if isinstance(out, tuple) else (out, "")
    value = float(value)
    passed = not math.isnan(value) and _OPS[c.relation](value, c.threshold)
    return CheckResult(c.name, value, c.threshold, c.relation, passed, time.perf_counter() - t0, c.criterion,
                       note=note)


def run_checks(include_slow: bool = True, names: Optional[list[str]] = None) -> list[CheckResult]:
    out = []
    for c in REGISTRY:
        if c.slow and not include_slow:
            continue
        if names and not any(n in c.name for n in names):
            continue
        out.append(run_check(c))
    return out
