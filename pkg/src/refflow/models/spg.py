"""Desk-scale semi-parametric endpoint predictor.

    mu(x_t, R) = (1 - g_t) x_t + g_t xbar + a_t f(xbar, x_t, t)
    xbar       = sum_m attn_m r_m,   attn = softmax_m <q(x_t), k(r_m)>

q and k are affine maps to a key space, the gates g_t and a_t are sigmoid
outputs of small MLPs of the time features, and f is a tanh MLP refiner.
Training uses a leave-one-out endpoint loss over a batch that doubles as the
reference set, plus a residual loss on f with the anchor held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from ..bridge import LINEAR, AffineSchedule, ScheduleKind, velocity_from_mean
from ..errors import InputError, TrainingError
from ..posterior import DataSet
from ..sampler import sample_source
from .config import TrainConfig
from .nn import SGD, TIME_FEATURES, init_mlp, mlp_apply, mlp_backward, time_features

Q, K = "q.", "k."
GATE_G, GATE_A = "gate_g.", "gate_a."
REFINER = "refiner."
ANCHOR_KEYS = ("q.W", "q.b", "k.W", "k.b")


@dataclass
class SpgParams:
    arrays: dict
    dim: int
    key_dim: int
    gate_hidden: int = 8
    refiner_hidden: tuple[int, ...] = (64, 64)
    history: list = field(default_factory=list, compare=False, repr=False)

    def copy(self) -> "SpgParams":
        return SpgParams({k: v.copy() for k, v in self.arrays.items()}, self.dim, self.key_dim,
                         self.gate_hidden, self.refiner_hidden)


def init_spg_params(dim: int, key_dim: int = 8, gate_hidden: int = 8,
                    refiner_hidden=(64, 64), seed: int = 0) -> SpgParams:
    """Random anchor and refiner; both gates start at exactly 0.5 for every t."""
    rng = np.random.default_rng(seed)
    arrays: dict = {
        "q.W": rng.normal(0.0, 1.0 / np.sqrt(dim), size=(key_dim, dim)),
        "q.b": np.zeros(key_dim),
        "k.W": rng.normal(0.0, 1.0 / np.sqrt(dim), size=(key_dim, dim)),
        "k.b": np.zeros(key_dim),
    }
    for prefix in (GATE_G, GATE_A):
        init_mlp(arrays, prefix, [TIME_FEATURES, gate_hidden, 1], rng)
        arrays[f"{prefix}W1"][:] = 0.0
    init_mlp(arrays, REFINER, [2 * dim + TIME_FEATURES, *refiner_hidden, dim], rng, out_scale=0.1)
    return SpgParams(arrays, dim, key_dim, gate_hidden, tuple(refiner_hidden))


def _points(refs) -> np.ndarray:
    R = refs.points if isinstance(refs, DataSet) else np.asarray(refs, dtype=float)
    if R.ndim != 2 or R.shape[0] < 1:
        raise InputError("reference set must be a nonempty (M, d) array")
    return R


def _attention(arrays: dict, X: np.ndarray, R: np.ndarray, allowed: Optional[np.ndarray]):
    """Row-stochastic attention (B, M) plus the intermediates needed for backprop."""
    Qx = X @ arrays["q.W"].T + arrays["q.b"]
    Kr = R @ arrays["k.W"].T + arrays["k.b"]
    S = Qx @ Kr.T
    if allowed is not None:
        S = np.where(allowed, S, -np.inf)
    S = S - S.max(axis=1, keepdims=True)
    A = np.exp(S)
    A /= A.sum(axis=1, keepdims=True)
    return A, Qx, Kr


def spg_anchor(params: SpgParams, x_t, refs) -> tuple[np.ndarray, np.ndarray]:
    """Cross-attention anchor with identity values: (xbar, attention weights)."""
    R = _points(refs)
    x_t = np.asarray(x_t, dtype=float)
    single = x_t.ndim == 1
    X = x_t[None, :] if single else x_t
    if X.shape[1] != R.shape[1] or X.shape[1] != params.dim:
        raise InputError("query, reference and model dimensions must agree")
    A, _, _ = _attention(params.arrays, X, R, None)
    xbar = A @ R
    return (xbar[0], A[0]) if single else (xbar, A)


def gates(params: SpgParams, t) -> tuple[np.ndarray, np.ndarray]:
    """(g_t, a_t), each in [0, 1], for a scalar t or an array of times."""
    t_arr = np.asarray(t, dtype=float).reshape(-1)
    phi = time_features(t_arr, t_arr.shape[0])
    g = expit(mlp_apply(params.arrays, GATE_G, phi)[0][:, 0])
    a = expit(mlp_apply(params.arrays, GATE_A, phi)[0][:, 0])
    if np.ndim(t) == 0:
        return g[0], a[0]
    return g, a


def refiner(params: SpgParams, xbar: np.ndarray, x_t: np.ndarray, t) -> np.ndarray:
    B = x_t.shape[0]
    Z = np.hstack([xbar, x_t, time_features(t, B)])
    return mlp_apply(params.arrays, REFINER, Z)[0]


def spg_forward(params: SpgParams, x_t, t, refs, force_gates: Optional[tuple[float, float]] = None) -> np.ndarray:
    """Endpoint prediction; `force_gates=(g, a)` overrides the learned gates."""
    x_t = np.asarray(x_t, dtype=float)
    single = x_t.ndim == 1
    X = x_t[None, :] if single else x_t
    if np.any(np.asarray(t) >= 1.0):
        raise InputError("SPG is evaluated for t < 1 only")
    xbar, _ = spg_anchor(params, X, refs)
    if force_gates is None:
        g, a = gates(params, np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],)))
    else:
        g, a = (np.full(X.shape[0], float(v)) for v in force_gates)
    f = refiner(params, xbar, X, t)
    mu = (1.0 - g)[:, None] * X + g[:, None] * xbar + a[:, None] * f
    return mu[0] if single else mu


class SpgBatch(NamedTuple):
    """Training minibatch; the endpoints x1 double as the reference set.

    allowed[m, j] is True when sample m may attend to reference j. The diagonal
    is always False (leave-one-out).
    """

    x1: np.ndarray
    x0: np.ndarray
    t: np.ndarray
    allowed: np.ndarray

    @property
    def x_t(self) -> np.ndarray:
        return (1.0 - self.t)[:, None] * self.x0 + self.t[:, None] * self.x1


def leave_one_out_mask(m: int, masked: Optional[np.ndarray] = None) -> np.ndarray:
    """Allowed-key matrix excluding each sample's own endpoint and any masked references.

    Rows that masking would leave empty fall back to plain leave-one-out.
    """
    if m < 2:
        raise InputError("leave-one-out needs at least 2 references")
    allowed = ~np.eye(m, dtype=bool)
    if masked is not None and np.any(masked):
        cand = allowed & ~np.asarray(masked, dtype=bool)[None, :]
        empty = ~cand.any(axis=1)
        cand[empty] = allowed[empty]
        allowed = cand
    return allowed


def _require_linear(sched: AffineSchedule) -> None:
    if sched.kind is not ScheduleKind.LINEAR:
        raise InputError("SPG losses are defined for the linear bridge only")


def stopped_anchor(params: SpgParams, batch: SpgBatch) -> np.ndarray:
    """Anchor values to be treated as constants in the residual loss."""
    A, _, _ = _attention(params.arrays, batch.x_t, batch.x1, batch.allowed)
    return A @ batch.x1


def spg_loss_and_grad(params: SpgParams, batch: SpgBatch, refiner_weight: float = 0.1,
                      sched: AffineSchedule = LINEAR, anchor_sg: Optional[np.ndarray] = None,
                      need_grad: bool = True):
    """(L_mu, L_ref, grads of L_mu + refiner_weight * L_ref).

    `anchor_sg` is the stop-gradient anchor used inside L_ref; it defaults to
    the current anchor value and never receives gradient.
    """
    _require_linear(sched)
    P = params.arrays
    X1, T = batch.x1, batch.t
    M, d = X1.shape
    Xt = batch.x_t
    phi = time_features(T, M)

    A, Qx, Kr = _attention(P, Xt, X1, batch.allowed)
    xbar = A @ X1
    gp, g_acts = mlp_apply(P, GATE_G, phi)
    ap, a_acts = mlp_apply(P, GATE_A, phi)
    g, a = expit(gp[:, 0]), expit(ap[:, 0])
    F, f_acts = mlp_apply(P, REFINER, np.hstack([xbar, Xt, phi]))
    mu = (1.0 - g)[:, None] * Xt + g[:, None] * xbar + a[:, None] * F
    wt = 1.0 / (1.0 - T) ** 2
    L_mu = float(np.sum(wt[:, None] * (X1 - mu) ** 2) / M)

    if anchor_sg is None:
        anchor_sg = xbar
    F_sg, fsg_acts = mlp_apply(P, REFINER, np.hstack([anchor_sg, Xt, phi]))
    resid = (X1 - anchor_sg) - F_sg
    L_ref = float(np.sum(resid ** 2) / M)
    if not need_grad:
        return L_mu, L_ref, None

    grads: dict = {}
    dmu = -2.0 * wt[:, None] * (X1 - mu) / M
    dg = np.sum(dmu * (xbar - Xt), axis=1)
    da = np.sum(dmu * F, axis=1)
    mlp_backward(P, GATE_G, g_acts, (dg * g * (1.0 - g))[:, None], grads)
    mlp_backward(P, GATE_A, a_acts, (da * a * (1.0 - a))[:, None], grads)
    dZ = mlp_backward(P, REFINER, f_acts, a[:, None] * dmu, grads)
    mlp_backward(P, REFINER, fsg_acts, -2.0 * refiner_weight * resid / M, grads)

    dxbar = g[:, None] * dmu + dZ[:, :d]
    dA = dxbar @ X1.T
    dS = A * (dA - np.sum(A * dA, axis=1, keepdims=True))
    dQ = dS @ Kr
    dK = dS.T @ Qx
    grads["q.W"] = dQ.T @ Xt
    grads["q.b"] = dQ.sum(axis=0)
    grads["k.W"] = dK.T @ X1
    grads["k.b"] = dK.sum(axis=0)
    return L_mu, L_ref, grads


def spg_losses(params: SpgParams, batch: SpgBatch, sched: AffineSchedule = LINEAR,
               anchor_sg: Optional[np.ndarray] = None) -> tuple[float, float]:
    L_mu, L_ref, _ = spg_loss_and_grad(params, batch, 0.0, sched, anchor_sg, need_grad=False)
    return L_mu, L_ref


def spg_batch(data: DataSet, rng: np.random.Generator, size: int, eps_train: float,
              mask_prob: float = 0.0) -> SpgBatch:
    size = min(size, len(data))
    if size < 2:
        raise InputError("leave-one-out needs at least 2 references")
    idx = rng.choice(len(data), size=size, replace=False)
    x1 = data.points[idx]
    x0 = sample_source(int(rng.integers(2**63)), size, data.dim)
    t = rng.uniform(0.0, 1.0 - eps_train, size=size)
    masked = rng.random(size) < mask_prob if mask_prob > 0 else None
    return SpgBatch(x1, x0, t, leave_one_out_mask(size, masked))


def spg_train(data: DataSet, cfg: TrainConfig, sched: AffineSchedule = LINEAR,
              init: SpgParams | None = None) -> SpgParams:
    """Train on L_mu + refiner_weight * L_ref; `history` records (step, L_mu, L_ref, probe L_mu)."""
    _require_linear(sched)
    params = init.copy() if init is not None else init_spg_params(
        data.dim, cfg.key_dim, cfg.gate_hidden, cfg.hidden, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    probe = spg_batch(data, np.random.default_rng([cfg.seed, 2]), cfg.reference_size, cfg.eps_train)
    opt = SGD(cfg.lr, cfg.effective_momentum, cfg.grad_clip)
    log_every = max(1, cfg.steps // 20)
    params.history.append((0, float("nan"), float("nan"), spg_losses(params, probe)[0]))
    for step in range(1, cfg.steps + 1):
        batch = spg_batch(data, rng, cfg.reference_size, cfg.eps_train, cfg.mask_prob)
        L_mu, L_ref, grads = spg_loss_and_grad(params, batch, cfg.refiner_weight)
        if not (np.isfinite(L_mu) and np.isfinite(L_ref)):
            raise TrainingError(step, L_mu + L_ref)
        opt.step(params.arrays, grads)
        if step % log_every == 0 or step == cfg.steps:
            params.history.append((step, L_mu, L_ref, spg_losses(params, probe)[0]))
    return params


class SpgModel:
    """Mean provider for a trained SPG conditioned on a fixed reference set."""

    def __init__(self, params: SpgParams, refs: DataSet, sched: AffineSchedule = LINEAR):
        self.params = params
        self.refs = refs
        self.sched = sched

    def mean(self, x, t: float) -> np.ndarray:
        return spg_forward(self.params, x, t, self.refs)

    def velocity(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return velocity_from_mean(x, self.mean(x, t), t, self.sched)

    def __call__(self, x, t: float) -> np.ndarray:
        return self.velocity(x, t)
