"""Small MLP velocity model trained with the flow-matching regression loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bridge import LINEAR, AffineSchedule, ScheduleKind, mean_from_velocity
from ..errors import InputError, TrainingError
from ..posterior import DataSet
from ..sampler import sample_source
from .config import TrainConfig
from .nn import SGD, TIME_FEATURES, init_mlp, mlp_apply, mlp_backward, time_features

PREFIX = "mlp."


@dataclass
class MlpParams:
    """Weights of an MLP (x, time features) -> velocity, with tanh hidden layers."""

    arrays: dict
    dim: int
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    history: list = field(default_factory=list, compare=False, repr=False)

    @property
    def input_dim(self) -> int:
        return self.dim + TIME_FEATURES

    def copy(self) -> "MlpParams":
        return MlpParams({k: v.copy() for k, v in self.arrays.items()}, self.dim, self.hidden, self.activation)


def init_mlp_params(dim: int, hidden=(64, 64), seed: int = 0) -> MlpParams:
    rng = np.random.default_rng(seed)
    arrays: dict = {}
    init_mlp(arrays, PREFIX, [dim + TIME_FEATURES, *hidden, dim], rng)
    return MlpParams(arrays, dim, tuple(hidden))


def _inputs(params: MlpParams, x, t):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.dim:
        raise InputError(f"input dim {X.shape[1]} != model dim {params.dim}")
    return np.hstack([X, time_features(t, X.shape[0])]), single


def mlp_forward(params: MlpParams, x, t) -> np.ndarray:
    """Velocity u_theta(x, t); t may be a scalar or one value per row."""
    Z, single = _inputs(params, x, t)
    out, _ = mlp_apply(params.arrays, PREFIX, Z)
    return out[0] if single else out


def _require_linear(sched: AffineSchedule) -> None:
    if sched.kind is not ScheduleKind.LINEAR:
        raise InputError("training losses are defined for the linear bridge only")


def fm_loss_and_grad(params: MlpParams, x0, x1, t, sched: AffineSchedule = LINEAR):
    """Mean over the batch of ||(x1 - x0) - u(x_t, t)||^2, and its parameter gradient."""
    _require_linear(sched)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    Z, _ = _inputs(params, xt, t)
    u, acts = mlp_apply(params.arrays, PREFIX, Z)
    resid = (x1 - x0) - u
    B = x0.shape[0]
    loss = float(np.sum(resid ** 2) / B)
    grads: dict = {}
    mlp_backward(params.arrays, PREFIX, acts, -2.0 * resid / B, grads)
    return loss, grads


def fm_loss(params: MlpParams, x0, x1, t, sched: AffineSchedule = LINEAR) -> float:
    _require_linear(sched)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    u = mlp_forward(params, xt, t)
    return float(np.sum(((x1 - x0) - u) ** 2) / x0.shape[0])


def fm_batch(data: DataSet, rng: np.random.Generator, size: int, eps_train: float):
    """(x0, x1, t): noise, endpoints drawn by prior weight, times uniform on [0, 1 - eps]."""
    idx = rng.choice(len(data), size=size, p=data.prior)
    x1 = data.points[idx]
    x0 = sample_source(int(rng.integers(2**63)), size, data.dim)
    t = rng.uniform(0.0, 1.0 - eps_train, size=size)
    return x0, x1, t


def fm_train(data: DataSet, cfg: TrainConfig, sched: AffineSchedule = LINEAR,
             init: MlpParams | None = None) -> MlpParams:
    """Minibatch SGD on the flow-matching loss; `history` records (step, batch loss, probe loss)."""
    _require_linear(sched)
    params = init.copy() if init is not None else init_mlp_params(data.dim, cfg.hidden, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    probe = fm_batch(data, np.random.default_rng([cfg.seed, 2]), cfg.probe_size, cfg.eps_train)
    opt = SGD(cfg.lr, cfg.effective_momentum, cfg.grad_clip)
    log_every = max(1, cfg.steps // 20)
    params.history.append((0, float("nan"), fm_loss(params, *probe)))
    for step in range(1, cfg.steps + 1):
        loss, grads = fm_loss_and_grad(params, *fm_batch(data, rng, cfg.batch_size, cfg.eps_train))
        if not np.isfinite(loss):
            raise TrainingError(step, loss)
        opt.step(params.arrays, grads)
        if step % log_every == 0 or step == cfg.steps:
            params.history.append((step, loss, fm_loss(params, *probe)))
    return params


def model_mean(params: MlpParams, x, t: float, sched: AffineSchedule = LINEAR) -> np.ndarray:
    """Endpoint mean implied by the model velocity: x + (1 - t) u for the linear bridge."""
    x = np.asarray(x, dtype=float)
    return mean_from_velocity(x, mlp_forward(params, x, t), t, sched)


class MlpModel:
    """Mean provider wrapping a trained velocity MLP."""

    def __init__(self, params: MlpParams, sched: AffineSchedule = LINEAR):
        self.params = params
        self.sched = sched

    def velocity(self, x, t: float) -> np.ndarray:
        return mlp_forward(self.params, x, t)

    def mean(self, x, t: float) -> np.ndarray:
        return model_mean(self.params, x, t, self.sched)

    def __call__(self, x, t: float) -> np.ndarray:
        return self.velocity(x, t)

