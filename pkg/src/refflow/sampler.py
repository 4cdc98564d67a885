"""Fixed-step Euler integration of velocity fields from Gaussian noise."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, SamplingError

VelocityField = Callable[[np.ndarray, float], np.ndarray]

DEFAULT_NFE = 100
DEFAULT_EPS = 1e-3

_TWO_POW_M53 = 2.0 ** -53


@dataclass(frozen=True)
class SamplerConfig:
    nfe: int = DEFAULT_NFE
    eps: float = DEFAULT_EPS
    seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if int(self.nfe) != self.nfe or self.nfe < 1:
            raise InputError(f"nfe must be a positive integer, got {self.nfe}")
        if not 0.0 < self.eps <= 0.1:
            raise InputError(f"terminal cutoff eps must lie in (0, 0.1], got {self.eps}")

    @property
    def step(self) -> float:
        return (1.0 - self.eps) / self.nfe

    def times(self) -> np.ndarray:
        """The nfe + 1 grid times 0, h, ..., 1 - eps."""
        return np.arange(self.nfe + 1) * self.step


@dataclass
class Trajectory:
    """Euler run output.

    `states` holds nfe + 1 entries aligned with `times`; `velocities` holds the
    nfe evaluated velocities, one per step, aligned with times[:-1]. Both are
    None unless the run was recorded, except that `final` is always set.
    """

    final: np.ndarray
    times: np.ndarray
    states: Optional[np.ndarray] = None
    velocities: Optional[np.ndarray] = None


def sample_source(seed: int, n: int, d: int) -> np.ndarray:
    """n i.i.d. standard normal d-vectors, reproducible from `seed`.

    Box-Muller over the raw 64-bit output of a PCG64 generator. Only the
    bit-generator stream is relied on, which NumPy keeps stable across releases.
    """
    if n < 1 or d < 1:
        raise InputError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    count = n * d
    pairs = (count + 1) // 2
    bitgen = np.random.PCG64(np.uint64(seed % 2**64))
    raw = bitgen.random_raw(2 * pairs)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53  # (0, 1]
    u1, u2 = u[:pairs], u[pairs:]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count].reshape(n, d)


def derive_seed(seed: int, *stream: int) -> int:
    """Independent child seed for a sub-run (e.g. one row of a sweep)."""
    ss = np.random.SeedSequence([int(seed) % 2**64, *[int(s) for s in stream]])
    return int(ss.generate_state(1, np.uint64)[0])


def euler_sample(field: VelocityField, x0, cfg: SamplerConfig) -> Trajectory:
    """Integrate dx/dt = field(x, t) from t = 0 to 1 - eps with nfe explicit Euler steps."""
    x = np.array(x0, dtype=float)
    h = cfg.step
    times = cfg.times()
    states = [x.copy()] if cfg.record_trajectory else None
    vels = [] if cfg.record_trajectory else None
    for k in range(cfg.nfe):
        t = float(times[k])
        try:
            u = np.asarray(field(x, t), dtype=float)
        except Exception as exc:  # re-raised with the step attached
            raise SamplingError(k, t, exc) from exc
        if u.shape != x.shape:
            raise SamplingError(k, t, InputError(f"field returned shape {u.shape}, expected {x.shape}"))
        x = x + h * u
        if cfg.record_trajectory:
            vels.append(u)
            states.append(x.copy())
    if not cfg.record_trajectory:
        return Trajectory(final=x, times=times)
    return Trajectory(final=x, times=times, states=np.stack(states), velocities=np.stack(vels))


def grid_points(bounds: Sequence[Sequence[float]], resolution: Sequence[int]) -> np.ndarray:
    """Row-major grid over a 1-D or 2-D box; the first axis varies fastest."""
    if not 1 <= len(bounds) <= 2:
        raise InputError(f"grids support 1 or 2 dimensions, got {len(bounds)}")
    if len(resolution) != len(bounds):
        raise InputError("resolution and bounds differ in length")
    if any(int(r) < 2 for r in resolution):
        raise InputError("need at least 2 grid points per axis")
    axes = [np.linspace(lo, hi, int(r)) for (lo, hi), r in zip(bounds, resolution)]
    if len(axes) == 1:
        return axes[0][:, None]
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def flow_field_grid(field: VelocityField, bounds, resolution, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate `field` on a grid at time t; returns (points, vectors), row-major."""
    pts = grid_points(bounds, resolution)
    return pts, np.asarray(field(pts, float(t)), dtype=float)
