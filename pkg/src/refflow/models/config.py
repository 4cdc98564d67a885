from __future__ import annotations

from dataclasses import dataclass

from ..errors import InputError


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 128
    lr: float = 0.01
    optimizer: str = "momentum"  # "sgd" or "momentum"
    momentum: float = 0.9
    seed: int = 0
    eps_train: float = 0.05
    reference_size: int = 64
    mask_prob: float = 0.1
    refiner_weight: float = 0.1
    grad_clip: float | None = 1.0
    hidden: tuple[int, ...] = (64, 64)
    key_dim: int = 8
    gate_hidden: int = 8
    probe_size: int = 512

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.steps < 0 or self.batch_size < 1 or self.reference_size < 1 or self.probe_size < 1:
            raise InputError("steps must be >= 0 and sizes positive")
        if not self.lr > 0:
            raise InputError(f"learning rate must be positive, got {self.lr}")
        if self.optimizer not in ("sgd", "momentum"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.eps_train < 0.5:
            raise InputError(f"eps_train must lie in (0, 0.5), got {self.eps_train}")
        if not 0.0 <= self.mask_prob < 1.0:
            raise InputError(f"mask_prob must lie in [0, 1), got {self.mask_prob}")
        if self.key_dim < 1:
            raise InputError("key_dim must be >= 1")

    @property
    def effective_momentum(self) -> float:
        return self.momentum if self.optimizer == "momentum" else 0.0
