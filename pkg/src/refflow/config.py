"""Experiment configuration: JSON-serializable sections, overrides and canonical hashing.

A config is a JSON object with the sections below; every key is optional and
unknown keys are rejected with the offending dotted field name.

    dataset    where the training points come from (generator or CSV file)
    schedule   bridge kind; only "linear" is serializable
    guidance   reference-mean guidance; null or absent means unguided
    reference  how the reference set is built from the dataset (or a CSV)
    sampler    Euler settings and sample count
    model      base mean provider: closed-form posterior over the dataset, over the
               reference set ("conditioned"), or a trained checkpoint
    train      TrainConfig fields for train-fm / train-spg
    metric     classifier and sweep grids
    output_dir where artifacts go (excluded from the hash)
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

from .errors import ConfigError, InputError
from .guidance import GuidanceKind, GuidanceSpec
from .models.config import TrainConfig
from .sampler import SamplerConfig

OUTPUT_ROOT_ENV = "REFFLOW_OUTPUT_ROOT"

DATASET_KINDS = ("two_moons", "gaussians", "mnist_binary", "file")
REFERENCE_KINDS = ("class", "soft", "dataset", "file")
MODEL_KINDS = ("empirical", "conditioned", "mlp", "spg")


@dataclass
class DatasetSpec:
    kind: str = "two_moons"
    n: int = 500
    noise: float = 0.1
    seed: int = 0
    centers: list = field(default_factory=lambda: [[-2.0, 0.0], [2.0, 0.0]])
    sigma: float = 0.5
    n_per_class: int = 250
    path: Optional[str] = None
    images: Optional[str] = None
    labels: Optional[str] = None
    digits: list = field(default_factory=lambda: [0, 1])
    max_per_class: Optional[int] = None

    def validate(self, prefix: str = "dataset") -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"{prefix}.kind", f"expected one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "two_moons" and self.n < 2:
            raise ConfigError(f"{prefix}.n", "need at least 2 points")
        if self.kind == "file" and not self.path:
            raise ConfigError(f"{prefix}.path", "required for a file dataset")
        if self.kind == "mnist_binary" and not (self.images and self.labels):
            raise ConfigError(f"{prefix}.images", "MNIST needs both images and labels paths")
        for name in ("path", "images", "labels"):
            val = getattr(self, name)
            if val and self.kind in ("file", "mnist_binary") and not Path(val).exists():
                raise ConfigError(f"{prefix}.{name}", f"file not found: {val}")


@dataclass
class GuidanceSection:
    kind: str = "quadratic_decay"
    beta0: float = 1.0
    cutoff: float = 0.85
    temperature: Union[float, str] = 1.0

    def validate(self, prefix: str = "guidance") -> None:
        try:
            GuidanceKind(self.kind)
        except ValueError:
            raise ConfigError(f"{prefix}.kind", f"expected one of {[k.value for k in GuidanceKind]}") from None
        if not self.beta0 >= 0:
            raise ConfigError(f"{prefix}.beta0", "must be >= 0")
        if not 0 < self.cutoff <= 1:
            raise ConfigError(f"{prefix}.cutoff", "must lie in (0, 1]")
        if isinstance(self.temperature, str) and self.temperature != "sqrt_d":
            raise ConfigError(f"{prefix}.temperature", "number or 'sqrt_d'")

    def spec(self) -> GuidanceSpec:
        return GuidanceSpec(GuidanceKind(self.kind), float(self.beta0), float(self.cutoff), self.temperature)


@dataclass
class ReferenceSpec:
    kind: str = "class"
    target: int = 1
    size: Optional[int] = 20
    seed: int = 0
    fraction: float = 1.0
    labeled: int = 20
    method: str = "spread"
    bandwidth: Optional[float] = None
    path: Optional[str] = None

    def validate(self, prefix: str = "reference") -> None:
        if self.kind not in REFERENCE_KINDS:
            raise ConfigError(f"{prefix}.kind", f"expected one of {REFERENCE_KINDS}, got {self.kind!r}")
        if self.size is not None and self.size < 1:
            raise ConfigError(f"{prefix}.size", "must be positive")
        if not 0 <= self.fraction <= 1:
            raise ConfigError(f"{prefix}.fraction", "must lie in [0, 1]")
        if self.method not in ("kernel", "spread"):
            raise ConfigError(f"{prefix}.method", "expected 'kernel' or 'spread'")
        if self.kind == "soft" and self.labeled < 2:
            raise ConfigError(f"{prefix}.labeled", "need at least 2 labeled references")
        if self.kind == "file" and not (self.path and Path(self.path).exists()):
            raise ConfigError(f"{prefix}.path", f"file not found: {self.path}")


@dataclass
class SamplerSection:
    nfe: int = 100
    eps: float = 1e-3
    seed: int = 0
    n_samples: int = 500
    record_trajectory: bool = False
    trajectories: int = 50

    def validate(self, prefix: str = "sampler") -> None:
        if not isinstance(self.nfe, int) or self.nfe < 1:
            raise ConfigError(f"{prefix}.nfe", "must be a positive integer")
        if not 0 < self.eps <= 0.1:
            raise ConfigError(f"{prefix}.eps", "must lie in (0, 0.1]")
        if self.n_samples < 1:
            raise ConfigError(f"{prefix}.n_samples", "must be positive")

    def config(self, nfe: Optional[int] = None) -> SamplerConfig:
        return SamplerConfig(nfe or self.nfe, self.eps, self.seed, self.record_trajectory)


@dataclass
class ModelSpec:
    kind: str = "empirical"
    checkpoint: Optional[str] = None

    def validate(self, prefix: str = "model") -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"{prefix}.kind", f"expected one of {MODEL_KINDS}, got {self.kind!r}")
        if self.kind in ("mlp", "spg"):
            if not self.checkpoint:
                raise ConfigError(f"{prefix}.checkpoint", f"required for a {self.kind} model")
            if not Path(self.checkpoint).exists():
                raise ConfigError(f"{prefix}.checkpoint", f"file not found: {self.checkpoint}")


@dataclass
class MetricSpec:
    target_class: int = 1
    prototypes_per_class: int = 8
    fractions: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    soft_fractions: list = field(default_factory=lambda: [0.15, 0.85])
    sizes: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64, 128])
    replicates: int = 5
    nfes: list = field(default_factory=lambda: [10, 20, 30, 50, 100, 200])
    repeats: int = 3
    kinds: list = field(default_factory=lambda: ["constant", "quadratic_decay", "bell"])
    gammas: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    bounds: list = field(default_factory=lambda: [[-2.0, 3.0], [-1.5, 2.0]])
    resolution: list = field(default_factory=lambda: [25, 25])
    t: float = 0.5

    def validate(self, prefix: str = "metric") -> None:
        if any(not 0 <= f <= 1 for f in self.fractions + self.soft_fractions):
            raise ConfigError(f"{prefix}.fractions", "fractions must lie in [0, 1]")
        if any(int(m) < 1 for m in self.sizes):
            raise ConfigError(f"{prefix}.sizes", "sizes must be positive")
        if any(int(n) < 1 for n in self.nfes):
            raise ConfigError(f"{prefix}.nfes", "step counts must be positive")
        if self.replicates < 1 or self.repeats < 1 or self.prototypes_per_class < 1:
            raise ConfigError(f"{prefix}.replicates", "counts must be positive")
        if len(self.resolution) != len(self.bounds) or any(int(r) < 2 for r in self.resolution):
            raise ConfigError(f"{prefix}.resolution", "one count >= 2 per bounded axis")
        if not 0 <= self.t < 1:
            raise ConfigError(f"{prefix}.t", "must lie in [0, 1)")


SECTIONS = {
    "dataset": DatasetSpec,
    "guidance": GuidanceSection,
    "reference": ReferenceSpec,
    "sampler": SamplerSection,
    "model": ModelSpec,
    "metric": MetricSpec,
}


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    schedule: str = "linear"
    guidance: Optional[GuidanceSection] = None
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: Optional[dict] = None
    metric: MetricSpec = field(default_factory=MetricSpec)
    output_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.schedule != "linear":
            raise ConfigError("schedule", "only the linear bridge can be configured from JSON")
        for name in SECTIONS:
            section = getattr(self, name)
            if section is not None:
                section.validate(name)
        if self.train is not None:
            self.train_config()
        return self

    def train_config(self) -> TrainConfig:
        known = {f.name for f in fields(TrainConfig)}
        extra = set(self.train or {}) - known
        if extra:
            raise ConfigError(f"train.{sorted(extra)[0]}", "unknown field")
        try:
            return TrainConfig(**(self.train or {}))
        except (InputError, TypeError) as exc:
            raise ConfigError("train", str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown field")
        kwargs: dict[str, Any] = {}
        for name, typ in SECTIONS.items():
            if name not in doc:
                continue
            val = doc[name]
            if val is None:
                if name != "guidance":
                    raise ConfigError(name, "section cannot be null")
                kwargs[name] = None
                continue
            if not isinstance(val, dict):
                raise ConfigError(name, "section must be an object")
            sub = {f.name for f in fields(typ)}
            for key in val:
                if key not in sub:
                    raise ConfigError(f"{name}.{key}", "unknown field")
            try:
                kwargs[name] = typ(**val)
            except TypeError as exc:
                raise ConfigError(name, str(exc)) from exc
        for key in ("schedule", "train", "output_dir"):
            if key in doc:
                kwargs[key] = doc[key]
        return cls(**kwargs).validate()

    def canonical_json(self) -> str:
        """Key-sorted compact JSON of the semantic fields (output_dir excluded)."""
        doc = self.to_dict()
        doc.pop("output_dir", None)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def parse_value(text: str) -> Any:
    """JSON value if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, dotted: str, value: Any) -> None:
    """Set doc[a][b]... = value for a dotted key, creating sections as needed."""
    parts = dotted.split(".")
    if not all(parts):
        raise ConfigError(dotted, "malformed override key")
    cur = doc
    for p in parts[:-1]:
        nxt = cur.get(p)
        if nxt is None:
            nxt = {}
            cur[p] = nxt
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"{p} is not a section")
        cur = nxt
    cur[parts[-1]] = value


def load_config(path: Optional[str], overrides: list[tuple[str, Any]] = ()) -> ExperimentConfig:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    for key, value in overrides:
        if key == "guidance" and value is None:
            doc["guidance"] = None
            continue
        apply_override(doc, key, value)
    return ExperimentConfig.from_dict(doc)


def default_output_dir(command: str, cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{command}-{cfg.hash()[:12]}"
