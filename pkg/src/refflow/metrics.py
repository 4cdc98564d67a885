"""Steerability, composition and diversity measurements; soft/hard conditioning."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import pdist
from scipy.special import logsumexp
from sklearn.semi_supervised import LabelSpreading

from .bridge import LINEAR, AffineSchedule
from .errors import InputError
from .guidance import GuidanceSpec, MeanProvider, RmgField
from .posterior import DataSet, EmpiricalPosterior
from .sampler import SamplerConfig, derive_seed, euler_sample, sample_source


@dataclass(frozen=True, eq=False)
class LabeledPrototypes:
    """Nearest-prototype classifier; `classes[k]` is the class of `centroids[k]`.

    With one prototype per class this is the plain nearest-centroid rule.
    Several prototypes per class (k-means within each class) handle
    non-convex classes such as the two moons.
    """

    centroids: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        k = np.asarray(self.classes, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != k.shape[0]:
            raise InputError("one class id per centroid required")
        if np.unique(k).size < 2:
            raise InputError("need at least two classes")
        if not np.all(np.isfinite(c)):
            raise InputError("centroids must be finite")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "classes", k)

    @property
    def class_ids(self) -> np.ndarray:
        return np.unique(self.classes)

    @classmethod
    def from_dataset(cls, data: DataSet, per_class: int = 1, seed: int = 0) -> "LabeledPrototypes":
        cents, ids = [], []
        for c in data.classes():
            pts = data.points[data.labels == c]
            k = min(per_class, len(pts))
            if k == 1:
                cents.append(pts.mean(axis=0, keepdims=True))
            else:
                centers, _ = kmeans2(pts, k, seed=np.random.default_rng([seed, int(c)]), minit="++")
                cents.append(centers)
            ids.extend([int(c)] * len(cents[-1]))
        return cls(np.vstack(cents), np.asarray(ids))


def classify(points, protos: LabeledPrototypes) -> np.ndarray:
    """Class of the nearest prototype; exact ties go to the lowest class id."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != protos.centroids.shape[1]:
        raise InputError("point and prototype dimensions differ")
    d2 = ((X[:, None, :] - protos.centroids[None, :, :]) ** 2).sum(axis=2)
    ids = protos.class_ids
    per_class = np.column_stack([d2[:, protos.classes == c].min(axis=1) for c in ids])
    return ids[np.argmin(per_class, axis=1)]


def class_frequency(labels, classes: Optional[Sequence[int]] = None) -> np.ndarray:
    """Fraction of `labels` in each of `classes` (default: the sorted distinct labels)."""
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise InputError("no labels")
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    return np.array([np.mean(labels == c) for c in classes])


def pairwise_diversity(points) -> float:
    """Mean Euclidean distance over all unordered pairs."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise InputError("diversity needs at least two points")
    return float(pdist(X).mean())


def default_bandwidth(labeled_refs: DataSet) -> float:
    """Median pairwise distance among the labeled references (1.0 if undefined)."""
    if len(labeled_refs) < 2:
        return 1.0
    med = float(np.median(pdist(labeled_refs.points)))
    return med if med > 0 else 1.0


SOFT_METHODS = ("kernel", "spread")


def kernel_class_log_probs(x, labeled_refs: DataSet, bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    """log p(c | x) from a Gaussian kernel over labeled references: (log probs (B, C), class ids)."""
    if labeled_refs.labels is None:
        raise InputError("reference set must be labeled")
    if not bandwidth > 0:
        raise InputError(f"bandwidth must be positive, got {bandwidth}")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    R = labeled_refs.points
    logk = -((X[:, None, :] - R[None, :, :]) ** 2).sum(axis=2) / (2.0 * bandwidth ** 2)
    ids = labeled_refs.classes()
    per_class = np.column_stack([logsumexp(logk[:, labeled_refs.labels == c], axis=1) for c in ids])
    return per_class - logsumexp(per_class, axis=1, keepdims=True), ids


def soft_class_probs(x, labeled_refs: DataSet, bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-kernel class posteriors p(c | x) from labeled references: (probs (B, C), class ids)."""
    logp, ids = kernel_class_log_probs(x, labeled_refs, bandwidth)
    return np.exp(logp), ids


def spread_class_probs(x, labeled_refs: DataSet, n_neighbors: int = 10, alpha: float = 0.2,
                       max_iter: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Class posteriors by label spreading on a kNN graph over the points plus the labeled refs.

    The refs join the graph as extra labeled nodes, so a handful of labels
    propagates along the data manifold instead of through Euclidean balls.
    """
    if labeled_refs.labels is None:
        raise InputError("reference set must be labeled")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    ids = labeled_refs.classes()
    if ids.size == 1:
        return np.ones((X.shape[0], 1)), ids
    nodes = np.vstack([X, labeled_refs.points])
    y = np.concatenate([np.full(X.shape[0], -1, dtype=np.int64), labeled_refs.labels])
    k = min(n_neighbors, nodes.shape[0] - 1)
    model = LabelSpreading(kernel="knn", n_neighbors=k, alpha=alpha, max_iter=max_iter).fit(nodes, y)
    probs = model.label_distributions_[: X.shape[0]]
    # rows the propagation never reached come back as NaN; make them uniform
    probs = np.where(np.isfinite(probs), probs, 1.0 / ids.size)
    return probs, ids


def _class_log_probs(x, labeled_refs: DataSet, bandwidth: Optional[float], method: str):
    """log p(c | x) per class; staying in log space keeps far-away points at finite weight."""
    if labeled_refs.labels is None:
        raise InputError("reference set must be labeled")
    if method == "kernel":
        h = default_bandwidth(labeled_refs) if bandwidth is None else bandwidth
        return kernel_class_log_probs(x, labeled_refs, h)
    if method == "spread":
        probs, ids = spread_class_probs(x, labeled_refs)
        with np.errstate(divide="ignore"):
            return np.log(probs), ids
    raise InputError(f"unknown soft method {method!r}; expected one of {SOFT_METHODS}")


def _normalized(logw: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(logw)):
        raise InputError("soft weights vanish on the whole dataset")
    return np.exp(logw - logsumexp(logw))


def soft_reweight(data: DataSet, labeled_refs: DataSet, target_class: int,
                  bandwidth: Optional[float] = None, method: str = "kernel") -> DataSet:
    """Copy of `data` with prior weights proportional to p(target | x_n)."""
    if labeled_refs.labels is None:
        raise InputError("reference set must be labeled")
    if target_class not in set(labeled_refs.labels.tolist()):
        raise InputError(f"target class {target_class} absent from the labeled references")
    logp, ids = _class_log_probs(data.points, labeled_refs, bandwidth, method)
    return data.with_weights(_normalized(logp[:, int(np.flatnonzero(ids == target_class)[0])]))


def soft_composition(data: DataSet, labeled_refs: DataSet, fraction: float, positive_class: int,
                     bandwidth: Optional[float] = None, method: str = "kernel") -> DataSet:
    """Soft reference distribution putting `fraction` of its mass on `positive_class`.

    Weights are fraction * p(pos | x) / sum p(pos | .) + (1 - fraction) * p(rest | x) / sum p(rest | .).
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError(f"fraction must lie in [0, 1], got {fraction}")
    logp, ids = _class_log_probs(data.points, labeled_refs, bandwidth, method)
    if positive_class not in ids:
        raise InputError(f"class {positive_class} absent from the labeled references")
    j = int(np.flatnonzero(ids == positive_class)[0])
    if ids.size < 2:
        raise InputError("soft composition needs mass on both sides of the split")
    rest = logsumexp(np.delete(logp, j, axis=1), axis=1)
    w = fraction * _normalized(logp[:, j]) + (1.0 - fraction) * _normalized(rest)
    return data.with_weights(w)


def hard_filter(data: DataSet, target_class: int) -> DataSet:
    """Only the points of `target_class`, with uniform weights."""
    if data.labels is None:
        raise InputError("hard filtering needs a labeled dataset")
    keep = np.flatnonzero(data.labels == target_class)
    if keep.size == 0:
        raise InputError(f"no points of class {target_class}")
    return DataSet(data.points[keep], data.labels[keep])


@dataclass
class CompositionCurve:
    rows: list = field(default_factory=list)  # (reference_fraction, generated_fraction, n)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def reference(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def generated(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["fraction", "generated_fraction", "n"])
            for frac, gen, n in self.rows:
                w.writerow([repr(float(frac)), repr(float(gen)), int(n)])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "CompositionCurve":
        with open(path, newline="") as f:
            rows = [(float(r["fraction"]), float(r["generated_fraction"]), int(r["n"])) for r in csv.DictReader(f)]
        return cls(rows)


def mixed_reference(bank_a: DataSet, bank_b: DataSet, fraction: float, size: int,
                    rng: np.random.Generator) -> DataSet:
    """round(fraction * size) points from bank A, the rest from bank B (without replacement)."""
    n_a = int(round(fraction * size))
    n_b = size - n_a
    if n_a > len(bank_a) or n_b > len(bank_b):
        raise InputError("reference size exceeds a bank")
    parts = []
    if n_a:
        parts.append(bank_a.subset(np.sort(rng.choice(len(bank_a), n_a, replace=False))))
    if n_b:
        parts.append(bank_b.subset(np.sort(rng.choice(len(bank_b), n_b, replace=False))))
    labels = None
    if all(p.labels is not None for p in parts):
        labels = np.concatenate([p.labels for p in parts])
    return DataSet(np.vstack([p.points for p in parts]), labels)


def composition_sweep(base: Union[MeanProvider, DataSet], bank_a: DataSet, bank_b: DataSet,
                      fractions: Sequence[float], spec: GuidanceSpec, cfg: SamplerConfig,
                      protos: LabeledPrototypes, n_samples: int = 500,
                      reference_size: Optional[int] = None, target_class: Optional[int] = None,
                      sched: AffineSchedule = LINEAR) -> CompositionCurve:
    """Generated target-class fraction as the reference mix moves from bank B to bank A.

    The source noise is shared by every row (seeded by cfg.seed); each row
    draws its reference subset from a stream derived from the row index.
    """
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise InputError("fractions must lie in [0, 1]")
    if isinstance(base, DataSet):
        base = EmpiricalPosterior(base, sched)
    size = reference_size or min(len(bank_a), len(bank_b))
    if target_class is None:
        if bank_a.labels is None:
            raise InputError("target_class is required for an unlabeled bank")
        target_class = int(np.bincount(bank_a.labels).argmax())
    x0 = sample_source(cfg.seed, n_samples, bank_a.dim)
    curve = CompositionCurve()
    for row, frac in enumerate(fractions):
        rng = np.random.default_rng(derive_seed(cfg.seed, row))
        refs = mixed_reference(bank_a, bank_b, frac, size, rng)
        out = euler_sample(RmgField(base, refs, spec, sched), x0, cfg).final
        labels = classify(out, protos)
        curve.rows.append((float(frac), float(np.mean(labels == target_class)), n_samples))
    return curve
