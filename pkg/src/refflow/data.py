"""Dataset generators, MNIST IDX ingestion and CSV persistence.

Dataset CSV schema: a header row ``x0,...,x{d-1}`` followed by an optional
``label`` column (integer class id) and an optional ``weight`` column
(nonnegative prior weight). One row per point.
"""
from __future__ import annotations

import csv
import gzip
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import InputError
from .posterior import DataSet
from .sampler import sample_source

IDX_LABEL_MAGIC = 2049
IDX_IMAGE_MAGIC = 2051

PathLike = Union[str, Path]


def two_moons(n: int = 500, noise: float = 0.1, seed: int = 0) -> DataSet:
    """Interleaved half circles; class 0 is the upper moon (cos th, sin th),
    class 1 the lower moon (1 - cos th, 0.5 - sin th), th evenly spaced on [0, pi]."""
    if n < 2:
        raise InputError("two moons needs n >= 2")
    n_up = n // 2
    n_low = n - n_up
    th_up = np.linspace(0.0, np.pi, n_up)
    th_low = np.linspace(0.0, np.pi, n_low)
    pts = np.vstack([
        np.column_stack([np.cos(th_up), np.sin(th_up)]),
        np.column_stack([1.0 - np.cos(th_low), 0.5 - np.sin(th_low)]),
    ])
    labels = np.concatenate([np.zeros(n_up, dtype=np.int64), np.ones(n_low, dtype=np.int64)])
    if noise > 0:
        pts = pts + noise * sample_source(seed, n, 2)
    return DataSet(pts, labels)


def gaussians(centers: Sequence[Sequence[float]], sigma: float = 0.5, n_per_class: int = 250,
              seed: int = 0) -> DataSet:
    """Isotropic Gaussian blobs, one class per center."""
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or len(centers) < 1:
        raise InputError("centers must be a nonempty (K, d) array")
    if n_per_class < 1 or len(centers) * n_per_class < 2:
        raise InputError("need at least 2 points")
    k, d = centers.shape
    z = sample_source(seed, k * n_per_class, d)
    pts = np.repeat(centers, n_per_class, axis=0) + sigma * z
    labels = np.repeat(np.arange(k, dtype=np.int64), n_per_class)
    return DataSet(pts, labels)


def _open(path: PathLike):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path: PathLike) -> np.ndarray:
    """uint8 array (count, rows, cols) from an IDX image file (magic 2051, big-endian header)."""
    with _open(path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise InputError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise InputError(f"{path}: bad magic {magic}, expected {IDX_IMAGE_MAGIC}")
        buf = f.read()
    if len(buf) != count * rows * cols:
        raise InputError(f"{path}: expected {count * rows * cols} pixel bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path: PathLike) -> np.ndarray:
    with _open(path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise InputError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">ii", header)
        if magic != IDX_LABEL_MAGIC:
            raise InputError(f"{path}: bad magic {magic}, expected {IDX_LABEL_MAGIC}")
        buf = f.read()
    if len(buf) != count:
        raise InputError(f"{path}: expected {count} labels, found {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8).copy()


def write_idx(images: Optional[np.ndarray], labels: Optional[np.ndarray], image_path: Optional[PathLike] = None,
              label_path: Optional[PathLike] = None) -> None:
    """Write IDX files (used to build fixtures)."""
    if images is not None:
        images = np.asarray(images, dtype=np.uint8)
        with open(image_path, "wb") as f:
            f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, *images.shape))
            f.write(images.tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        with open(label_path, "wb") as f:
            f.write(struct.pack(">ii", IDX_LABEL_MAGIC, labels.shape[0]))
            f.write(labels.tobytes())


def scale_pixels(pixels: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] -> float [-1, 1]."""
    return np.asarray(pixels, dtype=float) / 127.5 - 1.0


def mnist_binary(image_path: PathLike, label_path: PathLike, digits: Iterable[int] = (0, 1),
                 max_per_class: Optional[int] = None) -> DataSet:
    """Flattened 784-d images of the chosen digits, pixels scaled to [-1, 1], labels = digit."""
    try:
        images = read_idx_images(image_path)
        labels = read_idx_labels(label_path)
    except OSError as exc:
        raise InputError(f"cannot read MNIST files: {exc}") from exc
    if images.shape[0] != labels.shape[0]:
        raise InputError("image and label counts differ")
    keep = []
    for dgt in digits:
        idx = np.flatnonzero(labels == dgt)
        if max_per_class is not None:
            idx = idx[:max_per_class]
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    if keep.size < 2:
        raise InputError("fewer than 2 images match the requested digits")
    flat = images[keep].reshape(keep.size, -1)
    return DataSet(scale_pixels(flat), labels[keep].astype(np.int64))


def write_dataset_csv(path: PathLike, data: DataSet, include_weights: bool = False) -> None:
    d = data.dim
    header = [f"x{i}" for i in range(d)]
    cols = [data.points]
    if data.labels is not None:
        header.append("label")
    if include_weights and data.weights is not None:
        header.append("weight")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.points[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            if include_weights and data.weights is not None:
                row.append(repr(float(data.weights[i])))
            w.writerow(row)


def read_dataset_csv(path: PathLike) -> DataSet:
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc
    feat = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not feat:
        raise InputError(f"{path}: no x<i> feature columns")
    arr = np.array([[float(r[i]) for i in feat] for r in rows])
    labels = weights = None
    if "label" in header:
        j = header.index("label")
        labels = np.array([int(r[j]) for r in rows])
    if "weight" in header:
        j = header.index("weight")
        weights = np.array([float(r[j]) for r in rows])
    return DataSet(arr, labels, weights)


def write_points_csv(path: PathLike, points: np.ndarray, extra: Optional[dict] = None) -> None:
    """Plain point table with header x0..x{d-1} plus optional extra columns."""
    points = np.atleast_2d(points)
    header = [f"x{i}" for i in range(points.shape[1])]
    extra = extra or {}
    header.extend(extra)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for i in range(points.shape[0]):
            row = [repr(float(v)) for v in points[i]]
            row.extend(str(col[i]) for col in extra.values())
            w.writerow(row)
