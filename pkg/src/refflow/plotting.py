"""Deterministic standalone SVG rendering for flow fields, trajectories, curves and image grids.

Output bytes depend only on the input arrays and STYLE_VERSION: coordinates are
printed with a fixed number of decimals and element order follows input order.
Input CSV schemas:

    FlowField     x0,x1,u0,u1          one grid point and its velocity per row
    Trajectories  traj,step,t,x0,x1    one state per row, grouped by trajectory id
    Curve         <x column>,<y column>  composition curves use fraction,generated_fraction
    ImageGrid     x0..x{d-1}           one flattened square image per row, values in [-1, 1]
"""
from __future__ import annotations

import base64
import csv
import struct
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InputError

STYLE_VERSION = 1

PathLike = Union[str, Path]


class PlotKind(str, Enum):
    FLOW_FIELD = "flowfield"
    TRAJECTORIES = "trajectories"
    CURVE = "curve"
    IMAGE_GRID = "imagegrid"


@dataclass(frozen=True)
class Style:
    width: int = 480
    height: int = 400
    margin: int = 40
    stroke: str = "#1f4e79"
    accent: str = "#c0392b"
    font_size: int = 12
    arrow_scale: float = 0.9  # longest arrow as a fraction of the grid spacing
    cell: int = 56  # image-grid cell size in px
    columns: int = 10


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _header(width: int, height: int, title: Optional[str]) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" data-style-version="{STYLE_VERSION}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width // 2}" y="16" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12">{_escape(title)}</text>')
    return out


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


class _Frame:
    """Affine map from data coordinates to the plotting box (y axis flipped)."""

    def __init__(self, lo, hi, style: Style):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        self.lo, self.span, self.style = lo, span, style
        self.w = style.width - 2 * style.margin
        self.h = style.height - 2 * style.margin

    def __call__(self, p) -> tuple[float, float]:
        s = self.style
        x = s.margin + (p[0] - self.lo[0]) / self.span[0] * self.w
        y = s.height - s.margin - (p[1] - self.lo[1]) / self.span[1] * self.h
        return float(x), float(y)

    def scale(self, v) -> tuple[float, float]:
        return float(v[0] / self.span[0] * self.w), float(-v[1] / self.span[1] * self.h)


def _axes(frame: _Frame, style: Style) -> str:
    m = style.margin
    return (f'<rect x="{m}" y="{m}" width="{frame.w}" height="{frame.h}" fill="none" '
            f'stroke="#999999" stroke-width="1"/>')


def flow_field_svg(points, vectors, style: Style = Style(), title: Optional[str] = None) -> str:
    """One <line class="arrow"> per grid point, lengths scaled so the longest fits the spacing."""
    P = np.asarray(points, dtype=float)
    V = np.asarray(vectors, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or V.shape != P.shape:
        raise InputError("flow field needs (n, 2) points and vectors")
    frame = _Frame(P.min(axis=0), P.max(axis=0), style)
    n_side = max(2.0, np.sqrt(len(P)))
    spacing = min(frame.w, frame.h) / (n_side - 1)
    px = np.array([frame.scale(v) for v in V]) if len(V) else np.zeros((0, 2))
    longest = float(np.max(np.linalg.norm(px, axis=1))) if len(px) else 0.0
    k = style.arrow_scale * spacing / longest if longest > 0 else 0.0
    lines = _header(style.width, style.height, title)
    lines.append(_axes(frame, style))
    lines.append('<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
                 f'<path d="M0,0 L6,3 L0,6 z" fill="{style.stroke}"/></marker></defs>')
    for p, d in zip(P, px):
        x, y = frame(p)
        lines.append(f'<line class="arrow" x1="{_f(x)}" y1="{_f(y)}" x2="{_f(x + k * d[0])}" y2="{_f(y + k * d[1])}" '
                     f'stroke="{style.stroke}" stroke-width="1" marker-end="url(#head)"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def trajectories_svg(paths: Sequence[np.ndarray], style: Style = Style(), title: Optional[str] = None,
                     points: Optional[np.ndarray] = None) -> str:
    """One <polyline class="trajectory"> per path; optional background points as small circles."""
    paths = [np.asarray(p, dtype=float) for p in paths]
    if not paths or any(p.ndim != 2 or p.shape[1] != 2 for p in paths):
        raise InputError("trajectories need a nonempty list of (steps, 2) arrays")
    allp = np.vstack(paths + ([np.asarray(points, dtype=float)] if points is not None else []))
    frame = _Frame(allp.min(axis=0), allp.max(axis=0), style)
    lines = _header(style.width, style.height, title)
    lines.append(_axes(frame, style))
    if points is not None:
        for p in np.asarray(points, dtype=float):
            x, y = frame(p)
            lines.append(f'<circle class="data" cx="{_f(x)}" cy="{_f(y)}" r="1.5" fill="#aaaaaa"/>')
    for path in paths:
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in (frame(p) for p in path))
        lines.append(f'<polyline class="trajectory" points="{coords}" fill="none" stroke="{style.stroke}" '
                     'stroke-width="1" stroke-opacity="0.7"/>')
        x, y = frame(path[-1])
        lines.append(f'<circle class="endpoint" cx="{_f(x)}" cy="{_f(y)}" r="2" fill="{style.accent}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def curve_svg(xs, ys, style: Style = Style(), title: Optional[str] = None, x_label: str = "",
              y_label: str = "", bounds: Optional[tuple] = None) -> str:
    """A single <polyline class="curve"> with one vertex per row, plus a marker per vertex."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 1:
        raise InputError("curve needs equal-length nonempty x and y columns")
    lo, hi = bounds if bounds is not None else ((xs.min(), ys.min()), (xs.max(), ys.max()))
    frame = _Frame(lo, hi, style)
    lines = _header(style.width, style.height, title)
    lines.append(_axes(frame, style))
    pts = [frame((x, y)) for x, y in zip(xs, ys)]
    coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
    lines.append(f'<polyline class="curve" points="{coords}" fill="none" stroke="{style.stroke}" stroke-width="2"/>')
    for x, y in pts:
        lines.append(f'<circle class="vertex" cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{style.accent}"/>')
    if x_label:
        lines.append(f'<text x="{style.width // 2}" y="{style.height - 8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="{style.font_size}">{_escape(x_label)}</text>')
    if y_label:
        lines.append(f'<text x="12" y="{style.height // 2}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="{style.font_size}" transform="rotate(-90 12 {style.height // 2})">'
                     f'{_escape(y_label)}</text>')
    for val, (x, y) in ((lo[0], frame(lo)), (hi[0], frame((hi[0], lo[1])))):
        lines.append(f'<text x="{_f(x)}" y="{_f(y + 14)}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{val:g}</text>')
    for val, (x, y) in ((lo[1], frame(lo)), (hi[1], frame((lo[0], hi[1])))):
        lines.append(f'<text x="{_f(x - 4)}" y="{_f(y + 4)}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{val:g}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def gray_levels(values) -> np.ndarray:
    """[-1, 1] -> uint8 gray via round((v + 1) / 2 * 255), clipped."""
    v = np.clip(np.asarray(values, dtype=float), -1.0, 1.0)
    return np.round((v + 1.0) / 2.0 * 255.0).astype(np.uint8)


def png_gray(pixels: np.ndarray) -> bytes:
    """Minimal 8-bit grayscale PNG (no filtering, fixed zlib level)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    raw = b"".join(b"\x00" + pixels[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b"")


def image_grid_svg(rows, style: Style = Style(), title: Optional[str] = None) -> str:
    """One <image class="cell"> per row; each row is a flattened square image."""
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    side = int(round(np.sqrt(X.shape[1])))
    if side * side != X.shape[1]:
        raise InputError(f"row length {X.shape[1]} is not a square image")
    cols = min(style.columns, X.shape[0])
    n_rows = -(-X.shape[0] // cols)
    top = 24 if title else 0
    width, height = cols * style.cell, n_rows * style.cell + top
    lines = _header(width, height, title)
    for i, row in enumerate(X):
        png = base64.b64encode(png_gray(gray_levels(row).reshape(side, side))).decode("ascii")
        x, y = (i % cols) * style.cell, top + (i // cols) * style.cell
        lines.append(f'<image class="cell" x="{x}" y="{y}" width="{style.cell}" height="{style.cell}" '
                     f'style="image-rendering:pixelated" href="data:image/png;base64,{png}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ CSV in


def _read_table(path: PathLike) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return header, rows


def _columns(path: PathLike, names: Sequence[str]) -> np.ndarray:
    header, rows = _read_table(path)
    missing = [n for n in names if n not in header]
    if missing:
        raise InputError(f"{path}: missing columns {missing}; found {header}")
    idx = [header.index(n) for n in names]
    return np.array([[float(r[i]) for i in idx] for r in rows]).reshape(len(rows), len(names))


def render(kind: Union[PlotKind, str], input_csv: PathLike, style: Style = Style(),
           title: Optional[str] = None, x: str = "fraction", y: str = "generated_fraction") -> str:
    """SVG text for a CSV of the given kind; a schema mismatch raises InputError."""
    kind = PlotKind(kind)
    if kind is PlotKind.FLOW_FIELD:
        t = _columns(input_csv, ["x0", "x1", "u0", "u1"])
        return flow_field_svg(t[:, :2], t[:, 2:], style, title)
    if kind is PlotKind.TRAJECTORIES:
        t = _columns(input_csv, ["traj", "step", "x0", "x1"])
        paths = []
        for tid in dict.fromkeys(t[:, 0].tolist()):
            sel = t[t[:, 0] == tid]
            paths.append(sel[np.argsort(sel[:, 1], kind="stable")][:, 2:])
        return trajectories_svg(paths, style, title)
    if kind is PlotKind.CURVE:
        t = _columns(input_csv, [x, y])
        bounds = ((0.0, 0.0), (1.0, 1.0)) if (x, y) == ("fraction", "generated_fraction") else None
        return curve_svg(t[:, 0], t[:, 1], style, title, x, y, bounds)
    header, _ = _read_table(input_csv)
    feats = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    if not feats:
        raise InputError(f"{input_csv}: image grid needs x<i> pixel columns")
    return image_grid_svg(_columns(input_csv, feats), style, title)


def write_svg(path: PathLike, svg: str) -> None:
    Path(path).write_text(svg, encoding="utf-8")
