import base64
import re
import struct
import zlib

import numpy as np
import pytest

from refflow.data import scale_pixels, write_points_csv
from refflow.errors import InputError
from refflow.plotting import (
    STYLE_VERSION,
    PlotKind,
    curve_svg,
    flow_field_svg,
    gray_levels,
    image_grid_svg,
    png_gray,
    render,
    trajectories_svg,
)


def decode_png(blob: bytes) -> np.ndarray:
    assert blob[:8] == b"\x89PNG\r\n\x1a\n"
    pos, idat, shape = 8, b"", None
    while pos < len(blob):
        (n,) = struct.unpack(">I", blob[pos:pos + 4])
        tag, data = blob[pos + 4:pos + 8], blob[pos + 8:pos + 8 + n]
        if tag == b"IHDR":
            w, h = struct.unpack(">II", data[:8])
            shape = (h, w)
        elif tag == b"IDAT":
            idat += data
        pos += 12 + n
    raw = zlib.decompress(idat)
    h, w = shape
    rows = [raw[r * (w + 1) + 1:(r + 1) * (w + 1)] for r in range(h)]
    return np.array([list(r) for r in rows], dtype=np.uint8)


def test_flowfield_arrow_count(tmp_path):
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    write_points_csv(tmp_path / "f.csv", pts, {"u0": [1, 0, -1, 0], "u1": [0, 1, 0, -1]})
    svg = render("flowfield", tmp_path / "f.csv")
    assert svg.count('class="arrow"') == 4


def test_curve_vertices(tmp_path):
    (tmp_path / "c.csv").write_text("fraction,generated_fraction,n\n0,0.1,5\n0.25,0.3,5\n0.5,0.5,5\n0.75,0.7,5\n1,0.9,5\n")
    svg = render(PlotKind.CURVE, tmp_path / "c.csv")
    assert svg.count("<polyline") == 1
    pts = re.search(r'class="curve" points="([^"]+)"', svg).group(1).split()
    assert len(pts) == 5
    assert svg.count('class="vertex"') == 5


def test_image_grid_cells_and_pixels(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(10, 784))
    rows = scale_pixels(raw)
    write_points_csv(tmp_path / "img.csv", rows)
    svg = render("imagegrid", tmp_path / "img.csv")
    cells = re.findall(r'class="cell"[^>]*href="data:image/png;base64,([^"]+)"', svg)
    assert len(cells) == 10
    for enc, want in zip(cells, raw):
        img = decode_png(base64.b64decode(enc))
        assert img.shape == (28, 28)
        np.testing.assert_array_equal(img.ravel(), want)


def test_gray_levels():
    np.testing.assert_array_equal(gray_levels([-1.0, 0.0, 1.0, 5.0]), [0, 128, 255, 255])


def test_png_decodes():
    px = np.arange(12, dtype=np.uint8).reshape(3, 4)
    np.testing.assert_array_equal(decode_png(png_gray(px)), px)


def test_trajectories(tmp_path):
    (tmp_path / "t.csv").write_text("traj,step,x0,x1\n0,0,0,0\n0,1,1,1\n1,0,0,1\n1,1,1,0\n1,2,2,0\n")
    svg = render("trajectories", tmp_path / "t.csv")
    assert svg.count('class="trajectory"') == 2


def test_deterministic_bytes(tmp_path):
    pts = np.random.default_rng(1).normal(size=(9, 2))
    a = flow_field_svg(pts, pts * 0.5, title="x")
    b = flow_field_svg(pts, pts * 0.5, title="x")
    assert a == b
    assert f'data-style-version="{STYLE_VERSION}"' in a


def test_title_escaped():
    svg = curve_svg([0, 1], [0, 1], title="a<b & c")
    assert "a&lt;b &amp; c" in svg


def test_schema_mismatch(tmp_path):
    (tmp_path / "c.csv").write_text("a,b\n1,2\n")
    for kind in ("flowfield", "curve", "trajectories", "imagegrid"):
        with pytest.raises(InputError):
            render(kind, tmp_path / "c.csv")


def test_non_square_image():
    with pytest.raises(InputError):
        image_grid_svg(np.zeros((2, 10)))


def test_bad_vectors():
    with pytest.raises(InputError):
        flow_field_svg(np.zeros((3, 2)), np.zeros((2, 2)))


def test_zero_field_draws_points():
    svg = flow_field_svg(np.zeros((4, 2)) + np.arange(4)[:, None], np.zeros((4, 2)))
    assert svg.count('class="arrow"') == 4


def test_trajectories_with_background():
    paths = [np.array([[0.0, 0.0], [1.0, 1.0]])]
    svg = trajectories_svg(paths, points=np.array([[0.5, 0.5], [0.2, 0.1]]))
    assert svg.count('class="trajectory"') == 1
    assert svg.count('class="data"') == 2 and svg.count('class="endpoint"') == 1
