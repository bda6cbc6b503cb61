"""Synthetic masks and a small on-disk fixture dataset.

Fixture frames are 100 or 200 pixels per side, so six-decimal normalized
coordinates land exactly on pixel positions.
"""
from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import write_dataset
from .raster import rasterize_polygon, trace_boundary

SUITE_SIZE = 128


def _blank(h=SUITE_SIZE, w=SUITE_SIZE):
    return np.zeros((h, w), dtype=bool)


def square(size: int, cx: int = 64, cy: int = 64, frame: int = SUITE_SIZE) -> np.ndarray:
    m = _blank(frame, frame)
    m[cy - size // 2:cy - size // 2 + size, cx - size // 2:cx - size // 2 + size] = True
    return m


def l_shape(size: int, arm: int, x0: int, y0: int, frame: int = SUITE_SIZE) -> np.ndarray:
    """Vertical bar plus a bottom bar, both ``arm`` thick, in a ``size`` box."""
    m = _blank(frame, frame)
    m[y0:y0 + size, x0:x0 + arm] = True
    m[y0 + size - arm:y0 + size, x0:x0 + size] = True
    return m


def ring(outer: float, inner: float, cx: float = 64, cy: float = 64, frame: int = SUITE_SIZE) -> np.ndarray:
    yy, xx = np.mgrid[:frame, :frame] + 0.5
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    return (d2 <= outer ** 2) & (d2 > inner ** 2)


def bar(x0: int, y0: int, w: int, h: int, frame: int = SUITE_SIZE) -> np.ndarray:
    m = _blank(frame, frame)
    m[y0:y0 + h, x0:x0 + w] = True
    return m


def diagonal_bar(thickness: float, frame: int = SUITE_SIZE) -> np.ndarray:
    t = thickness / 2 / frame
    poly = [(0.2 - t, 0.2 + t), (0.2 + t, 0.2 - t), (0.8 + t, 0.8 - t), (0.8 - t, 0.8 + t)]
    return rasterize_polygon(poly, frame, frame)


def disk(radius: float, cx: float, cy: float, w: int, h: int) -> np.ndarray:
    yy, xx = np.mgrid[:h, :w] + 0.5
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2


def shape_suite() -> list[tuple[str, np.ndarray]]:
    """Twenty named masks: squares, L-shapes, rings and thin bars."""
    return [
        ("square-40", square(40)),
        ("square-24-offset", square(24, 40, 80)),
        ("square-64", square(64)),
        ("square-12", square(12, 90, 30)),
        ("square-30-edge", square(30, 15, 64)),
        ("l-thick", l_shape(64, 32, 32, 32)),
        ("l-medium", l_shape(60, 16, 30, 30)),
        ("l-thin", l_shape(60, 6, 30, 30)),
        ("l-thin-large", l_shape(90, 8, 18, 18)),
        ("l-small", l_shape(30, 10, 50, 50)),
        ("ring-50-30", ring(25, 15)),
        ("ring-60-50", ring(30, 25)),
        ("ring-offset", ring(20, 10, 40, 40)),
        ("ring-large-thin", ring(50, 46)),
        ("ring-small", ring(10, 5, 90, 90)),
        ("bar-h-60x4", bar(34, 62, 60, 4)),
        ("bar-v-4x60", bar(62, 34, 4, 60)),
        ("bar-h-80x2", bar(24, 63, 80, 2)),
        ("bar-diagonal", diagonal_bar(4.0)),
        ("bar-short-20x3", bar(54, 20, 20, 3)),
    ]


def _image(h: int, w: int, masks, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = np.full((h, w, 3), 90, dtype=np.uint8) + rng.integers(0, 20, size=(h, w, 3), dtype=np.uint8)
    for i, m in enumerate(masks):
        img[m] = (200 - 40 * i, 60 + 50 * i, 120)
    return img


def _box(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def fixture_annotations():
    """``(images, annotations)`` for :func:`write_dataset`: 3 images, 5 annotations.

    Sample ``0000002_01`` uses the traced mask boundary itself as its contour.
    """
    a_rect = bar(20, 20, 30, 25, frame=100)
    a_disk = disk(15, 70, 65, 100, 100)
    b_disk = disk(30, 100, 50, 200, 100)
    c_l = l_shape(50, 16, 30, 25, frame=100)
    c_sq = square(20, 75, 25, frame=100)
    open_box = [[0.16, 0.16], [0.54, 0.16], [0.54, 0.49], [0.16, 0.49]]   # left open, closed on load
    annotations = {
        "0000001": [
            (a_rect, [open_box], []),
            (a_disk, [_box(0.52, 0.47, 0.88, 0.83)], [_box(0.80, 0.75, 0.95, 0.95)]),
        ],
        "0000002": [
            (b_disk, [trace_boundary(b_disk).tolist()], []),
        ],
        "0000003": [
            (c_l, [[[0.27, 0.22], [0.49, 0.22], [0.49, 0.57], [0.83, 0.57], [0.83, 0.78], [0.27, 0.78]]], []),
            (c_sq, [_box(0.62, 0.12, 0.88, 0.38)], []),
        ],
    }
    images = {
        "0000001": _image(100, 100, [a_rect, a_disk], 1),
        "0000002": _image(100, 200, [b_disk], 2),
        "0000003": _image(100, 100, [c_l, c_sq], 3),
    }
    return images, annotations


def make_fixture_dataset(root) -> Path:
    images, annotations = fixture_annotations()
    return write_dataset(root, images, annotations)


CORRUPTIONS = ("missing-mask", "bad-name", "out-of-range", "dim-mismatch", "empty-mask", "disjoint-contour")


def inject_corruption(root, kind: str) -> Path:
    """Damage a fixture dataset in place in one of :data:`CORRUPTIONS` ways."""
    root = Path(root)
    masks = root / "masks"
    ann_path = root / "contours.json"
    if kind == "missing-mask":
        (masks / "0000001_02.png").unlink()
    elif kind == "bad-name":
        shutil.move(masks / "0000003_02.png", masks / "0000003_2.png")
    elif kind == "out-of-range":
        data = json.loads(ann_path.read_text())
        data["0000001"][0]["pos_contours"][0][1][0] = 1.3
        ann_path.write_text(json.dumps(data))
    elif kind == "dim-mismatch":
        Image.fromarray(np.full((80, 100), 255, dtype=np.uint8)).save(masks / "0000003_01.png")
    elif kind == "empty-mask":
        Image.fromarray(np.zeros((100, 100), dtype=np.uint8)).save(masks / "0000003_02.png")
    elif kind == "disjoint-contour":
        data = json.loads(ann_path.read_text())
        data["0000003"][1]["pos_contours"] = [_box(0.02, 0.80, 0.10, 0.95)]
        ann_path.write_text(json.dumps(data))
    else:
        raise ValueError(f"unknown corruption {kind!r}; expected one of {CORRUPTIONS}")
    return root
