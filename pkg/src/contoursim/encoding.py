"""Three-plane interaction encoding: positive contours, negative contours and
the previous prediction.

Contours arrive either as masks (boolean or integer arrays shaped like the
image) or as normalized polygons (float arrays or nested lists of ``(x, y)``
pairs). Polygons are closed before use.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import cv2
import numpy as np
from PIL import Image

from .raster import as_mask, as_polygon, draw_polyline, mask_to_png_bytes, rasterize_polygon, trace_boundary

MODES = ("filled", "line")
# Line widths as a fraction of the shorter image side.
LINE_FRACTIONS = (0.005, 0.01, 0.02, 0.05, 0.1)


@dataclass(frozen=True)
class EncodingConfig:
    mode: str = "filled"
    w: float = 0.02

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown encoding mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "line" and not self.w > 0:
            raise ValueError("line encoding needs w > 0")


def line_width_px(w: float, image_width: int, image_height: int) -> int:
    """``w`` times the shorter image side, rounded half away from zero, at least 1."""
    if not w > 0:
        raise ValueError("w must be positive")
    return max(1, int(math.floor(w * min(image_width, image_height) + 0.5)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class InteractionEncoding:
    """Positive and negative planes (bool) plus the previous probability plane."""

    positive: np.ndarray
    negative: np.ndarray
    previous: np.ndarray
    mode: str = "filled"

    def __post_init__(self):
        pos, neg = as_mask(self.positive), as_mask(self.negative)
        prev = np.asarray(self.previous, dtype=np.float64)
        if not pos.shape == neg.shape == prev.shape:
            raise ValueError(f"plane shapes differ: {pos.shape}, {neg.shape}, {prev.shape}")
        if prev.size and (prev.min() < 0 or prev.max() > 1):
            raise ValueError("previous plane must hold probabilities in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown encoding mode {self.mode!r}")
        object.__setattr__(self, "positive", _frozen(pos))
        object.__setattr__(self, "negative", _frozen(neg))
        object.__setattr__(self, "previous", _frozen(prev))

    @property
    def shape(self) -> tuple[int, int]:
        return self.positive.shape

    @property
    def width(self) -> int:
        return self.positive.shape[1]

    @property
    def height(self) -> int:
        return self.positive.shape[0]

    def mapped(self, fn) -> "InteractionEncoding":
        """Apply the same spatial map to all three planes."""
        return InteractionEncoding(fn(self.positive), fn(self.negative), fn(self.previous), self.mode)

    def flipped(self) -> "InteractionEncoding":
        return self.mapped(lambda a: a[:, ::-1])

    def with_previous(self, previous) -> "InteractionEncoding":
        return InteractionEncoding(self.positive, self.negative, previous, self.mode)

    def equals(self, other: "InteractionEncoding") -> bool:
        return (self.mode == other.mode and np.array_equal(self.positive, other.positive)
                and np.array_equal(self.negative, other.negative)
                and np.array_equal(self.previous, other.previous))


def _is_mask(item) -> bool:
    a = np.asarray(item)
    return a.ndim == 2 and (a.dtype == bool or np.issubdtype(a.dtype, np.integer)) and not (
        a.shape[1] == 2 and np.issubdtype(a.dtype, np.floating))


def close_polygon(poly) -> np.ndarray:
    """Append the first vertex when the path is open."""
    p = as_polygon(poly)
    if len(p) < 2:
        raise ValueError("degenerate contour")
    if np.any(p[0] != p[-1]):
        p = np.vstack([p, p[:1]])
    return p


def _component_lines(mask: np.ndarray, lw: int) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask)
    n, labels = cv2.connectedComponents(mask.view(np.uint8), connectivity=8)
    for lab in range(1, n):
        out |= draw_polyline(trace_boundary(labels == lab), lw, w, h, close=True)
    return out


def contour_plane(items: Sequence, config: EncodingConfig, width: int, height: int) -> np.ndarray:
    """Union of contours rendered filled or as lines."""
    out = np.zeros((height, width), dtype=bool)
    lw = line_width_px(config.w, width, height) if config.mode == "line" else 0
    for item in items:
        if _is_mask(item):
            m = as_mask(item)
            if m.shape != (height, width):
                raise ValueError(f"contour mask shape {m.shape} does not match image {(height, width)}")
            out |= m if config.mode == "filled" else _component_lines(m, lw)
        else:
            p = close_polygon(item)
            if config.mode == "filled":
                out |= rasterize_polygon(p, width, height)
            else:
                out |= draw_polyline(p, lw, width, height)
    return out


def encode_interaction(pos: Sequence, neg: Sequence, previous=None,
                       config: EncodingConfig = EncodingConfig(),
                       dims: Optional[tuple[int, int]] = None) -> InteractionEncoding:
    """Encode positive and negative contours plus the previous prediction.

    ``dims`` is ``(width, height)``; it may be omitted when any input is a mask.
    """
    if dims is None:
        for item in list(pos) + list(neg) + ([previous] if previous is not None else []):
            if _is_mask(item) or (previous is not None and item is previous):
                h, w = np.asarray(item).shape
                dims = (w, h)
                break
        else:
            raise ValueError("dims are required when all contours are polygons")
    width, height = dims
    pos_plane = contour_plane(pos, config, width, height)
    neg_plane = contour_plane(neg, config, width, height)
    if previous is None:
        if not pos_plane.any() and not neg_plane.any():
            raise ValueError("no interaction to encode")
        previous = np.zeros((height, width))
    return InteractionEncoding(pos_plane, neg_plane, previous, config.mode)


def quantize(prob) -> np.ndarray:
    """Probabilities to 8-bit levels, ``round(p * 255)`` with halves rounded up."""
    p = np.asarray(prob, dtype=np.float64)
    return np.floor(np.clip(p, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def prob_to_png_bytes(prob) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(quantize(prob)).save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_gray(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        if img.mode not in ("L", "1", "P"):
            raise ValueError(f"expected an 8-bit grayscale PNG, got mode {img.mode}")
        return np.asarray(img.convert("L"))


def png_bytes_to_prob(data: bytes) -> np.ndarray:
    return png_bytes_to_gray(data).astype(np.float64) / 255.0


def encoding_to_pngs(enc: InteractionEncoding) -> dict[str, bytes]:
    return {"pos": mask_to_png_bytes(enc.positive), "neg": mask_to_png_bytes(enc.negative),
            "prev": prob_to_png_bytes(enc.previous)}


def encoding_from_pngs(pngs: dict, mode: str = "filled") -> InteractionEncoding:
    return InteractionEncoding(png_bytes_to_gray(pngs["pos"]) > 0, png_bytes_to_gray(pngs["neg"]) > 0,
                               png_bytes_to_prob(pngs["prev"]), mode)


@dataclass
class ExportedSample:
    name: str
    encoding: InteractionEncoding
    target: np.ndarray
    meta: dict = field(default_factory=dict)


def export_samples(samples: Iterable[ExportedSample], out_dir) -> Path:
    """Write ``<name>/{pos,neg,prev,target}.png`` and a ``manifest.jsonl`` index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        d = out / s.name
        d.mkdir(parents=True, exist_ok=True)
        for key, data in encoding_to_pngs(s.encoding).items():
            (d / f"{key}.png").write_bytes(data)
        (d / "target.png").write_bytes(mask_to_png_bytes(s.target))
        rec = {"name": s.name, "mode": s.encoding.mode, "width": s.encoding.width, "height": s.encoding.height,
               "pos": f"{s.name}/pos.png", "neg": f"{s.name}/neg.png", "prev": f"{s.name}/prev.png",
               "target": f"{s.name}/target.png"}
        rec.update(s.meta)
        lines.append(json.dumps(rec, sort_keys=True))
    manifest = out / "manifest.jsonl"
    manifest.write_text("".join(line + "\n" for line in lines))
    return manifest
