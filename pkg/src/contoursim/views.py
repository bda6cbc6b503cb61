"""Crop-and-resample windows and the view a segmenter is queried in."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .raster import BoundingBox, bounding_box

# Float slack for box arithmetic such as 100 * 1.4 / 2.
_SLACK = 1e-9


@dataclass(frozen=True)
class ZoomInWindow:
    """A crop box of the image resampled to ``size = (width, height)``.

    Image pixel ``p`` maps to crop pixel ``floor((p + 0.5 - x0) * s)`` and
    crop pixel ``q`` samples image pixel ``floor((q + 0.5) / s) + x0``, with
    a separate scale ``s`` per axis. For ``s >= 1`` the two maps invert each
    other on the box.
    """

    box: BoundingBox
    size: tuple[int, int]
    image_size: tuple[int, int]

    @property
    def scale(self) -> tuple[float, float]:
        return self.size[0] / self.box.width, self.size[1] / self.box.height

    @classmethod
    def around(cls, region: np.ndarray, expansion: float = 1.4,
               input_size: Optional[int] = None) -> "ZoomInWindow":
        """Box of ``region`` grown by ``expansion`` about its center, clipped to the image.

        With ``input_size`` the longer crop side is resampled to that many
        pixels, keeping the aspect ratio; otherwise the crop keeps its size.
        """
        h, w = region.shape
        b = bounding_box(region)
        cx, cy = (b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2
        hw, hh = b.width * expansion / 2, b.height * expansion / 2
        box = BoundingBox(max(0, math.floor(cx - hw + _SLACK)), max(0, math.floor(cy - hh + _SLACK)),
                          min(w, math.ceil(cx + hw - _SLACK)), min(h, math.ceil(cy + hh - _SLACK)))
        if input_size is None:
            size = (box.width, box.height)
        else:
            f = input_size / max(box.width, box.height)
            size = (max(1, round(box.width * f)), max(1, round(box.height * f)))
        return cls(box, size, (w, h))

    def _src_index(self) -> tuple[np.ndarray, np.ndarray]:
        sx, sy = self.scale
        cols = np.floor((np.arange(self.size[0]) + 0.5) / sx).astype(np.int64) + self.box.x0
        rows = np.floor((np.arange(self.size[1]) + 0.5) / sy).astype(np.int64) + self.box.y0
        return np.minimum(rows, self.box.y1 - 1), np.minimum(cols, self.box.x1 - 1)

    def _dst_index(self) -> tuple[np.ndarray, np.ndarray]:
        sx, sy = self.scale
        cols = np.floor((np.arange(self.box.x0, self.box.x1) + 0.5 - self.box.x0) * sx).astype(np.int64)
        rows = np.floor((np.arange(self.box.y0, self.box.y1) + 0.5 - self.box.y0) * sy).astype(np.int64)
        return np.minimum(rows, self.size[1] - 1), np.minimum(cols, self.size[0] - 1)

    def forward_point(self, x: int, y: int) -> tuple[int, int]:
        sx, sy = self.scale
        return (min(self.size[0] - 1, math.floor((x + 0.5 - self.box.x0) * sx)),
                min(self.size[1] - 1, math.floor((y + 0.5 - self.box.y0) * sy)))

    def inverse_point(self, qx: int, qy: int) -> tuple[int, int]:
        sx, sy = self.scale
        return (min(self.box.x1 - 1, math.floor((qx + 0.5) / sx) + self.box.x0),
                min(self.box.y1 - 1, math.floor((qy + 0.5) / sy) + self.box.y0))

    def forward(self, plane: np.ndarray) -> np.ndarray:
        """Crop and nearest-neighbour resample an image-sized plane."""
        rows, cols = self._src_index()
        return plane[np.ix_(rows, cols)]

    def inverse(self, plane: np.ndarray) -> np.ndarray:
        """Warp a crop-space plane back and paste it into a zero canvas."""
        w, h = self.image_size
        out = np.zeros((h, w), dtype=plane.dtype)
        rows, cols = self._dst_index()
        out[self.box.y0:self.box.y1, self.box.x0:self.box.x1] = plane[np.ix_(rows, cols)]
        return out


@dataclass(frozen=True)
class View:
    """How a query's planes relate to the full image: an optional crop, then a mirror."""

    window: Optional[ZoomInWindow] = None
    flipped: bool = False

    def forward(self, plane: np.ndarray) -> np.ndarray:
        out = plane if self.window is None else self.window.forward(plane)
        return out[:, ::-1] if self.flipped else out

    def to_dict(self) -> Optional[dict]:
        if self.window is None and not self.flipped:
            return None
        d = {"flipped": self.flipped}
        if self.window is not None:
            d["box"] = list(self.window.box)
            d["size"] = list(self.window.size)
        return d


IDENTITY = View()
