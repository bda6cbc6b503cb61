"""Binary raster and polygon primitives.

Masks are 2-D boolean ``numpy`` arrays indexed ``[row, col]``. Probability
masks are float arrays with the same layout and values in ``[0, 1]``.
Polygons are ``(N, 2)`` float arrays of ``(x, y)`` vertices in normalized
image coordinates, where vertex ``(x, y)`` maps to pixel coordinate
``(x * width, y * height)`` and pixel ``(col, row)`` has its center at
``(col + 0.5, row + 0.5)``.

Connectivity is 8 for foreground and 4 for background throughout.
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import NamedTuple, Union

import cv2
import numpy as np
from PIL import Image

# Tolerance (in pixels) for a pixel center lying on a polygon edge.
EDGE_EPS = 1e-9


class BoundingBox(NamedTuple):
    """Axis-aligned box, inclusive min and exclusive max."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    return m.astype(bool, copy=False)


def as_polygon(poly) -> np.ndarray:
    """Coerce to an ``(N, 2)`` float array with consecutive duplicates removed."""
    p = np.asarray(poly, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"polygon must have shape (N, 2), got {p.shape}")
    if len(p) > 1:
        keep = np.ones(len(p), dtype=bool)
        keep[1:] = np.any(p[1:] != p[:-1], axis=1)
        p = p[keep]
    return p


def round_odd(value: float, minimum: int = 3) -> int:
    """Nearest odd integer to ``value``, at least ``minimum``."""
    k = 2 * int(np.floor(value / 2.0)) + 1
    return max(minimum, k)


def _check_odd(kernel_size: int) -> None:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be a positive odd integer, got {kernel_size}")


def fill_holes(mask) -> np.ndarray:
    m = as_mask(mask)
    # the zero ring links every frame-edge background pixel into one region
    flood = np.pad(m.astype(np.uint8), 1)
    cv2.floodFill(flood, None, (0, 0), 1, flags=4)
    return m | (flood[1:-1, 1:-1] == 0)


def disk_kernel(kernel_size: int) -> np.ndarray:
    """Digital disk of diameter ``kernel_size``: offsets with dx^2 + dy^2 <= r^2."""
    _check_odd(kernel_size)
    r = (kernel_size - 1) // 2
    yy, xx = np.ogrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def morph_transform(mask, kind: str, kernel_size: int) -> np.ndarray:
    """Dilate or erode with a disk structuring element.

    Implemented through the exact Euclidean distance transform, which is
    equivalent to sweeping :func:`disk_kernel`. Pixels outside the frame
    count as foreground for erosion, so objects touching the frame edge are
    not eaten from that side.
    """
    m = as_mask(mask)
    _check_odd(kernel_size)
    if kind not in ("dilate", "erode"):
        raise ValueError(f"unknown morphology kind {kind!r}")
    r = (kernel_size - 1) // 2
    if r == 0:
        return m.copy()
    # sqrt(r^2) and sqrt(r^2 + 1) differ by more than 1/(2r + 1)
    tol = 0.25 / (r + 1)
    if kind == "dilate":
        if not m.any():
            return m.copy()
        dist = cv2.distanceTransform((~m).astype(np.uint8), cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
        return dist <= r + tol
    if m.all():
        return m.copy()
    dist = cv2.distanceTransform(m.astype(np.uint8), cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    return dist > r + tol


def largest_label(labels: np.ndarray, n: int) -> int:
    """Label of the largest component in a ``cv2.connectedComponents`` map.

    Ties go to the component whose bbox has the smallest ``(top, left)``.
    """
    area = np.bincount(labels.ravel(), minlength=n)[1:]
    best = np.flatnonzero(area == area.max()) + 1
    if best.size == 1:
        return int(best[0])
    return min((*bounding_box(labels == lab)[1::-1], int(lab)) for lab in best)[2]


def largest_component(mask) -> np.ndarray:
    """Largest 8-connected component; ties go to the smallest bbox ``(y0, x0)``."""
    m = as_mask(mask)
    n, labels = cv2.connectedComponents(m.view(np.uint8), connectivity=8)
    if n <= 1:
        return np.zeros_like(m)
    if n == 2:
        return m.copy()
    return labels == largest_label(labels, n)


def count_components(mask) -> int:
    n, _ = cv2.connectedComponents(as_mask(mask).astype(np.uint8), connectivity=8)
    return n - 1


def gaussian_sigma(kernel_size: int) -> float:
    return 0.3 * ((kernel_size - 1) * 0.5 - 1) + 0.8


def gaussian_smooth(mask, kernel_size: int) -> np.ndarray:
    """Blur with a normalized ``kernel_size`` Gaussian and re-binarize at 0.5.

    Frame borders reflect without repeating the edge pixel.
    """
    m = as_mask(mask)
    _check_odd(kernel_size)
    if kernel_size == 1:
        return m.copy()
    kern = cv2.getGaussianKernel(kernel_size, gaussian_sigma(kernel_size), cv2.CV_64F)
    blurred = cv2.sepFilter2D(m.astype(np.float64), cv2.CV_64F, kern, kern,
                              borderType=cv2.BORDER_REFLECT_101)
    return blurred >= 0.5


def centroid(mask, top: int = 0, left: int = 0) -> tuple[float, float]:
    """Mean foreground pixel center ``(cx, cy)``; offsets place a crop in its frame."""
    mo = cv2.moments(as_mask(mask).view(np.uint8), binaryImage=True)
    if mo["m00"] == 0:
        raise ValueError("empty mask has no centroid")
    return mo["m10"] / mo["m00"] + 0.5 + left, mo["m01"] / mo["m00"] + 0.5 + top


def _scale_index(out_idx: np.ndarray, center: float, factor: float) -> np.ndarray:
    return np.floor(center + (out_idx + 0.5 - center) / factor).astype(np.int64)


def scale_about_centroid(mask, factor: float) -> np.ndarray:
    """Nearest-neighbour rescale of the foreground about its centroid."""
    m = as_mask(mask)
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    if not m.any():
        return m.copy()
    cx, cy = centroid(m)
    h, w = m.shape
    src_r = _scale_index(np.arange(h), cy, factor)
    src_c = _scale_index(np.arange(w), cx, factor)
    vr = (src_r >= 0) & (src_r < h)
    vc = (src_c >= 0) & (src_c < w)
    out = np.zeros_like(m)
    out[np.ix_(vr, vc)] = m[np.ix_(src_r[vr], src_c[vc])]
    return out


def shift_clipped(mask, dx: int, dy: int) -> np.ndarray:
    m = as_mask(mask)
    h, w = m.shape
    out = np.zeros_like(m)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src = m[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def iou(a, b) -> float:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"IoU of masks with different shapes {a.shape} and {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def bounding_box(mask) -> BoundingBox:
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        raise ValueError("empty mask has no bbox")
    cols = np.flatnonzero(m[rows[0]:rows[-1] + 1].any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def polygon_area_px(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _fill_polygon_px(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Even-odd scanline fill in pixel coordinates, edges inclusive.

    A pixel is set when its center is inside the polygon or lies on one of
    its edges (within ``EDGE_EPS``).
    """
    out = np.zeros((height, width), dtype=bool)
    xa, ya = vertices[:, 0], vertices[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    r_lo = max(0, int(np.ceil(ya.min() - 0.5 - EDGE_EPS)))
    r_hi = min(height - 1, int(np.floor(ya.max() - 0.5 + EDGE_EPS)))
    if r_lo > r_hi:
        return out
    rows = np.arange(r_lo, r_hi + 1)
    yc = rows[:, None] + 0.5
    sloped = ya != yb
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xcross = xa + (yc - ya) * (xb - xa) / (yb - ya)

    # interior: half-open crossing rule, spans between crossing pairs
    crosses = sloped & (((ya <= yc) & (yc < yb)) | ((yb <= yc) & (yc < ya)))
    xs = np.where(crosses, xcross, np.inf)
    xs.sort(axis=1)
    n_cross = crosses.sum(axis=1)
    diff = np.zeros((len(rows), width + 1), dtype=np.int32)
    for j in range(0, int(n_cross.max(initial=0)), 2):
        ok = n_cross > j + 1
        if not ok.any():
            break
        c0 = np.ceil(xs[ok, j] - 0.5 - EDGE_EPS)
        c1 = np.floor(xs[ok, j + 1] - 0.5 + EDGE_EPS)
        c0 = np.clip(c0, 0, width).astype(np.int64)
        c1 = np.clip(c1 + 1, 0, width).astype(np.int64)
        good = c1 > c0
        ri = np.flatnonzero(ok)[good]
        # one span per row per pass, so the fancy updates never collide
        diff[ri, c0[good]] += 1
        diff[ri, c1[good]] -= 1
    out[r_lo:r_hi + 1] = np.cumsum(diff, axis=1)[:, :width] > 0

    # boundary: centers on sloped edges
    spans = sloped & (yc >= np.minimum(ya, yb) - EDGE_EPS) & (yc <= np.maximum(ya, yb) + EDGE_EPS)
    ri, ei = np.nonzero(spans)
    if ri.size:
        xc = xcross[ri, ei]
        col = np.round(xc - 0.5)
        hit = (np.abs(xc - 0.5 - col) <= EDGE_EPS) & (col >= 0) & (col < width)
        out[rows[ri[hit]], col[hit].astype(np.int64)] = True
    # boundary: horizontal edges lying on a scanline
    for e in np.flatnonzero(~sloped):
        row = np.round(ya[e] - 0.5)
        if abs(ya[e] - 0.5 - row) > EDGE_EPS or not 0 <= row < height:
            continue
        c0 = max(0, int(np.ceil(min(xa[e], xb[e]) - 0.5 - EDGE_EPS)))
        c1 = min(width - 1, int(np.floor(max(xa[e], xb[e]) - 0.5 + EDGE_EPS)))
        if c0 <= c1:
            out[int(row), c0:c1 + 1] = True
    return out


def rasterize_polygon(poly, width: int, height: int, *, with_status: bool = False):
    """Fill a normalized polygon onto a ``height x width`` grid.

    Zero-area polygons give an empty mask; pass ``with_status=True`` to also
    receive a ``degenerate`` flag.
    """
    if width < 1 or height < 1:
        raise ValueError("raster dimensions must be positive")
    p = as_polygon(poly)
    px = p * (width, height)
    degenerate = len(px) < 3 or abs(polygon_area_px(px)) < EDGE_EPS
    if degenerate:
        out = np.zeros((height, width), dtype=bool)
    else:
        out = _fill_polygon_px(px, width, height)
    return (out, degenerate) if with_status else out


def _hull_px(mask: np.ndarray) -> np.ndarray:
    """Convex hull of foreground pixel centers, in pixel coordinates."""
    rows = np.flatnonzero(mask.any(axis=1))
    first = mask[rows].argmax(axis=1)
    last = mask.shape[1] - 1 - mask[rows, ::-1].argmax(axis=1)
    pts = np.concatenate([np.stack([first, rows], 1), np.stack([last, rows], 1)]).astype(np.int32)
    hull = cv2.convexHull(pts).reshape(-1, 2)
    return hull.astype(np.float64) + 0.5


def _convex_pixel_count(hull: np.ndarray) -> int:
    """Pixel centers inside or on a convex polygon given in pixel coordinates."""
    xa, ya = hull[:, 0], hull[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    r0 = int(np.ceil(ya.min() - 0.5))
    n_rows = int(np.floor(ya.max() - 0.5)) + 1 - r0
    ea = np.ceil(np.minimum(ya, yb) - 0.5).astype(np.int64)
    eb = np.floor(np.maximum(ya, yb) - 0.5).astype(np.int64)
    counts = np.maximum(eb - ea + 1, 0)
    e = np.repeat(np.arange(len(hull)), counts)
    rows = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + ea[e]
    yc = rows + 0.5
    flat = ya[e] == yb[e]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(flat, xa[e], xa[e] + (yc - ya[e]) * (xb[e] - xa[e]) / (yb[e] - ya[e]))
    # a horizontal edge on the scanline contributes both endpoints
    x2 = np.where(flat, xb[e], x)
    lo = np.full(n_rows, np.inf)
    hi = np.full(n_rows, -np.inf)
    np.minimum.at(lo, rows - r0, np.minimum(x, x2))
    np.maximum.at(hi, rows - r0, np.maximum(x, x2))
    c0 = np.ceil(lo - 0.5 - EDGE_EPS)
    c1 = np.floor(hi - 0.5 + EDGE_EPS)
    return int(np.maximum(c1 - c0 + 1, 0).sum())


def convexity_ratio(mask) -> float:
    """Foreground area over the area of its rasterized convex hull.

    The hull spans the foreground pixel centers; its raster uses the same
    inclusive pixel-center rule as :func:`rasterize_polygon`.
    """
    m = as_mask(mask)
    if not m.any():
        raise ValueError("convexity ratio of an empty mask")
    box = bounding_box(m)
    crop = m[box.y0:box.y1, box.x0:box.x1]
    hull = _hull_px(crop)
    if len(hull) < 3 or abs(polygon_area_px(hull)) < EDGE_EPS:
        # collinear pixels: the hull is the pixel run itself
        return 1.0
    return np.count_nonzero(crop) / _convex_pixel_count(hull)


# Moore neighbourhood, clockwise on screen starting west: (drow, dcol)
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def trace_boundary_px(mask) -> list[tuple[int, int]]:
    """Outer boundary pixels ``(col, row)`` by Moore tracing, clockwise.

    Starts at the topmost-then-leftmost pixel and stops on Jacob's criterion.
    Revisited pixels (one-pixel-wide necks) are kept once, at first visit.
    """
    m = as_mask(mask)
    if not m.any():
        raise ValueError("cannot trace the boundary of an empty mask")
    if count_components(m) != 1:
        raise ValueError("boundary tracing needs a single 8-connected component")
    grid = np.pad(m, 1).tolist()
    r0 = int(np.flatnonzero(m.any(axis=1))[0])
    c0 = int(np.argmax(m[r0]))
    start = (r0 + 1, c0 + 1)
    cur, back = start, 0
    path = [start]
    first_back = None
    for _ in range(8 * m.size + 8):
        for i in range(1, 9):
            d = (back + i) % 8
            nr, nc = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if grid[nr][nc]:
                pd = _MOORE[(back + i - 1) % 8]
                prev = (cur[0] + pd[0], cur[1] + pd[1])
                nxt = (nr, nc)
                back = _MOORE_INDEX[(prev[0] - nr, prev[1] - nc)]
                break
        else:
            break  # isolated pixel
        if cur == start:
            if first_back is None:
                first_back = (nxt, back)
            elif (nxt, back) == first_back:
                break
        cur = nxt
        path.append(cur)
    seen = dict.fromkeys(path)
    return [(c - 1, r - 1) for r, c in seen]


def trace_boundary(mask) -> np.ndarray:
    """Outer boundary as a normalized polygon of pixel centers."""
    m = as_mask(mask)
    h, w = m.shape
    pix = np.asarray(trace_boundary_px(m), dtype=np.float64)
    return (pix + 0.5) / (w, h)


def draw_polyline(poly, line_width: float, width: int, height: int, close: bool = False) -> np.ndarray:
    """Pixels whose centers lie within ``line_width / 2`` of the path."""
    if line_width < 1:
        raise ValueError("line_width must be at least 1")
    p = as_polygon(poly) * (width, height)
    out = np.zeros((height, width), dtype=bool)
    if len(p) == 0:
        return out
    half = line_width / 2.0
    if len(p) == 1:
        segments = [(p[0], p[0])]
    else:
        segments = list(zip(p[:-1], p[1:]))
        if close and len(p) > 2:
            segments.append((p[-1], p[0]))
    for a, b in segments:
        c0 = max(0, int(np.ceil(min(a[0], b[0]) - half - 0.5)))
        c1 = min(width - 1, int(np.floor(max(a[0], b[0]) + half - 0.5)))
        r0 = max(0, int(np.ceil(min(a[1], b[1]) - half - 0.5)))
        r1 = min(height - 1, int(np.floor(max(a[1], b[1]) + half - 0.5)))
        if c0 > c1 or r0 > r1:
            continue
        px = np.arange(c0, c1 + 1)[None, :] + 0.5
        py = np.arange(r0, r1 + 1)[:, None] + 0.5
        d = b - a
        len2 = float(d @ d)
        if len2 == 0.0:
            t = 0.0
        else:
            t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / len2, 0.0, 1.0)
        dist2 = (px - a[0] - t * d[0]) ** 2 + (py - a[1] - t * d[1]) ** 2
        out[r0:r1 + 1, c0:c1 + 1] |= dist2 <= half * half + EDGE_EPS
    return out


def read_mask_png(path: Union[str, Path]) -> np.ndarray:
    """Load a mask PNG; any nonzero gray level is foreground."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 0


def write_mask_png(path: Union[str, Path], mask) -> None:
    Image.fromarray(as_mask(mask).astype(np.uint8) * 255).save(path, format="PNG")


def mask_to_png_bytes(mask) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(as_mask(mask).astype(np.uint8) * 255).save(buf, format="PNG")
    return buf.getvalue()
