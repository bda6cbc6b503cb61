"""Slow, obviously-correct reference implementations used only by the tests.

Each oracle follows a different route from the library code: plain Python
flood fills instead of OpenCV labeling, per-point ray casting instead of a
scanline fill, structuring-element sweeps instead of distance transforms.
"""
from __future__ import annotations

from collections import deque

import numpy as np
from scipy.spatial import ConvexHull, QhullError

EPS = 1e-9

N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
N4 = [(-1, 0), (1, 0), (0, -1), (0, 1)]


def iou_count(a, b) -> float:
    inter = union = 0
    for x, y in zip(np.asarray(a, bool).ravel().tolist(), np.asarray(b, bool).ravel().tolist()):
        inter += x and y
        union += x or y
    return 1.0 if union == 0 else inter / union


def components(mask, conn=N8) -> list[list[tuple[int, int]]]:
    """Foreground components as pixel lists, in raster order of their first pixel."""
    m = np.asarray(mask, bool)
    h, w = m.shape
    seen = np.zeros_like(m)
    comps = []
    for r in range(h):
        for c in range(w):
            if m[r, c] and not seen[r, c]:
                comp, todo = [], deque([(r, c)])
                seen[r, c] = True
                while todo:
                    y, x = todo.popleft()
                    comp.append((y, x))
                    for dy, dx in conn:
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and m[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            todo.append((ny, nx))
                comps.append(comp)
    return comps


def largest(mask) -> np.ndarray:
    m = np.asarray(mask, bool)
    comps = components(m)
    out = np.zeros_like(m)
    if not comps:
        return out
    best = min(comps, key=lambda c: (-len(c), min(p[0] for p in c), min(p[1] for p in c)))
    for y, x in best:
        out[y, x] = True
    return out


def fill_holes(mask) -> np.ndarray:
    """Background pixels not 4-connected to the frame edge become foreground."""
    m = np.asarray(mask, bool)
    h, w = m.shape
    outside = np.zeros_like(m)
    todo = deque((r, c) for r in range(h) for c in range(w)
                 if (r in (0, h - 1) or c in (0, w - 1)) and not m[r, c])
    for r, c in todo:
        outside[r, c] = True
    while todo:
        y, x = todo.popleft()
        for dy, dx in N4:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not m[ny, nx] and not outside[ny, nx]:
                outside[ny, nx] = True
                todo.append((ny, nx))
    return ~outside


def morph_sweep(mask, kind: str, kernel_size: int) -> np.ndarray:
    """Structuring-element sweep with the disk dx^2 + dy^2 <= r^2."""
    m = np.asarray(mask, bool)
    h, w = m.shape
    r = (kernel_size - 1) // 2
    offs = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= r * r]
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            if kind == "dilate":
                out[y, x] = any(0 <= y + dy < h and 0 <= x + dx < w and m[y + dy, x + dx] for dy, dx in offs)
            else:
                # outside the frame counts as foreground
                out[y, x] = all(not (0 <= y + dy < h and 0 <= x + dx < w) or m[y + dy, x + dx] for dy, dx in offs)
    return out


def _on_segment(px, py, ax, ay, bx, by) -> np.ndarray:
    dx, dy = bx - ax, by - ay
    cross = dx * (py - ay) - dy * (px - ax)
    length = np.hypot(dx, dy)
    inside_box = ((px >= min(ax, bx) - EPS) & (px <= max(ax, bx) + EPS)
                  & (py >= min(ay, by) - EPS) & (py <= max(ay, by) + EPS))
    return (np.abs(cross) <= EPS * max(length, 1.0)) & inside_box


def point_in_polygon(px, py, verts) -> np.ndarray:
    """Even-odd ray casting, with points on an edge counted as inside."""
    px, py = np.asarray(px, float), np.asarray(py, float)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    on_edge = np.zeros_like(inside)
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        on_edge |= _on_segment(px, py, ax, ay, bx, by)
        if ay == by:
            continue
        straddle = (ay > py) != (by > py)
        with np.errstate(over="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (px < xint)
    return inside | on_edge


def rasterize(poly, width: int, height: int) -> np.ndarray:
    verts = [(x * width, y * height) for x, y in np.asarray(poly, float)]
    # drop consecutive duplicates and the closing repeat
    clean = [v for i, v in enumerate(verts) if i == 0 or v != verts[i - 1]]
    if len(clean) > 1 and clean[0] == clean[-1]:
        clean.pop()
    if len(clean) < 3:
        return np.zeros((height, width), bool)
    area = 0.5 * sum(clean[i][0] * clean[(i + 1) % len(clean)][1] - clean[(i + 1) % len(clean)][0] * clean[i][1]
                     for i in range(len(clean)))
    if abs(area) < EPS:
        return np.zeros((height, width), bool)
    yy, xx = np.mgrid[:height, :width] + 0.5
    return point_in_polygon(xx, yy, clean)


def convexity(mask) -> float:
    """Area over the pixel count of the hull of all foreground centers (qhull)."""
    m = np.asarray(mask, bool)
    ys, xs = np.nonzero(m)
    pts = np.stack([xs + 0.5, ys + 0.5], 1)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 1.0
    verts = pts[hull.vertices]
    h, w = m.shape
    yy, xx = np.mgrid[:h, :w] + 0.5
    return m.sum() / point_in_polygon(xx, yy, [tuple(v) for v in verts]).sum()


def segment_distance(px, py, ax, ay, bx, by) -> np.ndarray:
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    t = 0.0 if l2 == 0 else np.clip(((px - ax) * dx + (py - ay) * dy) / l2, 0, 1)
    return np.hypot(px - ax - t * dx, py - ay - t * dy)


def polyline(poly, line_width: float, width: int, height: int, close: bool = False) -> np.ndarray:
    p = [(x * width, y * height) for x, y in np.asarray(poly, float)]
    yy, xx = np.mgrid[:height, :width] + 0.5
    segs = [(p[i], p[i + 1]) for i in range(len(p) - 1)] or [(p[0], p[0])]
    if close and len(p) > 2:
        segs.append((p[-1], p[0]))
    d = np.full((height, width), np.inf)
    for a, b in segs:
        d = np.minimum(d, segment_distance(xx, yy, a[0], a[1], b[0], b[1]))
    return d <= line_width / 2 + EPS


def convolve_direct(img, kernel_1d) -> np.ndarray:
    """2-D convolution by explicit summation, mirrored borders without edge repeat."""
    k = np.outer(kernel_1d, kernel_1d)
    r = len(kernel_1d) // 2
    padded = np.pad(np.asarray(img, float), r, mode="reflect")
    h, w = np.asarray(img).shape
    out = np.zeros((h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            out += k[dy + r, dx + r] * padded[r + dy:r + dy + h, r + dx:r + dx + w]
    return out


def first_crossing(curve, level):
    for i, v in enumerate(curve):
        if v >= level:
            return i + 1
    return None


def click_oracle(gt, pred):
    """Brute-force click: exhaustive nearest-boundary search per pixel."""
    gt, pred = np.asarray(gt, bool), np.asarray(pred, bool)
    fn, fp = gt & ~pred, pred & ~gt
    region, pol = (fn, "positive") if fn.sum() >= fp.sum() else (fp, "negative")
    h, w = region.shape
    padded = np.pad(region, 1)
    bg = np.argwhere(~padded)
    best, best_d = None, -1.0
    for y, x in np.argwhere(region):
        d = np.sqrt(((bg - (y + 1, x + 1)) ** 2).sum(1)).min()
        if d > best_d + 1e-12:
            best, best_d = (int(x), int(y)), d
    return best[0], best[1], pol
