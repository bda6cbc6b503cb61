"""Randomized simulation of user contours from ground-truth instance masks.

The pipeline distorts a hole-filled mask by a random dilation or erosion,
an affine-plus-elastic warp, Gaussian smoothing, a scale gated by the
shape's convexity ratio and a bounded shift. Every draw comes from a
Philox stream keyed by ``(seed, sample_id, attempt)``, so a contour is a
pure function of its inputs regardless of batching or worker count.

Stages run on windows that bound the current object instead of the full
frame; each window carries enough margin that the result equals the
full-frame operation.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import cv2
import numpy as np
from scipy import ndimage as ndi

from .raster import (
    BoundingBox,
    as_mask,
    bounding_box,
    centroid,
    convexity_ratio,
    draw_polyline,
    fill_holes,
    gaussian_smooth,
    iou,
    largest_component,
    largest_label,
    morph_transform,
    round_odd,
    trace_boundary,
    _scale_index,
)

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 10
NONCONVEX_R = 0.6

D_DILATION = (0.03, 0.06)
D_EROSION = (0.02, 0.04)
D_AFFINE = (0.4, 0.6)
D_SIGMA = (0.5, 0.75)
D_ALPHA = (0.8, 1.2)
D_SIZE = (0.008, 0.06)
D_SCALE_NONCONVEX = (0.9, 1.1)
D_SCALE_CONVEX = (0.75, 1.2)

# Elastic displacement is clamped to this many pixels per axis. With sigma
# and alpha both proportional to object size the field's standard deviation
# is well under one pixel, so the clamp only bounds the warp window.
ELASTIC_CLAMP = 4.0

_POLARITY_STREAM = 0xFFFF


def make_rng(seed: int, sample_id: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, sample_id, stream)``."""
    key = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, sample_id, stream])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class GenerationParams:
    seed: int
    sample_id: int
    attempt: int
    morph_kind: str
    d_morph: float
    morph_kernel: int
    d_affine: float
    d_sigma: float
    d_alpha: float
    d_size: float
    object_size: Optional[int] = None
    blur_kernel: Optional[int] = None
    r: Optional[float] = None
    d_scale: Optional[float] = None
    d_x: Optional[float] = None
    d_y: Optional[float] = None
    shift_x: Optional[int] = None
    shift_y: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GeneratedContour:
    filled: np.ndarray
    params: Optional[GenerationParams]
    fallback_used: bool
    attempts: int


@dataclass(frozen=True)
class TrainingSample:
    polarity: str
    contour: np.ndarray
    previous_mask: np.ndarray
    target: np.ndarray
    fallback_used: bool
    params: Optional[GenerationParams]


class GenerationError(RuntimeError):
    pass


class _StageFailure(Exception):
    """A stage produced an unusable mask; the attempt is resampled."""


@dataclass
class _Patch:
    """A crop of a ``frame``-sized mask placed at ``(top, left)``."""

    data: np.ndarray
    top: int
    left: int
    frame: tuple[int, int]

    @classmethod
    def of(cls, mask: np.ndarray) -> "_Patch":
        return cls(mask, 0, 0, mask.shape).tight()

    def box(self) -> BoundingBox:
        """Frame-space extent; callers hold a tight patch."""
        h, w = self.data.shape
        return BoundingBox(self.left, self.top, self.left + w, self.top + h)

    def largest(self, single: bool = False) -> "_Patch":
        """Tight crop of the largest 8-connected component.

        With ``single`` a mask of several components is a failed stage.
        """
        n, labels = cv2.connectedComponents(self.data.view(np.uint8), connectivity=8)
        if n <= 1:
            raise _StageFailure("empty mask")
        if n == 2:
            return self.tight()
        if single:
            raise _StageFailure("contour split into several components")
        return self.with_data(labels == largest_label(labels, n)).tight()

    def tight(self) -> "_Patch":
        try:
            b = bounding_box(self.data)
        except ValueError:
            raise _StageFailure("empty mask") from None
        if b == (0, 0, self.data.shape[1], self.data.shape[0]):
            return self
        return _Patch(self.data[b.y0:b.y1, b.x0:b.x1], self.top + b.y0, self.left + b.x0, self.frame)

    def window(self, y0: int, x0: int, y1: int, x1: int) -> "_Patch":
        """Re-crop to a frame-space window (clipped to the frame)."""
        h, w = self.frame
        y0, x0, y1, x1 = max(0, y0), max(0, x0), min(h, y1), min(w, x1)
        if y0 >= y1 or x0 >= x1:
            raise _StageFailure("window outside frame")
        out = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        sy0, sx0 = max(y0, self.top), max(x0, self.left)
        sy1 = min(y1, self.top + self.data.shape[0])
        sx1 = min(x1, self.left + self.data.shape[1])
        if sy0 < sy1 and sx0 < sx1:
            out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = \
                self.data[sy0 - self.top:sy1 - self.top, sx0 - self.left:sx1 - self.left]
        return _Patch(out, y0, x0, self.frame)

    def grow(self, margin: int) -> "_Patch":
        t, l = self.top, self.left
        h, w = self.data.shape
        return self.window(t - margin, l - margin, t + h + margin, l + w + margin)

    def with_data(self, data: np.ndarray) -> "_Patch":
        return _Patch(data, self.top, self.left, self.frame)

    def full(self) -> np.ndarray:
        out = np.zeros(self.frame, dtype=bool)
        h, w = self.data.shape
        out[self.top:self.top + h, self.left:self.left + w] = self.data
        return out


def _object_size(box: BoundingBox) -> int:
    return max(box.width, box.height)


def _draw_base(rng: np.random.Generator, width: int, height: int,
               seed: int, sample_id: int, attempt: int) -> GenerationParams:
    if rng.random() < 0.5:
        kind, d_morph = "dilate", rng.uniform(*D_DILATION)
    else:
        kind, d_morph = "erode", rng.uniform(*D_EROSION)
    d_affine = rng.uniform(*D_AFFINE)
    d_sigma = rng.uniform(*D_SIGMA)
    d_alpha = rng.uniform(*D_ALPHA)
    d_size = rng.uniform(*D_SIZE)
    diagonal = math.hypot(width, height)
    return GenerationParams(
        seed=seed, sample_id=sample_id, attempt=attempt,
        morph_kind=kind, d_morph=float(d_morph), morph_kernel=round_odd(d_morph * diagonal),
        d_affine=float(d_affine), d_sigma=float(d_sigma), d_alpha=float(d_alpha), d_size=float(d_size),
    )


def sample_generation_params(rng_seed: int, image_width: int, image_height: int,
                             object_mask, sample_id: int = 0) -> GenerationParams:
    """Draw the mask-independent parameters of the first generation attempt.

    The shape-dependent fields (``r``, ``d_scale``, shifts) stay ``None``;
    :func:`generate_contour` fills them in.
    """
    if not as_mask(object_mask).any():
        raise ValueError("object mask is empty")
    rng = make_rng(rng_seed, sample_id, 0)
    return _draw_base(rng, image_width, image_height, rng_seed, sample_id, 0)


def _displacement_fields(rng: np.random.Generator, h: int, w: int,
                         sigma: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Two Simard displacement fields: smoothed Uniform(-1, 1) noise times ``alpha``.

    For wide kernels the noise lives on a lattice of step ``s = sigma // 4``
    pixels, scaled by ``1 / s`` so the smoothed field keeps the per-pixel
    variance, and is bilinearly upsampled.
    """
    s = max(1, int(sigma // 4))
    fields = []
    for _ in range(2):
        if s == 1:
            noise = rng.uniform(-1.0, 1.0, size=(h, w))
            f = (alpha * ndi.gaussian_filter(noise, sigma, mode="reflect")).astype(np.float32)
            peak = np.abs(f).max()
        else:
            gh, gw = -(-h // s), -(-w // s)
            noise = rng.uniform(-1.0, 1.0, size=(gh, gw)) / s
            coarse = (alpha * ndi.gaussian_filter(noise, sigma / s, mode="reflect")).astype(np.float32)
            # lattice cell j is centred on pixel coordinate (j + 0.5) * s
            f = cv2.resize(coarse, (gw * s, gh * s), interpolation=cv2.INTER_LINEAR)[:h, :w]
            # interpolation never leaves the lattice range
            peak = np.abs(coarse).max()
        if peak > ELASTIC_CLAMP:
            f = np.clip(f, -ELASTIC_CLAMP, ELASTIC_CLAMP)
        fields.append(f)
    return fields[0], fields[1]


def _affine_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x2 matrix ``M`` with ``[x, y, 1] @ M = [x', y']`` for the three pairs."""
    return np.linalg.solve(np.column_stack([src, np.ones(3)]), dst)


def _elastic_patch(patch: _Patch, d_affine: float, d_sigma: float, d_alpha: float,
                   object_size: float, rng: np.random.Generator) -> _Patch:
    box = patch.box()
    jitter = d_affine * object_size
    src = np.array([[box.x0, box.y0], [box.x1, box.y0], [box.x0, box.y1]], dtype=np.float64)
    dst = src + rng.uniform(-jitter, jitter, size=(3, 2))
    m = _affine_from_points(src, dst)
    lin, t = m[:2].T, m[2]
    det = np.linalg.det(lin)
    if abs(det) < 1e-6:
        raise _StageFailure("affine jitter collapsed the mask")
    inv = np.linalg.inv(lin)

    corners = np.array([[box.x0, box.y0, 1], [box.x1, box.y0, 1],
                        [box.x0, box.y1, 1], [box.x1, box.y1, 1]], dtype=np.float64) @ m
    margin = int(ELASTIC_CLAMP) + 2
    out = patch.window(int(np.floor(corners[:, 1].min())) - margin, int(np.floor(corners[:, 0].min())) - margin,
                       int(np.ceil(corners[:, 1].max())) + margin, int(np.ceil(corners[:, 0].max())) + margin)
    h, w = out.data.shape

    # output pixel (j, i) -> patch pixel, both with centers on integers
    origin = np.array([out.left + 0.5, out.top + 0.5]) - t
    offset = inv @ origin - np.array([patch.left + 0.5, patch.top + 0.5])
    warped = cv2.warpAffine(patch.data.astype(np.uint8), np.column_stack([inv, offset]), (w, h),
                            flags=cv2.INTER_NEAREST | cv2.WARP_INVERSE_MAP,
                            borderMode=cv2.BORDER_CONSTANT, borderValue=0)

    sigma, alpha = d_sigma * object_size, d_alpha * object_size
    map_x, map_y = _displacement_fields(rng, h, w, sigma, alpha)
    map_x += np.arange(w, dtype=np.float32)[None, :]
    map_y += np.arange(h, dtype=np.float32)[:, None]
    data = cv2.remap(warped, map_x, map_y, cv2.INTER_NEAREST,
                     borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return out.with_data(data.astype(bool))


def elastic_deform(mask, d_affine: float, d_sigma: float, d_alpha: float,
                   object_size: float, rng) -> np.ndarray:
    """Affine jitter of the bbox triangle followed by a Simard displacement warp.

    ``d_*`` are the size-relative parameters; ``rng`` is a ``Generator`` or a
    seed. The output may have several components.
    """
    m = as_mask(mask)
    if not m.any():
        return m.copy()
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(int(rng))
    try:
        return _elastic_patch(_Patch.of(m), d_affine, d_sigma, d_alpha, object_size, rng).full()
    except _StageFailure:
        return np.zeros_like(m)


def _scale_patch(patch: _Patch, factor: float) -> _Patch:
    cx, cy = centroid(patch.data, patch.top, patch.left)
    h, w = patch.data.shape
    out = patch.window(
        int(np.floor(cy + (patch.top - cy) * factor)) - 2,
        int(np.floor(cx + (patch.left - cx) * factor)) - 2,
        int(np.ceil(cy + (patch.top + h - cy) * factor)) + 2,
        int(np.ceil(cx + (patch.left + w - cx) * factor)) + 2,
    )
    oh, ow = out.data.shape
    src_r = _scale_index(out.top + np.arange(oh), cy, factor) - patch.top
    src_c = _scale_index(out.left + np.arange(ow), cx, factor) - patch.left
    # the maps are monotone, so the in-range outputs form one block
    r0, r1 = np.searchsorted(src_r, [0, h])
    c0, c1 = np.searchsorted(src_c, [0, w])
    data = np.zeros((oh, ow), dtype=bool)
    rows = patch.data.take(src_r[r0:r1], axis=0)
    data[r0:r1, c0:c1] = rows.take(src_c[c0:c1], axis=1)
    return out.with_data(data)


def _run_pipeline(filled: _Patch, gt_box: BoundingBox, params: GenerationParams,
                  rng: np.random.Generator) -> tuple[_Patch, GenerationParams]:
    k = params.morph_kernel
    p = filled.grow((k - 1) // 2 if params.morph_kind == "dilate" else 1)
    p = p.with_data(morph_transform(p.data, params.morph_kind, k)).largest()

    size = _object_size(p.box())
    p = _elastic_patch(p, params.d_affine, params.d_sigma, params.d_alpha, size, rng).largest()

    size = _object_size(p.box())
    kb = round_odd(params.d_size * size)
    p = p.grow(kb // 2)
    p = p.with_data(gaussian_smooth(p.data, kb)).tight()

    r = convexity_ratio(p.data)
    lo, hi = D_SCALE_NONCONVEX if r < NONCONVEX_R else D_SCALE_CONVEX
    d_scale = float(rng.uniform(lo, hi))
    p = _scale_patch(p, d_scale).tight()

    tr = p.box()
    d_x = float(min(abs(tr.x0 - gt_box.x0), abs(tr.x1 - gt_box.x1)))
    d_y = float(min(abs(tr.y0 - gt_box.y0), abs(tr.y1 - gt_box.y1)))
    if r >= NONCONVEX_R:
        d_x, d_y = 2 * d_x, 2 * d_y
    d_x = min(d_x, 0.5 * tr.width)
    d_y = min(d_y, 0.5 * tr.height)
    nx, ny = int(math.floor(d_x)), int(math.floor(d_y))
    shift_x = int(rng.integers(-nx, nx, endpoint=True))
    shift_y = int(rng.integers(-ny, ny, endpoint=True))

    p = _Patch(p.data, p.top + shift_y, p.left + shift_x, p.frame)
    h, w = p.frame
    ph, pw = p.data.shape
    p = p.window(max(0, p.top), max(0, p.left), min(h, p.top + ph), min(w, p.left + pw)).largest(single=True)
    params = replace(params, object_size=size, blur_kernel=kb, r=float(r), d_scale=d_scale,
                     d_x=d_x, d_y=d_y, shift_x=shift_x, shift_y=shift_y)
    return p, params


def generate_contour(gt_mask, seed: int, sample_id: int = 0) -> GeneratedContour:
    """Simulate one filled user contour for ``gt_mask``.

    A failed attempt (empty or split mask) is redrawn from the next stream,
    up to ``MAX_ATTEMPTS``; after that the hole-filled ground truth is
    returned with ``fallback_used`` set.
    """
    gt = as_mask(gt_mask)
    if not gt.any():
        raise ValueError("ground-truth mask is empty")
    height, width = gt.shape
    base = _Patch.of(gt)
    gt_box = base.box()
    base = base.grow(1)
    filled = base.with_data(fill_holes(base.data)).tight()
    params = None
    for attempt in range(MAX_ATTEMPTS):
        rng = make_rng(seed, sample_id, attempt)
        params = _draw_base(rng, width, height, seed, sample_id, attempt)
        try:
            patch, params = _run_pipeline(filled, gt_box, params, rng)
        except _StageFailure as exc:
            log.debug("seed %d sample %d attempt %d failed: %s", seed, sample_id, attempt, exc)
            continue
        return GeneratedContour(patch.full(), params, False, attempt + 1)
    log.info("seed %d sample %d: falling back to the ground truth", seed, sample_id)
    return GeneratedContour(filled.full(), params, True, MAX_ATTEMPTS)


def generation_record(contour: GeneratedContour, gt_mask) -> dict:
    """One JSON-lines log entry for a generated contour."""
    rec = contour.params.to_dict() if contour.params is not None else {}
    rec["fallback_used"] = contour.fallback_used
    rec["attempts"] = contour.attempts
    rec["iou"] = iou(contour.filled, gt_mask)
    return rec


def _generate_task(args):
    mask, seed, sample_id = args
    return generate_contour(mask, seed, sample_id)


def generate_batch(masks: Sequence[np.ndarray], seed: int, sample_ids: Optional[Sequence[int]] = None,
                   workers: int = 1) -> list[GeneratedContour]:
    """Generate one contour per mask; ``sample_ids`` default to positions."""
    if sample_ids is None:
        sample_ids = range(len(masks))
    tasks = [(as_mask(m), seed, int(i)) for m, i in zip(masks, sample_ids)]
    if workers <= 1 or len(tasks) <= 1:
        return [_generate_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_generate_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def contour_line(filled: np.ndarray, line_width: float) -> np.ndarray:
    """Boundary of the largest component drawn as a closed line."""
    part = largest_component(filled)
    h, w = part.shape
    return draw_polyline(trace_boundary(part), line_width, w, h, close=True)


def generate_heatmap(gt_mask, n: int, seed: int, line_width: float = 1) -> np.ndarray:
    """Per-pixel count of how many of ``n`` generated contour lines cover it."""
    gt = as_mask(gt_mask)
    if n < 1:
        raise ValueError("n must be at least 1")
    heat = np.zeros(gt.shape, dtype=np.int64)
    fallbacks = 0
    for i in range(n):
        gen = generate_contour(gt, seed, sample_id=i)
        fallbacks += gen.fallback_used
        heat += contour_line(gen.filled, line_width)
    if fallbacks == n:
        raise GenerationError(f"all {n} generations fell back to the ground truth")
    return heat


def synthesize_training_sample(gt_mask, seed: int, sample_id: int = 0) -> TrainingSample:
    """A positive selection or a negative erase sample, with equal probability."""
    gt = as_mask(gt_mask)
    positive = make_rng(seed, sample_id, _POLARITY_STREAM).random() < 0.5
    gen = generate_contour(gt, seed, sample_id)
    empty = np.zeros_like(gt)
    if positive:
        return TrainingSample("positive", gen.filled, empty, gt.copy(), gen.fallback_used, gen.params)
    return TrainingSample("negative", gen.filled, gt.copy(), empty, gen.fallback_used, gen.params)
