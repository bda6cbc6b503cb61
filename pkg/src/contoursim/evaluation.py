"""Evaluation protocols: single-contour IoU, simulated-click NoC curves,
equivalent clicks, Zoom-In and flip averaging, and fine-tune set mining."""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage as ndi

from .dataset import AnnotationRecord, DatasetIndex, close_contour
from .encoding import EncodingConfig, ExportedSample, InteractionEncoding, encode_interaction, export_samples
from .generation import generate_contour
from .protocol import SegmenterError
from .raster import bounding_box, iou
from .segmenters import NEGATIVE, POSITIVE, Click, SegmenterAnswer, SegmenterQuery, check_answer
from .views import IDENTITY, View, ZoomInWindow

log = logging.getLogger(__name__)

NOT_REACHED = "not reached"
BEYOND_MAX = "beyond max"


class Converged(ValueError):
    """Prediction already equals the ground truth; no click is needed."""


@dataclass(frozen=True)
class EvalConfig:
    k: float = 0.90
    max_clicks: int = 20
    threshold: float = 0.5
    zoom_in: bool = False
    flip_average: bool = False
    expansion: float = 1.4
    input_size: Optional[int] = None
    # crops around tiny click regions are grown to at least this many pixels
    zoom_min_size: int = 32
    encoding: EncodingConfig = EncodingConfig()
    contours: str = "annotated"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError("k must lie in (0, 1]")
        if self.max_clicks < 1:
            raise ValueError("max_clicks must be at least 1")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must lie in [0, 1]")
        if self.expansion < 1:
            raise ValueError("expansion must be at least 1")
        if self.contours not in ("annotated", "generated"):
            raise ValueError("contours must be 'annotated' or 'generated'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d


@dataclass
class EvalRow:
    image_id: str
    annotation_number: str
    iou_at_1_contour: Optional[float] = None
    iou_per_click: list = field(default_factory=list)
    noc_at_k: Union[int, str, None] = None
    equivalent_clicks: Union[int, str, None] = None
    fallback_used: bool = False
    error: Optional[str] = None

    @property
    def key(self) -> str:
        return f"{self.image_id}_{self.annotation_number}"


@dataclass
class EvalReport:
    kind: str
    config: dict
    rows: list
    aggregates: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config, "aggregates": self.aggregates,
                "rows": [asdict(r) for r in self.rows]}


def sample_id_for(key: str) -> int:
    """Stable per-sample stream id, independent of record order."""
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def zoom_in(encoding: InteractionEncoding, expansion: float = 1.4,
            input_size: Optional[int] = None) -> tuple[InteractionEncoding, ZoomInWindow]:
    """Crop all planes around the positive plane's bbox grown by ``expansion``."""
    if not encoding.positive.any():
        raise ValueError("zoom-in requires a contour")
    window = ZoomInWindow.around(encoding.positive, expansion, input_size)
    return encoding.mapped(window.forward), window


def _mirror(clicks: Sequence[Click], width: int) -> tuple:
    return tuple(Click(width - 1 - c.x, c.y, c.polarity) for c in clicks)


def flip_average(segmenter, query: SegmenterQuery) -> SegmenterAnswer:
    """Mean of the answers for the query and its horizontal mirror."""
    mirrored = replace(query, encoding=query.encoding.flipped(), clicks=_mirror(query.clicks, query.encoding.width),
                       view=View(query.view.window, not query.view.flipped))
    a = check_answer(query, segmenter.predict(query)).probabilities
    b = check_answer(mirrored, segmenter.predict(mirrored)).probabilities
    return SegmenterAnswer((a + b[:, ::-1]) / 2.0)


def _grow_to(region: np.ndarray, min_size: int) -> np.ndarray:
    """Region padded with a centred box so its bbox spans at least ``min_size``."""
    h, w = region.shape
    b = bounding_box(region)
    if b.width >= min_size and b.height >= min_size:
        return region
    cx, cy = (b.x0 + b.x1) // 2, (b.y0 + b.y1) // 2
    half = min_size // 2
    out = region.copy()
    out[max(0, cy - half):min(h, cy + half), max(0, cx - half):min(w, cx + half)] = True
    return out


def segment(segmenter, encoding: InteractionEncoding, config: EvalConfig, *, image_ref: str = "",
            key: Optional[str] = None, index: int = 1, clicks: Sequence[Click] = (),
            zoom_region: Optional[np.ndarray] = None) -> np.ndarray:
    """Query a segmenter with the configured tricks; returns a full-frame probability plane."""
    window = None
    view = IDENTITY
    if zoom_region is not None:
        window = ZoomInWindow.around(zoom_region, config.expansion, config.input_size)
        encoding = encoding.mapped(window.forward)
        clicks = tuple(Click(*window.forward_point(c.x, c.y), c.polarity) for c in clicks)
        view = View(window)
    query = SegmenterQuery(image_ref, encoding, index, key, tuple(clicks), view)
    if config.flip_average:
        prob = flip_average(segmenter, query).probabilities
    else:
        prob = check_answer(query, segmenter.predict(query)).probabilities
    return window.inverse(prob) if window is not None else prob


def simulate_next_click(gt, pred) -> Click:
    """Click deep inside the larger error region (false negatives win ties).

    The click goes to the pixel farthest from the region boundary, with the
    image edge counting as boundary; ties go to the first pixel in row order.
    """
    gt, pred = np.asarray(gt, dtype=bool), np.asarray(pred, dtype=bool)
    if gt.shape != pred.shape:
        raise ValueError("gt and pred shapes differ")
    fn, fp = gt & ~pred, pred & ~gt
    n_fn, n_fp = np.count_nonzero(fn), np.count_nonzero(fp)
    if n_fn == 0 and n_fp == 0:
        raise Converged("converged")
    region, polarity = (fn, POSITIVE) if n_fn >= n_fp else (fp, NEGATIVE)
    dist = ndi.distance_transform_edt(np.pad(region, 1))[1:-1, 1:-1]
    y, x = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return Click(int(x), int(y), polarity)


def equivalent_clicks(click_curve: Sequence[float], iou_one_contour: float) -> Union[int, str]:
    """1-based index of the first click whose IoU reaches the single-contour IoU."""
    if len(click_curve) == 0:
        raise ValueError("click curve is empty")
    for i, v in enumerate(click_curve, start=1):
        if v >= iou_one_contour:
            return i
    return BEYOND_MAX


def noc_at_k(click_curve: Sequence[float], k: float) -> Union[int, str]:
    for i, v in enumerate(click_curve, start=1):
        if v >= k:
            return i
    return NOT_REACHED


def _contour_inputs(rec: AnnotationRecord, gt: np.ndarray, config: EvalConfig):
    h, w = gt.shape
    if config.contours == "generated":
        gen = generate_contour(gt, config.seed, sample_id_for(rec.key))
        enc = encode_interaction([gen.filled], [], None, config.encoding, (w, h))
        return enc, gen.fallback_used
    pos = [close_contour(c) for c in rec.pos_contours]
    neg = [close_contour(c) for c in rec.neg_contours]
    return encode_interaction(pos, neg, None, config.encoding, (w, h)), False


def _contour_row(segmenter, rec: AnnotationRecord, config: EvalConfig) -> EvalRow:
    row = EvalRow(rec.image_id, rec.annotation_number)
    try:
        gt = rec.mask()
        enc, row.fallback_used = _contour_inputs(rec, gt, config)
        if config.zoom_in and not enc.positive.any():
            raise ValueError("zoom-in requires a contour")
        prob = segment(segmenter, enc, config, image_ref=str(rec.image_path or ""), key=rec.key,
                       zoom_region=enc.positive if config.zoom_in else None)
        row.iou_at_1_contour = iou(prob >= config.threshold, gt)
    except (SegmenterError, ValueError, OSError) as exc:
        log.warning("%s: contour evaluation failed: %s", rec.key, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _click_row(segmenter, rec: AnnotationRecord, config: EvalConfig) -> EvalRow:
    row = EvalRow(rec.image_id, rec.annotation_number)
    try:
        gt = rec.mask()
        h, w = gt.shape
        empty = np.zeros((h, w), dtype=bool)
        prev = np.zeros((h, w))
        pred = empty
        clicks: list[Click] = []
        for index in range(1, config.max_clicks + 1):
            try:
                clicks.append(simulate_next_click(gt, pred))
            except Converged:
                break
            enc = InteractionEncoding(empty, empty, prev, config.encoding.mode)
            region = None
            if config.zoom_in and index >= 2:
                region = pred.copy()
                for c in clicks:
                    region[c.y, c.x] = True
                region = _grow_to(region, config.zoom_min_size)
            prob = segment(segmenter, enc, config, image_ref=str(rec.image_path or ""), key=rec.key,
                           index=index, clicks=clicks, zoom_region=region)
            prev = np.clip(prob, 0.0, 1.0)
            pred = prob >= config.threshold
            row.iou_per_click.append(iou(pred, gt))
        row.noc_at_k = noc_at_k(row.iou_per_click, config.k)
    except (SegmenterError, ValueError, OSError) as exc:
        log.warning("%s: click evaluation failed: %s", rec.key, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _run_rows(fn, segmenter, dataset: DatasetIndex, config: EvalConfig) -> list:
    records = sorted(dataset.records, key=lambda r: (r.image_id, r.annotation_number))
    if config.workers <= 1 or len(records) <= 1:
        return [fn(segmenter, r, config) for r in records]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda r: fn(segmenter, r, config), records))


def _mean(values) -> Optional[float]:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def padded_curve(curve: Sequence[float], length: int) -> list:
    """Extend a curve that stopped early (converged) with its last value."""
    if not curve:
        return []
    return list(curve) + [curve[-1]] * (length - len(curve))


def _aggregate(rows: list, config: EvalConfig) -> dict:
    ok = [r for r in rows if r.error is None]
    agg = {"samples": len(rows), "failed": len(rows) - len(ok),
           "fallbacks": sum(1 for r in rows if r.fallback_used)}
    contour = [r.iou_at_1_contour for r in ok if r.iou_at_1_contour is not None]
    agg["mean_iou_at_1"] = _mean(contour)
    clicked = [r for r in ok if r.iou_per_click]
    if clicked:
        curves = [padded_curve(r.iou_per_click, config.max_clicks) for r in clicked]
        agg["mean_iou_per_click"] = [math.fsum(c[i] for c in curves) / len(curves) for i in range(config.max_clicks)]
        nocs = [config.max_clicks if r.noc_at_k == NOT_REACHED else r.noc_at_k for r in clicked]
        agg["mean_noc_at_k"] = _mean(nocs)
        agg["noc_not_reached"] = sum(1 for r in clicked if r.noc_at_k == NOT_REACHED)
        if agg["mean_iou_at_1"] is not None:
            agg["equivalent_clicks"] = equivalent_clicks(agg["mean_iou_per_click"], agg["mean_iou_at_1"])
    return agg


def run_contour_eval(segmenter, dataset: DatasetIndex, config: EvalConfig = EvalConfig()) -> EvalReport:
    rows = _run_rows(_contour_row, segmenter, dataset, config)
    return EvalReport("contour", config.to_dict(), rows, _aggregate(rows, config))


def run_click_eval(segmenter, dataset: DatasetIndex, config: EvalConfig = EvalConfig(),
                   contour_report: Optional[EvalReport] = None) -> EvalReport:
    """Simulated-click loop per sample; a contour report adds equivalent clicks."""
    rows = _run_rows(_click_row, segmenter, dataset, config)
    if contour_report is not None:
        by_key = {r.key: r for r in contour_report.rows}
        for r in rows:
            c = by_key.get(r.key)
            if c is None or c.iou_at_1_contour is None or not r.iou_per_click:
                continue
            r.iou_at_1_contour = c.iou_at_1_contour
            r.fallback_used = c.fallback_used
            r.equivalent_clicks = equivalent_clicks(padded_curve(r.iou_per_click, config.max_clicks),
                                                    c.iou_at_1_contour)
    return EvalReport("clicks", config.to_dict(), rows, _aggregate(rows, config))


@dataclass
class MinedSample:
    image_id: str
    annotation_number: str
    contour: np.ndarray
    gt_path: str
    iou: float
    fallback_used: bool

    @property
    def key(self) -> str:
        return f"{self.image_id}_{self.annotation_number}"


def mine_finetune_set(segmenter, dataset: DatasetIndex, seed: int, iou_threshold: float = 0.97,
                      config: EvalConfig = EvalConfig()) -> list:
    """Keep generated contours on which the segmenter scores IoU above the threshold."""
    mined = []
    for rec in sorted(dataset.records, key=lambda r: (r.image_id, r.annotation_number)):
        try:
            gt = rec.mask()
            h, w = gt.shape
            gen = generate_contour(gt, seed, sample_id_for(rec.key))
            enc = encode_interaction([gen.filled], [], None, config.encoding, (w, h))
            prob = segment(segmenter, enc, config, image_ref=str(rec.image_path or ""), key=rec.key,
                           zoom_region=enc.positive if config.zoom_in else None)
        except (SegmenterError, ValueError, OSError) as exc:
            log.warning("%s: skipped while mining: %s", rec.key, exc)
            continue
        score = iou(prob >= config.threshold, gt)
        if score > iou_threshold:
            mined.append(MinedSample(rec.image_id, rec.annotation_number, gen.filled, str(rec.mask_path),
                                     score, gen.fallback_used))
    return mined


def export_mined(mined: Sequence[MinedSample], out_dir, dataset: DatasetIndex):
    """Training-sample export of mined contours: positive plane, empty previous, gt target."""
    masks = {r.key: r for r in dataset.records}

    def samples():
        for m in mined:
            gt = masks[m.key].mask()
            empty = np.zeros_like(gt)
            enc = InteractionEncoding(m.contour, empty, np.zeros(gt.shape), "filled")
            yield ExportedSample(m.key, enc, gt, {"image_id": m.image_id,
                                                  "annotation_number": m.annotation_number,
                                                  "iou": m.iou, "fallback_used": m.fallback_used,
                                                  "polarity": POSITIVE})

    return export_samples(samples(), out_dir)
