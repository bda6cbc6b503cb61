"""Reader, validator and writer for the contour dataset layout::

    root/
      images/<image_id>.jpg
      masks/<image_id>_<NN>.png      NN = 01, 02, ... per annotation
      contours.json                  {image_id: [{"pos_contours": [...], "neg_contours": [...]}, ...]}

Each contour is a list of ``[x, y]`` pairs in normalized image coordinates.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .encoding import close_polygon
from .raster import iou, rasterize_polygon, read_mask_png

log = logging.getLogger(__name__)

MASK_NAME = re.compile(r"^(?P<image_id>.+)_(?P<number>\d{2})\.png$")

PASS, WARN, FAIL = "pass", "warn", "fail"


class DatasetError(Exception):
    """Loading problem tied to one entry (a file path or a JSON key)."""

    def __init__(self, message: str, entry: str):
        super().__init__(f"{entry}: {message}")
        self.entry = entry


class MissingFileError(DatasetError):
    pass


class MalformedAnnotationError(DatasetError):
    pass


class NameConventionError(DatasetError):
    pass


def close_contour(poly) -> np.ndarray:
    """Join the last vertex back to the first; a no-op on closed paths."""
    return close_polygon(poly)


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    annotation_number: str
    pos_contours: tuple
    neg_contours: tuple
    mask_path: Path
    image_path: Optional[Path] = None

    @property
    def key(self) -> str:
        return f"{self.image_id}_{self.annotation_number}"

    def mask(self) -> np.ndarray:
        return read_mask_png(self.mask_path)


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    records: tuple
    images: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)


def mask_file_name(image_id: str, number: int) -> str:
    return f"{image_id}_{number:02d}.png"


def _parse_contours(raw, entry: str) -> tuple:
    if not isinstance(raw, list):
        raise MalformedAnnotationError("contour list must be a JSON array", entry)
    out = []
    for j, c in enumerate(raw):
        try:
            p = np.asarray(c, dtype=np.float64)
        except (TypeError, ValueError):
            raise MalformedAnnotationError(f"contour {j} is not a list of [x, y] pairs", entry) from None
        if p.ndim != 2 or p.shape[1] != 2:
            raise MalformedAnnotationError(f"contour {j} is not a list of [x, y] pairs", entry)
        if len(p) < 2:
            raise MalformedAnnotationError(f"contour {j} is degenerate (fewer than 2 vertices)", entry)
        if not np.isfinite(p).all():
            raise MalformedAnnotationError(f"contour {j} has non-finite coordinates", entry)
        p.flags.writeable = False
        out.append(p)
    return tuple(out)


def _check_mask_names(masks_dir: Path) -> None:
    for path in sorted(masks_dir.iterdir()):
        if path.is_file() and not MASK_NAME.match(path.name):
            raise NameConventionError("mask file name must be <image_id>_<NN>.png", str(path))


def parse_annotations(data, root: Path, images_dir: Path, masks_dir: Path) -> DatasetIndex:
    if not isinstance(data, dict):
        raise MalformedAnnotationError("top level must be an object keyed by image id", "contours.json")
    if not data:
        log.warning("no annotations")
    records, images = [], {}
    for image_id in sorted(data):
        entries = data[image_id]
        if not isinstance(entries, list) or not entries:
            raise MalformedAnnotationError("expected a non-empty list of annotations", image_id)
        found = sorted(p for p in images_dir.glob(f"{glob_escape(image_id)}.*") if p.is_file())
        if not found:
            raise MissingFileError("image not found", str(images_dir / f"{image_id}.jpg"))
        images[image_id] = found[0]
        for n, entry in enumerate(entries, start=1):
            key = f"{image_id}[{n - 1}]"
            if not isinstance(entry, dict) or not {"pos_contours", "neg_contours"} <= set(entry):
                raise MalformedAnnotationError("annotation needs pos_contours and neg_contours", key)
            mask_path = masks_dir / mask_file_name(image_id, n)
            if not mask_path.is_file():
                raise MissingFileError("mask not found", str(mask_path))
            records.append(AnnotationRecord(
                image_id=image_id, annotation_number=f"{n:02d}",
                pos_contours=_parse_contours(entry["pos_contours"], key),
                neg_contours=_parse_contours(entry["neg_contours"], key),
                mask_path=mask_path, image_path=found[0]))
    return DatasetIndex(root, tuple(records), images)


def glob_escape(name: str) -> str:
    return re.sub(r"([*?\[])", r"[\1]", name)


def load_dataset(root) -> DatasetIndex:
    root = Path(root)
    images_dir, masks_dir, ann = root / "images", root / "masks", root / "contours.json"
    for p in (images_dir, masks_dir):
        if not p.is_dir():
            raise MissingFileError("directory not found", str(p))
    if not ann.is_file():
        raise MissingFileError("annotation file not found", str(ann))
    try:
        data = json.loads(ann.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedAnnotationError(f"invalid JSON ({exc})", str(ann)) from None
    _check_mask_names(masks_dir)
    return parse_annotations(data, root, images_dir, masks_dir)


def image_size(path) -> tuple[int, int]:
    """``(width, height)`` from the image header, without decoding pixels."""
    with Image.open(path) as img:
        return img.size


@dataclass
class RecordReport:
    key: str
    status: str
    findings: list

    def to_dict(self) -> dict:
        return {"key": self.key, "status": self.status, "findings": self.findings}


@dataclass
class ValidationReport:
    records: list
    errors: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if self.errors or any(r.status == FAIL for r in self.records):
            return 2
        if any(r.status == WARN for r in self.records):
            return 1
        return 0

    def counts(self) -> dict:
        out = {PASS: 0, WARN: 0, FAIL: 0}
        for r in self.records:
            out[r.status] += 1
        return out

    def to_dict(self) -> dict:
        return {"exit_code": self.exit_code, "counts": self.counts(), "errors": self.errors,
                "records": [r.to_dict() for r in self.records]}


def validate_record(rec: AnnotationRecord, image_dims: Optional[tuple[int, int]]) -> RecordReport:
    fails, warns = [], []
    for kind, contours in (("pos", rec.pos_contours), ("neg", rec.neg_contours)):
        for j, c in enumerate(contours):
            if c.min() < 0 or c.max() > 1:
                warns.append(f"{kind}_contours[{j}] has coordinates outside [0, 1] "
                             f"(range {c.min():.6f}..{c.max():.6f})")
    try:
        mask = rec.mask()
    except OSError as exc:
        return RecordReport(rec.key, FAIL, [f"unreadable mask: {exc}"])
    h, w = mask.shape
    if image_dims is not None and image_dims != (w, h):
        fails.append(f"mask is {w}x{h} but image is {image_dims[0]}x{image_dims[1]}")
    if not mask.any():
        fails.append("mask is empty")
    if not rec.pos_contours:
        fails.append("no positive contour")
    elif mask.any():
        region = np.zeros_like(mask)
        for c in rec.pos_contours:
            region |= rasterize_polygon(close_contour(c), w, h)
        score = iou(region, mask)
        if score == 0:
            fails.append("positive contour does not overlap the mask (IoU=0)")
    status = FAIL if fails else WARN if warns else PASS
    return RecordReport(rec.key, status, fails + warns)


def validate_dataset(index: DatasetIndex) -> ValidationReport:
    reports = []
    dims = {}
    for image_id, path in index.images.items():
        try:
            dims[image_id] = image_size(path)
        except OSError:
            dims[image_id] = None
    for rec in index.records:
        reports.append(validate_record(rec, dims.get(rec.image_id)))
    return ValidationReport(reports)


def validate_root(root) -> ValidationReport:
    """Load and validate; load errors become a failing report."""
    try:
        index = load_dataset(root)
    except DatasetError as exc:
        return ValidationReport([], [{"entry": exc.entry, "error": str(exc), "kind": type(exc).__name__}])
    return validate_dataset(index)


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def serialize_annotations(index: DatasetIndex) -> bytes:
    """Byte-stable JSON: sorted keys, six-decimal coordinates."""
    by_image: dict[str, list] = {}
    for rec in sorted(index.records, key=lambda r: (r.image_id, r.annotation_number)):
        by_image.setdefault(rec.image_id, []).append(rec)
    parts = []
    for image_id in sorted(by_image):
        entries = []
        for rec in by_image[image_id]:
            fields = []
            for name, contours in (("neg_contours", rec.neg_contours), ("pos_contours", rec.pos_contours)):
                cs = ",".join("[" + ",".join(f"[{_fmt(x)},{_fmt(y)}]" for x, y in c) + "]" for c in contours)
                fields.append(f"{json.dumps(name)}:[{cs}]")
            entries.append("{" + ",".join(fields) + "}")
        parts.append(f"{json.dumps(image_id)}:[{','.join(entries)}]")
    return ("{" + ",".join(parts) + "}").encode()


def write_dataset(root, images: dict, annotations: dict) -> Path:
    """Create a dataset directory.

    ``images`` maps image id to an ``(H, W, 3)`` uint8 array; ``annotations``
    maps image id to a list of ``(mask, pos_contours, neg_contours)``.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    for image_id in sorted(annotations):
        Image.fromarray(np.asarray(images[image_id], dtype=np.uint8)).save(
            root / "images" / f"{image_id}.jpg", format="JPEG", quality=90)
        for n, (mask, pos, neg) in enumerate(annotations[image_id], start=1):
            path = root / "masks" / mask_file_name(image_id, n)
            Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(path, format="PNG")
            records.append(AnnotationRecord(image_id, f"{n:02d}",
                                            tuple(np.asarray(c, dtype=np.float64) for c in pos),
                                            tuple(np.asarray(c, dtype=np.float64) for c in neg), path))
    (root / "contours.json").write_bytes(serialize_annotations(DatasetIndex(root, tuple(records))))
    return root
