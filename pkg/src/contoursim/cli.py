"""Command-line front end.

Exit codes: 0 success, 1 validator warnings, 2 failures, 64 usage errors,
70 internal errors. Every error also ends with one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from dataclasses import asdict
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from . import curves
from .dataset import DatasetError, close_contour, load_dataset, validate_root
from .encoding import EncodingConfig, ExportedSample, encode_interaction, export_samples
from .evaluation import (EvalConfig, export_mined, mine_finetune_set, run_click_eval, run_contour_eval,
                         sample_id_for)
from .generation import generate_batch, generate_heatmap, generation_record, synthesize_training_sample
from .raster import read_mask_png, write_mask_png
from .segmenters import ExternalSegmenter, FilledBaselineSegmenter, OracleSegmenter

log = logging.getLogger("contoursim")

EXIT_OK, EXIT_WARN, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 64, 70

# never written to config.json, so outputs do not depend on them
_UNRECORDED = {"out", "workers", "config", "log_level", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p, seed=True, out=True):
    p.add_argument("--config", help="JSON file whose keys mirror the flags; flags win")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    if out:
        p.add_argument("--out", help="output directory (required)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="64-bit seed")


def _add_dataset(p):
    p.add_argument("--dataset", help="dataset root with images/, masks/ and contours.json (required)")


def _add_workers(p):
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel workers (default: CPU count); results do not depend on it")


def _add_encoding(p):
    p.add_argument("--mode", choices=["filled", "line"], default="filled", help="contour encoding")
    p.add_argument("--w", type=float, default=0.02, help="line width as a fraction of the shorter side")


def _add_segmenter(p):
    p.add_argument("--segmenter", choices=["oracle", "baseline", "external"], default="oracle")
    p.add_argument("--segmenter-cmd", help="command line of an external segmenter child")
    p.add_argument("--timeout", type=float, default=30.0, help="per-request timeout in seconds")


def _add_eval(p):
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--zoom-in", action="store_true")
    p.add_argument("--flip-average", action="store_true")
    p.add_argument("--expansion", type=float, default=1.4, help="Zoom-In bbox growth factor")
    p.add_argument("--input-size", type=int, default=None, help="resample Zoom-In crops to this longer side")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="contoursim", description="Contour simulation and interactive segmentation benchmarks.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="simulate contours for every dataset mask")
    _add_common(p); _add_dataset(p); _add_workers(p)
    p.add_argument("--n", type=int, default=1, help="contours per mask")

    p = sub.add_parser("heatmap", help="overlay many simulated contour lines for one mask")
    _add_common(p)
    p.add_argument("--mask", help="mask PNG (required)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--line-width", type=float, default=1.0, help="line width in pixels")

    p = sub.add_parser("encode", help="encode annotated contours as PNG channel triplets")
    _add_common(p, seed=False); _add_dataset(p); _add_encoding(p)

    p = sub.add_parser("validate", help="check a dataset directory")
    _add_common(p, seed=False); _add_dataset(p)

    for name, helptext in (("eval-contour", "IoU after a single contour"),
                           ("eval-clicks", "simulated-click NoC curves")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p); _add_dataset(p); _add_workers(p); _add_encoding(p); _add_segmenter(p); _add_eval(p)
        p.add_argument("--contours", choices=["annotated", "generated"], default="annotated",
                       help="annotated contours or freshly simulated ones")
        if name == "eval-clicks":
            p.add_argument("--k", type=float, default=0.90, help="target IoU for NoC")
            p.add_argument("--max-clicks", type=int, default=20)
            p.add_argument("--compare-contour", action="store_true",
                           help="also run the contour protocol and report equivalent clicks")

    p = sub.add_parser("mine", help="keep generated contours the segmenter solves above an IoU")
    _add_common(p); _add_dataset(p); _add_workers(p); _add_segmenter(p); _add_eval(p)
    p.add_argument("--iou-threshold", type=float, default=0.97)

    p = sub.add_parser("export-samples", help="synthesize positive/negative training samples")
    _add_common(p); _add_dataset(p); _add_encoding(p)
    p.add_argument("--n", type=int, default=1, help="samples per mask")
    return ap


_REQUIRED = {
    "generate": ("dataset", "out"), "heatmap": ("mask", "out"), "encode": ("dataset", "out"),
    "validate": ("dataset",), "eval-contour": ("dataset", "out"), "eval-clicks": ("dataset", "out"),
    "mine": ("dataset", "out"), "export-samples": ("dataset", "out"),
}


def _subparser(ap, command):
    for action in ap._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv) -> argparse.Namespace:
    """Strict parse; a ``--config`` JSON supplies defaults for the same flags."""
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        sp = _subparser(ap, args.command)
        dests = {a.dest for a in sp._actions if a.dest != "help"} - {"config"}
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        sp.set_defaults(**cfg)
        args = ap.parse_args(argv)
    missing = [f"--{d.replace('_', '-')}" for d in _REQUIRED[args.command] if getattr(args, d, None) is None]
    if missing:
        raise UsageError(f"contoursim {args.command}: the following arguments are required: {', '.join(missing)}")
    if getattr(args, "segmenter", None) == "external" and not args.segmenter_cmd:
        raise UsageError("--segmenter external needs --segmenter-cmd")
    for flag in ("n", "workers", "max_clicks"):
        if getattr(args, flag, 1) is not None and getattr(args, flag, 1) < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be at least 1")
    return args


def resolved_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _UNRECORDED}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({"command": args.command, **resolved_config(args)},
                                                indent=2, sort_keys=True) + "\n")
    return out


def _write_jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _encoding_config(args) -> EncodingConfig:
    return EncodingConfig(getattr(args, "mode", "filled"), getattr(args, "w", 0.02))


def _eval_config(args) -> EvalConfig:
    return EvalConfig(k=getattr(args, "k", 0.90), max_clicks=getattr(args, "max_clicks", 20),
                      threshold=args.threshold, zoom_in=args.zoom_in, flip_average=args.flip_average,
                      expansion=args.expansion, input_size=args.input_size, encoding=_encoding_config(args),
                      contours=getattr(args, "contours", "annotated"), seed=args.seed, workers=args.workers)


def _segmenter(args, index):
    if args.segmenter == "oracle":
        records = {r.key: r for r in index.records}
        return OracleSegmenter(lru_cache(maxsize=None)(lambda key: records[key].mask()))
    if args.segmenter == "baseline":
        return FilledBaselineSegmenter()
    return ExternalSegmenter(shlex.split(args.segmenter_cmd), args.timeout, args.workers)


def cmd_generate(args) -> int:
    index = load_dataset(args.dataset)
    out = _out_dir(args)
    (out / "contours").mkdir(exist_ok=True)
    masks, ids, names, gts = [], [], [], []
    for rec in index.records:
        gt = rec.mask()
        for i in range(args.n):
            masks.append(gt)
            # one stream per (sample, draw), stable under reordering
            ids.append(sample_id_for(f"{rec.key}/{i}"))
            names.append((rec, i))
            gts.append(gt)
    results = generate_batch(masks, args.seed, ids, workers=args.workers)
    rows = []
    for (rec, i), gen, gt in zip(names, results, gts):
        name = f"{rec.key}_{i:04d}.png"
        write_mask_png(out / "contours" / name, gen.filled)
        rows.append({"image_id": rec.image_id, "annotation_number": rec.annotation_number, "draw": i,
                     "file": f"contours/{name}", **generation_record(gen, gt)})
    _write_jsonl(out / "generation.jsonl", rows)
    fallbacks = sum(r["fallback_used"] for r in rows)
    print(json.dumps({"contours": len(rows), "fallbacks": fallbacks}))
    return EXIT_OK


def cmd_heatmap(args) -> int:
    gt = read_mask_png(args.mask)
    out = _out_dir(args)
    heat = generate_heatmap(gt, args.n, args.seed, args.line_width)
    np.save(out / "heatmap.npy", heat)
    scaled = np.zeros(heat.shape, dtype=np.uint8) if heat.max() == 0 else \
        np.floor(heat * 255.0 / heat.max() + 0.5).astype(np.uint8)
    Image.fromarray(scaled).save(out / "heatmap.png", format="PNG")
    print(json.dumps({"n": args.n, "max": int(heat.max()), "mass": int(heat.sum())}))
    return EXIT_OK


def cmd_encode(args) -> int:
    index = load_dataset(args.dataset)
    out = _out_dir(args)
    config = _encoding_config(args)

    def samples():
        for rec in index.records:
            gt = rec.mask()
            h, w = gt.shape
            enc = encode_interaction([close_contour(c) for c in rec.pos_contours],
                                     [close_contour(c) for c in rec.neg_contours], None, config, (w, h))
            yield ExportedSample(rec.key, enc, gt, {"image_id": rec.image_id,
                                                    "annotation_number": rec.annotation_number})

    export_samples(samples(), out / "encodings")
    return EXIT_OK


def cmd_validate(args) -> int:
    report = validate_root(args.dataset)
    if args.out:
        out = _out_dir(args)
        (out / "validation.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    for err in report.errors:
        print(f"error  {err['entry']}: {err['error']}")
    for r in report.records:
        for f in r.findings:
            print(f"{r.status:5s}  {r.key}: {f}")
    print(json.dumps({"exit_code": report.exit_code, **report.counts()}))
    return report.exit_code


def _summary(report) -> str:
    agg = report.aggregates
    lines = [f"samples {agg['samples']}  failed {agg['failed']}  fallbacks {agg['fallbacks']}"]
    if agg.get("mean_iou_at_1") is not None:
        lines.append(f"mean IoU@1 {100 * agg['mean_iou_at_1']:.2f}")
    if agg.get("mean_noc_at_k") is not None:
        lines.append(f"mean NoC@{round(100 * report.config['k'])} {agg['mean_noc_at_k']:.2f}"
                     f"  (not reached: {agg['noc_not_reached']}, counted as {report.config['max_clicks']})")
    if "equivalent_clicks" in agg:
        lines.append(f"equivalent clicks {agg['equivalent_clicks']}")
    return "\n".join(lines) + "\n"


def _write_report(out: Path, report) -> None:
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_jsonl(out / "rows.jsonl", [asdict(r) for r in report.rows])
    (out / "summary.txt").write_text(_summary(report))
    sys.stdout.write(_summary(report))


def _run_eval(args, clicks: bool) -> int:
    index = load_dataset(args.dataset)
    out = _out_dir(args)
    config = _eval_config(args)
    seg = _segmenter(args, index)
    try:
        contour_report = None
        if not clicks or args.compare_contour:
            contour_report = run_contour_eval(seg, index, config)
        report = run_click_eval(seg, index, config, contour_report) if clicks else contour_report
    finally:
        if hasattr(seg, "close"):
            seg.close()
    _write_report(out, report)
    if clicks or report.aggregates.get("mean_iou_at_1") is not None:
        csv_bytes, svg_bytes = curves.export_curves(report)
        (out / "curves.csv").write_bytes(csv_bytes)
        (out / "curves.svg").write_bytes(svg_bytes)
    return EXIT_FAIL if report.aggregates["failed"] else EXIT_OK


def cmd_mine(args) -> int:
    index = load_dataset(args.dataset)
    out = _out_dir(args)
    seg = _segmenter(args, index)
    try:
        mined = mine_finetune_set(seg, index, args.seed, args.iou_threshold, _eval_config(args))
    finally:
        if hasattr(seg, "close"):
            seg.close()
    export_mined(mined, out / "mined", index)
    print(json.dumps({"records": len(index.records), "mined": len(mined)}))
    return EXIT_OK


def cmd_export_samples(args) -> int:
    index = load_dataset(args.dataset)
    out = _out_dir(args)
    config = _encoding_config(args)

    def samples():
        for rec in index.records:
            gt = rec.mask()
            h, w = gt.shape
            for i in range(args.n):
                s = synthesize_training_sample(gt, args.seed, sample_id_for(f"{rec.key}/{i}"))
                pos, neg = ([s.contour], []) if s.polarity == "positive" else ([], [s.contour])
                enc = encode_interaction(pos, neg, s.previous_mask.astype(np.float64), config, (w, h))
                yield ExportedSample(f"{rec.key}_{i:04d}", enc, s.target,
                                     {"image_id": rec.image_id, "annotation_number": rec.annotation_number,
                                      "polarity": s.polarity, "fallback_used": s.fallback_used,
                                      "params": s.params.to_dict() if s.params else None})

    export_samples(samples(), out / "samples")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "heatmap": cmd_heatmap, "encode": cmd_encode, "validate": cmd_validate,
    "eval-contour": lambda a: _run_eval(a, clicks=False), "eval-clicks": lambda a: _run_eval(a, clicks=True),
    "mine": cmd_mine, "export-samples": cmd_export_samples,
}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": str(exc), "kind": type(exc).__name__, "exit_code": code}), file=sys.stderr)
    return code


def run_command(args) -> int:
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    log.info("resolved config %s", json.dumps({"command": args.command, **resolved_config(args)}, sort_keys=True))
    try:
        return COMMANDS[args.command](args)
    except DatasetError as exc:
        return _fail(EXIT_FAIL, exc)
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_INTERNAL, exc)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return _fail(EXIT_USAGE, exc)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
