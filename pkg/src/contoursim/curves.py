"""Per-click IoU curves as CSV and a small dependency-free SVG plot."""
from __future__ import annotations

from typing import Optional

from .evaluation import EvalReport

CSV_HEADER = "clicks,mean_iou,contour_iou"

_W, _H = 480, 320
_LEFT, _RIGHT, _TOP, _BOTTOM = 56, 16, 16, 40


def _pct(v: Optional[float]) -> str:
    return "" if v is None else f"{100.0 * v:.2f}"


def curve_series(report: EvalReport) -> tuple[list, Optional[float]]:
    agg = report.aggregates
    curve = agg.get("mean_iou_per_click") or []
    return list(curve), agg.get("mean_iou_at_1")


def curves_csv(report: EvalReport) -> bytes:
    """One row per click: mean IoU and the single-contour reference, in percent."""
    curve, contour = curve_series(report)
    if not curve and contour is None:
        raise ValueError("report has neither a click curve nor a contour IoU")
    lines = [CSV_HEADER]
    for i, v in enumerate(curve, start=1):
        lines.append(f"{i},{_pct(v)},{_pct(contour)}")
    if not curve:
        lines.append(f"0,,{_pct(contour)}")
    return ("\n".join(lines) + "\n").encode()


def curves_svg(report: EvalReport, title: str = "mean IoU per click") -> bytes:
    curve, contour = curve_series(report)
    n = max(len(curve), 1)
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(i: float) -> float:
        return _LEFT + (pw * (i - 1) / (n - 1) if n > 1 else pw / 2)

    def py(v: float) -> float:
        return _TOP + ph * (1.0 - v)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="12" font-size="11" text-anchor="middle">{title}</text>',
           f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>',
           f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>']
    for t in range(0, 101, 20):
        y = py(t / 100)
        out.append(f'<line x1="{_LEFT - 4}" y1="{y:.2f}" x2="{_LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{t}</text>')
    for i in range(1, n + 1):
        if n <= 20 or i % 5 == 0 or i == 1:
            x = px(i)
            out.append(f'<text x="{x:.2f}" y="{_TOP + ph + 14}" font-size="10" text-anchor="middle">{i}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.1f}" y="{_H - 6}" font-size="11" text-anchor="middle">clicks</text>')
    if curve:
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(curve, start=1))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    if contour is not None:
        y = py(contour)
        out.append(f'<line x1="{_LEFT}" y1="{y:.2f}" x2="{_LEFT + pw}" y2="{y:.2f}" '
                   f'stroke="#d62728" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{_LEFT + pw}" y="{y - 4:.2f}" font-size="10" text-anchor="end">'
                   f'single contour {_pct(contour)}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode()


def export_curves(report: EvalReport) -> tuple[bytes, bytes]:
    return curves_csv(report), curves_svg(report)
