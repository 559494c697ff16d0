"""Deterministic SVG figures: regression scatter and cross-site comparison.

SVG keeps the reports text-based and diffable; the numeric CSVs emitted
alongside remain the primary record.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .calibration import CalibrationModel, ModelComparison

_W, _H = 640, 480
_MARGIN = 60


class _Axes:
    def __init__(self, x_range: tuple[float, float], y_range: tuple[float, float]):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range

    def px(self, x: float) -> float:
        t = (x - self.x0) / (self.x1 - self.x0)
        return _MARGIN + t * (_W - 2 * _MARGIN)

    def py(self, y: float) -> float:
        t = (y - self.y0) / (self.y1 - self.y0)
        return _H - _MARGIN - t * (_H - 2 * _MARGIN)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    raw = np.linspace(lo, hi, n)
    return [float(f"{v:.4g}") for v in raw]


def _frame(ax: _Axes, x_label: str, y_label: str, title: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{_W / 2:.1f}" y="{_H - 14}" text-anchor="middle">{x_label}</text>',
        f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_H / 2:.1f})">{y_label}</text>',
    ]
    for xv in _ticks(ax.x0, ax.x1):
        px = ax.px(xv)
        parts.append(f'<line x1="{px:.1f}" y1="{_H - _MARGIN}" x2="{px:.1f}" '
                     f'y2="{_H - _MARGIN + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.1f}" y="{_H - _MARGIN + 18}" text-anchor="middle">{xv:g}</text>')
    for yv in _ticks(ax.y0, ax.y1):
        py = ax.py(yv)
        parts.append(f'<line x1="{_MARGIN - 5}" y1="{py:.1f}" x2="{_MARGIN}" '
                     f'y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_MARGIN - 8}" y="{py + 4:.1f}" text-anchor="end">{yv:g}</text>')
    return parts


def _polyline(ax: _Axes, xs, ys, color: str, dashed: bool = False) -> str:
    pts = " ".join(f"{ax.px(x):.1f},{ax.py(y):.1f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="5,4"' if dashed else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'


def write_regression_svg(model: CalibrationModel, path: str | Path, title: str = "") -> None:
    """Scatter of the five (HU, density) points with the fitted line."""
    hu = [p[0] for p in model.points]
    dens = [p[1] for p in model.points]
    pad_x = max(1.0, 0.1 * (max(hu) - min(hu)))
    ax = _Axes((min(hu) - pad_x, max(hu) + pad_x), (min(dens) - 20, max(dens) + 20))
    parts = _frame(ax, "radiodensity (HU)", "density (mg/cm^3)",
                   title or f"calibration {model.case_id}".strip())
    x_line = [ax.x0, ax.x1]
    parts.append(_polyline(ax, x_line, [model.predict(x) for x in x_line], "#1f77b4"))
    for x, y in zip(hu, dens):
        parts.append(f'<circle cx="{ax.px(x):.1f}" cy="{ax.py(y):.1f}" r="4" fill="#d62728"/>')
    eq = f"d = {model.slope:.4f} HU + {model.intercept:.4f},  r = {model.r:.6f}"
    parts.append(f'<text x="{_MARGIN + 10}" y="{_MARGIN + 18}">{eq}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_comparison_svg(cmp: ModelComparison, path: str | Path,
                         labels: tuple[str, str] = ("site A", "site B")) -> None:
    """Median density curves (solid) with IQR envelopes (dotted) per site."""
    hu = cmp.hu.tolist()
    y_all = np.concatenate([cmp.iqr_a.ravel(), cmp.iqr_b.ravel(), cmp.median_a, cmp.median_b])
    ax = _Axes((hu[0], hu[-1]), (float(y_all.min()) - 10, float(y_all.max()) + 10))
    parts = _frame(ax, "radiodensity (HU)", "density (mg/cm^3)", "calibration model comparison")
    for med, iqr, color in ((cmp.median_a, cmp.iqr_a, "#1f77b4"), (cmp.median_b, cmp.iqr_b, "#d62728")):
        parts.append(_polyline(ax, hu, med.tolist(), color))
        parts.append(_polyline(ax, hu, iqr[:, 0].tolist(), color, dashed=True))
        parts.append(_polyline(ax, hu, iqr[:, 1].tolist(), color, dashed=True))
    parts.append(f'<text x="{_MARGIN + 10}" y="{_MARGIN + 18}" fill="#1f77b4">{labels[0]}</text>')
    parts.append(f'<text x="{_MARGIN + 10}" y="{_MARGIN + 34}" fill="#d62728">{labels[1]}</text>')
    rows = ["HU   A        B        diff"]
    rows += [f"{h:<4d} {a:<8.1f} {b:<8.1f} {d:.1f}" for h, a, b, d in cmp.summary]
    for i, row in enumerate(rows):
        parts.append(f'<text x="{_W - _MARGIN - 200}" y="{_H - _MARGIN - 76 + 16 * i}" '
                     f'font-family="monospace">{row}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
