"""Minimal polyline SVG rendering of sampled curves, no external renderer."""

from __future__ import annotations

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 860, 520
_MARGIN = 60


def _scaled(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (values - lo) * (out_hi - out_lo) / span


def write_polyline_svg(path, t: np.ndarray, series: dict) -> None:
    """Write one SVG with a polyline per named series over a shared time axis."""
    t = np.asarray(t, dtype=float)
    arrays = {name: np.asarray(vals, dtype=float) for name, vals in series.items()}
    y_lo = min(float(np.min(v)) for v in arrays.values())
    y_hi = max(float(np.max(v)) for v in arrays.values())
    x = _scaled(t, float(t[0]), float(t[-1]), _MARGIN, _WIDTH - _MARGIN)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#333"/>',
        f'<text x="{_MARGIN}" y="{_HEIGHT - _MARGIN + 20}" font-size="12">t = {t[0]:g}</text>',
        f'<text x="{_WIDTH - _MARGIN}" y="{_HEIGHT - _MARGIN + 20}" font-size="12" '
        f'text-anchor="end">t = {t[-1]:g}</text>',
        f'<text x="{_MARGIN - 8}" y="{_HEIGHT - _MARGIN}" font-size="12" '
        f'text-anchor="end">{y_lo:.6g}</text>',
        f'<text x="{_MARGIN - 8}" y="{_MARGIN + 4}" font-size="12" '
        f'text-anchor="end">{y_hi:.6g}</text>',
    ]
    for k, (name, vals) in enumerate(arrays.items()):
        color = _PALETTE[k % len(_PALETTE)]
        y = _scaled(vals, y_lo, y_hi, _HEIGHT - _MARGIN, _MARGIN)
        points = " ".join(f"{xi:.2f},{yi:.2f}" for xi, yi in zip(x, y))
        lines.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     f'stroke-width="1.2"/>')
        lines.append(f'<text x="{_MARGIN + 10}" y="{_MARGIN + 16 + 14 * k}" '
                     f'font-size="12" fill="{color}">{name}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
