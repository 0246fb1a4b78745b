"""Minimal deterministic SVG line and scatter plots."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _range(values: list[np.ndarray]) -> tuple[float, float]:
    lo = min(float(np.min(v)) for v in values)
    hi = max(float(np.max(v)) for v in values)
    if hi == lo:
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xr, yr):
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x):
        return MARGIN["left"] + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return MARGIN["top"] + (1.0 - (np.asarray(y) - self.y0) / (self.y1 - self.y0)) * self.ph


def _axes(frame: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    left, top = MARGIN["left"], MARGIN["top"]
    bottom = top + frame.ph
    out = [
        f'<rect x="{left}" y="{top}" width="{frame.pw}" height="{frame.ph}" fill="none" stroke="#000"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{left + frame.pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="16" y="{top + frame.ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {top + frame.ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        xv = frame.x0 + (frame.x1 - frame.x0) * k / 4
        yv = frame.y0 + (frame.y1 - frame.y0) * k / 4
        xp, yp = float(frame.px(xv)), float(frame.py(yv))
        out.append(f'<line x1="{_fmt(xp)}" y1="{bottom}" x2="{_fmt(xp)}" y2="{bottom + 5}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(xp)}" y="{bottom + 18}" text-anchor="middle" font-size="11">{_tick(xv)}</text>')
        out.append(f'<line x1="{left - 5}" y1="{_fmt(yp)}" x2="{left}" y2="{_fmt(yp)}" stroke="#000"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(yp + 4)}" text-anchor="end" font-size="11">{_tick(yv)}</text>')
    return out


def _legend(labels: list[str]) -> list[str]:
    out = []
    for k, label in enumerate(labels):
        y = MARGIN["top"] + 14 + 16 * k
        x = WIDTH - MARGIN["right"] - 150
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{x + 15}" y="{y}" font-size="11">{escape(label)}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *body, "</svg>", ""])


def line_plot(series: list[tuple], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """``series`` holds (xs, ys, label) triples; returns the SVG text."""
    if not series or any(len(s[0]) == 0 for s in series):
        raise ValueError("line_plot needs at least one nonempty series")
    xs = [np.asarray(s[0], dtype=float) for s in series]
    ys = [np.asarray(s[1], dtype=float) for s in series]
    frame = _Frame(_range(xs), _range(ys))
    body = _axes(frame, title, xlabel, ylabel)
    for k, (x, y) in enumerate(zip(xs, ys)):
        color = PALETTE[k % len(PALETTE)]
        px, py = frame.px(x), frame.py(y)
        if len(x) == 1:
            body.append(f'<circle cx="{_fmt(px[0])}" cy="{_fmt(py[0])}" r="3" fill="{color}"/>')
            continue
        d = "M" + " L".join(f"{_fmt(a)} {_fmt(b)}" for a, b in zip(px, py))
        body.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    body += _legend([s[2] for s in series])
    return _document(body)


def scatter_plot(clouds: list[tuple], title: str = "", xlabel: str = "x1", ylabel: str = "x2",
                 max_points: int = 2000) -> str:
    """``clouds`` holds (points (n, 2), label) pairs; the first ``max_points`` of each are drawn."""
    if not clouds or any(len(c[0]) == 0 for c in clouds):
        raise ValueError("scatter_plot needs at least one nonempty cloud")
    pts = [np.asarray(c[0], dtype=float)[:max_points] for c in clouds]
    frame = _Frame(_range([p[:, 0] for p in pts]), _range([p[:, 1] for p in pts]))
    body = _axes(frame, title, xlabel, ylabel)
    for k, p in enumerate(pts):
        color = PALETTE[k % len(PALETTE)]
        px, py = frame.px(p[:, 0]), frame.py(p[:, 1])
        body.append(f'<g fill="{color}" fill-opacity="0.35">')
        body += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="1.5"/>' for a, b in zip(px, py)]
        body.append("</g>")
    body += _legend([c[1] for c in clouds])
    return _document(body)
