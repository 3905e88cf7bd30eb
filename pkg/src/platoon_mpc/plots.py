"""Minimal static SVG line charts for run telemetry."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .sim import Telemetry

WIDTH, HEIGHT = 800, 360
MARGIN = dict(left=70, right=130, top=40, bottom=50)
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _nice_ticks(lo: float, hi: float, count: int = 6) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** np.floor(np.log10(raw))
    step = next(s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def line_chart(x, series, title: str, xlabel: str, ylabel: str) -> str:
    """Render ``series`` (list of ``(label, y)``) against ``x`` as SVG text."""
    x = np.asarray(x, dtype=float)
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    ys = [np.asarray(y, dtype=float) for _, y in series]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.zeros(0)
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    pad = 0.05 * (y_hi - y_lo) or 1.0
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    for tx in _nice_ticks(x_lo, x_hi):
        if x_lo <= tx <= x_hi:
            px = sx(tx)
            out.append(f'<line x1="{px:.2f}" y1="{top}" x2="{px:.2f}" y2="{top + ph}" stroke="#e0e0e0"/>')
            out.append(f'<text x="{px:.2f}" y="{top + ph + 16}" text-anchor="middle">{tx:g}</text>')
    for ty in _nice_ticks(y_lo, y_hi):
        if y_lo <= ty <= y_hi:
            py = sy(ty)
            out.append(f'<line x1="{left}" y1="{py:.2f}" x2="{left + pw}" y2="{py:.2f}" stroke="#e0e0e0"/>')
            out.append(f'<text x="{left - 6}" y="{py + 4:.2f}" text-anchor="end">{ty:g}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for n, ((label, _), y) in enumerate(zip(series, ys)):
        color = COLORS[n % len(COLORS)]
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * n
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def telemetry_plots(tel: Telemetry) -> dict:
    """SVG text for the distance, velocity and acceleration panels keyed by file name."""
    m, t = tel.m, tel.t
    empty = len(tel) == 0
    gaps = [(f"gap {i}-{i + 1}", np.zeros(0) if empty else tel.gaps[:, i - 1]) for i in range(1, m)]
    vel = [(f"vehicle {i + 1}", np.zeros(0) if empty else tel.velocities[:, i]) for i in range(m)]
    acc = [(f"vehicle {i + 1}", np.zeros(0) if empty else tel.accelerations[:, i]) for i in range(m)]
    return {
        "distances.svg": line_chart(t, gaps, "Inter-vehicle distance", "time [s]", "distance [m]"),
        "velocities.svg": line_chart(t, vel, "Velocity", "time [s]", "velocity [m/s]"),
        "accelerations.svg": line_chart(t, acc, "Acceleration", "time [s]", "acceleration [m/s^2]"),
    }
