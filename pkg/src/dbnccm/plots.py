"""
Self-contained SVG figures built from pipeline reports.

Output is plain text assembled in a fixed order with fixed number
formatting, so identical reports give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os
from xml.sax.saxutils import escape

from .errors import MalformedReport

__all__ = ["connections_svg", "prepost_svg", "convergence_svg", "plot_emit"]

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        ]

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", size=12, rotate=None):
        tr = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" '
                 f'font-size="{size}"{tr}>{escape(str(s))}</text>')

    def axes(self, xlabel: str, ylabel: str, ylo: float, yhi: float, ticks: int = 5):
        x0, y0, y1 = LEFT, H - BOTTOM, TOP
        self.add(f'<line x1="{x0}" y1="{y0}" x2="{W - RIGHT}" y2="{y0}" stroke="black"/>')
        self.add(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
        for i in range(ticks + 1):
            v = ylo + (yhi - ylo) * i / ticks
            y = self.ymap(v, ylo, yhi)
            self.add(f'<line x1="{x0 - 4}" y1="{_f(y)}" x2="{x0}" y2="{_f(y)}" stroke="black"/>')
            self.text(x0 - 8, y + 4, f"{v:.2f}", anchor="end", size=10)
        self.text((x0 + W - RIGHT) / 2, H - 15, xlabel)
        self.text(18, (y0 + y1) / 2, ylabel, rotate=-90)

    @staticmethod
    def ymap(v, lo, hi):
        if hi == lo:
            return H - BOTTOM
        return (H - BOTTOM) - (v - lo) / (hi - lo) * (H - BOTTOM - TOP)

    @staticmethod
    def xmap(v, lo, hi):
        if hi == lo:
            return (LEFT + W - RIGHT) / 2
        return LEFT + (v - lo) / (hi - lo) * (W - RIGHT - LEFT)

    def no_data(self):
        self.text((LEFT + W - RIGHT) / 2, (TOP + H - BOTTOM) / 2, "no data", size=16)

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def connections_svg(bands: dict) -> str:
    """Grouped bars per band: number of learned connections and their total strength."""
    c = _Canvas("Learned DBN connections per band")
    names = sorted(bands)
    counts = [float(bands[b].get("n_connections", 0)) for b in names]
    strengths = [float(bands[b].get("strength", 0.0)) for b in names]
    top = max(counts + strengths + [1.0])
    c.axes("band", "count / strength", 0.0, top)
    if not names:
        c.no_data()
        return c.svg()
    slot = (W - RIGHT - LEFT) / len(names)
    bar = slot / 3
    for i, name in enumerate(names):
        gx = LEFT + i * slot
        for j, (v, col) in enumerate(((counts[i], PALETTE[0]), (strengths[i], PALETTE[1]))):
            y = c.ymap(v, 0.0, top)
            c.add(f'<rect class="bar" x="{_f(gx + bar * (0.5 + j))}" y="{_f(y)}" width="{_f(bar)}" '
                  f'height="{_f(H - BOTTOM - y)}" fill="{col}"/>')
        c.add(f'<g class="group" data-band="{escape(name)}"></g>')
        c.text(gx + slot / 2, H - BOTTOM + 16, name)
    c.add(f'<rect x="{W - 170}" y="34" width="10" height="10" fill="{PALETTE[0]}"/>')
    c.text(W - 155, 43, "connections", anchor="start", size=11)
    c.add(f'<rect x="{W - 170}" y="50" width="10" height="10" fill="{PALETTE[1]}"/>')
    c.text(W - 155, 59, "total |weight|", anchor="start", size=11)
    return c.svg()


def prepost_svg(rows: list) -> str:
    """Scatter of pre- against post-event cross-map skill, one colour per method."""
    c = _Canvas("Pre- and post-event cross-map skill")
    pts = [r for r in rows if r.get("rho_pre") is not None and r.get("rho_post") is not None
           and r.get("method") != "granger"]
    c.axes("rho_pre", "rho_post", -1.0, 1.0)
    for i in range(5):
        v = -1.0 + 0.5 * i
        c.text(c.xmap(v, -1, 1), H - BOTTOM + 16, f"{v:.2f}", size=10)
    c.add(f'<line x1="{_f(c.xmap(-1, -1, 1))}" y1="{_f(c.ymap(-1, -1, 1))}" '
          f'x2="{_f(c.xmap(1, -1, 1))}" y2="{_f(c.ymap(1, -1, 1))}" stroke="#999" '
          'stroke-dasharray="4 3"/>')
    if not pts:
        c.no_data()
        return c.svg()
    methods = sorted({r["method"] for r in pts})
    for r in sorted(pts, key=lambda r: (r["method"], r["band"], r["pair"])):
        col = PALETTE[methods.index(r["method"]) % len(PALETTE)]
        c.add(f'<circle cx="{_f(c.xmap(r["rho_pre"], -1, 1))}" cy="{_f(c.ymap(r["rho_post"], -1, 1))}" '
              f'r="4" fill="{col}" fill-opacity="0.8"><title>{escape(r["pair"])} '
              f'{escape(r["band"])}</title></circle>')
    for i, m in enumerate(methods):
        c.add(f'<rect x="{W - 170}" y="{34 + 16 * i}" width="10" height="10" '
              f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        c.text(W - 155, 43 + 16 * i, m, anchor="start", size=11)
    return c.svg()


def convergence_svg(curves: dict) -> str:
    """Mean cross-map skill against library size, one line per (pair, band)."""
    c = _Canvas("Cross-map convergence")
    keys = sorted(curves)
    sizes = [s for k in keys for s, _, _ in curves[k]]
    c.axes("library size", "rho", -1.0 if any(r < 0 for k in keys for _, r, _ in curves[k])
           else 0.0, 1.0)
    if not keys:
        c.no_data()
        return c.svg()
    lo, hi = min(sizes), max(sizes)
    ylo = -1.0 if any(r < 0 for k in keys for _, r, _ in curves[k]) else 0.0
    for s in sorted(set(sizes)):
        c.text(c.xmap(s, lo, hi), H - BOTTOM + 16, str(s), size=10)
    for i, k in enumerate(keys):
        col = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(c.xmap(s, lo, hi))},{_f(c.ymap(r, ylo, 1.0))}"
                       for s, r, _ in curves[k])
        c.add(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="2"/>')
        c.text(W - RIGHT - 4, TOP + 14 + 14 * i, k, anchor="end", size=10)
    return c.svg()


def _load_report(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedReport(f"cannot read report {path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("rows", []), list):
        raise MalformedReport(f"{path} is not a report document")
    for r in doc.get("rows", []):
        if not isinstance(r, dict) or not {"pair", "band", "method"} <= set(r):
            raise MalformedReport(f"{path}: row without pair/band/method")
    return doc


def _load_curves(path: str) -> dict:
    curves = {}
    if not os.path.exists(path):
        return curves
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            try:
                key = f'{rec["pair"]} {rec["band"]}'
                curves.setdefault(key, []).append(
                    (int(rec["size"]), float(rec["rho_mean"]), float(rec["rho_std"])))
            except (KeyError, ValueError):
                raise MalformedReport(f"{path}: bad convergence row") from None
    return curves


def plot_emit(report_path: str, out_dir: str, convergence_csv: str = None) -> list:
    """Render the three figures for ``report_path`` into ``out_dir``; returns written paths."""
    doc = _load_report(report_path)
    if convergence_csv is None:
        convergence_csv = os.path.join(os.path.dirname(report_path), "convergence.csv")
    os.makedirs(out_dir, exist_ok=True)
    figures = {
        "connections.svg": connections_svg(doc.get("bands", {})),
        "prepost.svg": prepost_svg(doc.get("rows", [])),
        "convergence.svg": convergence_svg(_load_curves(convergence_csv)),
    }
    written = []
    for name, text in figures.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    return written
