"""Text tables, CSV dumps and small SVG charts for z-matrices."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .zmatrix import ZMatrix


@dataclass(frozen=True)
class TableOptions:
    transpose: bool = True
    scale: int = 1000
    suppress_below: float = 1.0
    # False: suppress on the scaled value before rounding
    post_rounding: bool = True
    label_covariate: str | None = "center"

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.suppress_below < 0:
            raise ValueError("suppress_below must be >= 0")


def table_cells(z: ZMatrix, opts: TableOptions = TableOptions()) -> list[list[int | None]]:
    """Scaled, half-even rounded cells with suppressed ones as ``None``."""
    m = z.entries.T if opts.transpose else z.entries
    scaled = m * opts.scale
    rounded = np.rint(scaled).astype(np.int64)
    test = rounded if opts.post_rounding else scaled
    return [[int(r) if t >= opts.suppress_below else None for r, t in zip(rrow, trow)]
            for rrow, trow in zip(rounded, test)]


def _labels(z: ZMatrix, name: str | None) -> tuple[str, list[str]]:
    if name and all(name in u.covariates for u in z.units):
        return name.capitalize(), [f"{u.covariates[name]:g}" for u in z.units]
    return "Unit", list(z.order)


def table_text(z: ZMatrix, opts: TableOptions = TableOptions()) -> str:
    """Fixed-width table; when transposed the diagonal is the largest value down each column."""
    cells = table_cells(z, opts)
    head, labels = _labels(z, opts.label_covariate)
    shown = [["" if c is None else f"{c:,}" for c in row] for row in cells]
    width = max([len(s) for row in shown for s in row] + [len(s) for s in labels]) + 1
    lw = max(len(head), *(len(s) for s in labels))
    lines = [head.ljust(lw) + "".join(s.rjust(width) for s in labels)]
    for lab, row in zip(labels, shown):
        lines.append(lab.ljust(lw) + "".join(s.rjust(width) for s in row))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def matrix_csv(z: ZMatrix) -> str:
    """Full-precision, unsuppressed matrix with unit ids as header and first column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit_id", *z.order])
    for uid, row in zip(z.order, z.entries):
        w.writerow([uid, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def vectors_csv(columns: dict[str, Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(names)
    for row in zip(*(columns[k] for k in names)):
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ------------------------------------------------------------------- SVG

def _f(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


class Svg:
    def __init__(self, width: float, height: float):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill="black", extra=""):
        self.parts.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
                          f'fill="{fill}"{extra}/>')

    def line(self, x1, y1, x2, y2, stroke="black", width=1):
        self.parts.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                          f'stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def polyline(self, pts, stroke="black"):
        p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{p}" fill="none" stroke="{stroke}"/>')

    def text(self, x, y, s, size=10, anchor="middle", cls=None):
        c = f' class="{cls}"' if cls else ""
        self.parts.append(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}"{c}>{escape(str(s))}</text>')

    def open_group(self, dx=0.0, dy=0.0, cls=None):
        c = f' class="{cls}"' if cls else ""
        self.parts.append(f'<g transform="translate({_f(dx)},{_f(dy)})"{c}>')

    def close_group(self):
        self.parts.append("</g>")

    def render(self) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{_f(self.width)}" height="{_f(self.height)}" '
                f'viewBox="0 0 {_f(self.width)} {_f(self.height)}">')
        return "\n".join([head, *self.parts, "</svg>"]) + "\n"


CELL = 16.0


def _symbols(svg: Svg, entries: np.ndarray, x0: float, y0: float, cell: float):
    n = entries.shape[0]
    svg.rect(x0, y0, n * cell, n * cell, fill="none", extra=' stroke="#999"')
    for i in range(n):
        for j in range(n):
            v = float(entries[i, j])
            if v < 1e-9:
                continue
            side = cell * math.sqrt(v)
            off = (cell - side) / 2
            svg.rect(x0 + j * cell + off, y0 + i * cell + off, side, side, extra=' class="cell"')


def symbols_svg(z: ZMatrix, transpose: bool = False, cell: float = CELL) -> str:
    """One square per cell with area proportional to ``z[i, j]``; rows read as histograms."""
    m = z.entries.T if transpose else z.entries
    n = z.n
    margin = 40.0
    svg = Svg(margin + n * cell + 10, margin + n * cell + 10)
    for k, uid in enumerate(z.order):
        svg.text(margin + (k + 0.5) * cell, margin - 6, uid, size=7)
        svg.text(margin - 4, margin + (k + 0.7) * cell, uid, size=7, anchor="end")
    _symbols(svg, m, margin, margin, cell)
    return svg.render()


def _axis_map(lo, hi, a, b):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def cdf_density_svg(density, cdf, estimates, log10_x: bool = True) -> str:
    """Step plot of the running column-sum distribution (top) and spikes of ``z[+, j]`` (bottom)."""
    density = np.asarray(density, dtype=float)
    cdf = np.asarray(cdf, dtype=float)
    est = np.asarray(estimates, dtype=float)
    n = len(est)
    if n < 2:
        raise ValueError("need at least 2 units")
    if density.shape != (n,) or cdf.shape != (n,):
        raise ValueError("density, cdf and estimates must align")
    if log10_x:
        if np.any(est <= 0):
            raise ValueError("log axis needs positive estimates")
        x = np.log10(est)
    else:
        x = est
    colsum = density * n
    W, H, pad = 480.0, 220.0, 40.0
    svg = Svg(W, 2 * H)
    sx = _axis_map(float(x.min()), float(x.max()), pad, W - pad)
    xlab = "log10(estimate)" if log10_x else "estimate"
    for panel, (title, top) in enumerate((("(a) cumulative z-weight", 1.0),
                                          ("(b) column sums", max(1.0, float(colsum.max()))))):
        oy = panel * H
        sy = _axis_map(0.0, top, oy + H - pad, oy + pad / 2)
        svg.line(pad, oy + H - pad, W - pad, oy + H - pad)
        svg.line(pad, oy + H - pad, pad, oy + pad / 2)
        svg.text(W / 2, oy + H - 8, xlab)
        svg.text(pad + 4, oy + pad / 2 - 4, title, anchor="start")
        svg.text(pad - 4, sy(0.0) + 3, "0", anchor="end")
        svg.text(pad - 4, sy(top) + 3, f"{top:.3g}", anchor="end")
        svg.text(sx(float(x.min())), oy + H - pad + 12, f"{x.min():.3g}")
        svg.text(sx(float(x.max())), oy + H - pad + 12, f"{x.max():.3g}")
        if panel == 0:
            pts = [(sx(float(x[0])), sy(0.0))]
            prev = 0.0
            for xi, ci in zip(x, cdf):
                pts += [(sx(float(xi)), sy(prev)), (sx(float(xi)), sy(float(ci)))]
                prev = float(ci)
            pts.append((W - pad, sy(prev)))
            svg.polyline(pts)
        else:
            for xi, ci in zip(x, colsum):
                svg.line(sx(float(xi)), sy(0.0), sx(float(xi)), sy(float(ci)), width=2)
    return svg.render()


def scatter_svg(x, y, labels=None, log10_x: bool = False,
                xlabel: str = "x", ylabel: str = "y") -> str:
    """Points drawn as their label glyphs (e.g. center numbers)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if labels is None:
        labels = ["o"] * len(x)
    if not (len(x) == len(y) == len(labels)):
        raise ValueError("x, y and labels must have the same length")
    if log10_x and np.any(x <= 0):
        raise ValueError("log axis needs positive x")
    xv = np.log10(x) if log10_x else x
    W, H, pad = 400.0, 300.0, 40.0
    svg = Svg(W, H)
    svg.line(pad, H - pad, W - pad, H - pad)
    svg.line(pad, H - pad, pad, pad / 2)
    svg.text(W / 2, H - 8, f"log10({xlabel})" if log10_x else xlabel)
    svg.text(12, H / 2, ylabel, anchor="middle")
    if len(x):
        sx = _axis_map(float(xv.min()), float(xv.max()), pad + 10, W - pad - 10)
        sy = _axis_map(float(y.min()), float(y.max()), H - pad - 10, pad / 2 + 10)
        svg.text(sx(float(xv.min())), H - pad + 12, f"{xv.min():.3g}")
        svg.text(sx(float(xv.max())), H - pad + 12, f"{xv.max():.3g}")
        svg.text(pad - 4, sy(float(y.min())) + 3, f"{y.min():.3g}", anchor="end")
        svg.text(pad - 4, sy(float(y.max())) + 3, f"{y.max():.3g}", anchor="end")
        for xi, yi, lab in zip(xv, y, labels):
            svg.text(sx(float(xi)), sy(float(yi)) + 3, lab, size=11, cls="point")
    return svg.render()


def lineup_svg(panels: Sequence[np.ndarray], rows: int, cols: int, cell: float = 10.0) -> str:
    """Grid of symbol plots; panels are given in row-major grid order."""
    n = panels[0].shape[0]
    size = n * cell
    gap = 20.0
    svg = Svg(cols * (size + gap) + gap, rows * (size + gap) + gap)
    for k, m in enumerate(panels):
        r, c = divmod(k, cols)
        svg.open_group(gap + c * (size + gap), gap + r * (size + gap), cls="panel")
        _symbols(svg, m, 0.0, 0.0, cell)
        svg.close_group()
    return svg.render()
