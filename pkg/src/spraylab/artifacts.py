"""CSV and SVG writers for CLI artifacts (chart coordinates only)."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


class Svg:
    """Minimal SVG canvas over a chart bounding box (y axis pointing up)."""

    def __init__(self, bbox, width: int = 640, pad: float = 0.05):
        x0, x1, y0, y1 = bbox
        dx, dy = (x1 - x0) or 1.0, (y1 - y0) or 1.0
        self.x0, self.x1 = x0 - pad * dx, x1 + pad * dx
        self.y0, self.y1 = y0 - pad * dy, y1 + pad * dy
        self.w = width
        self.h = max(1, int(round(width * (self.y1 - self.y0) / (self.x1 - self.x0))))
        self.items = []

    def _xy(self, P):
        P = np.atleast_2d(P)
        u = (P[:, 0] - self.x0) / (self.x1 - self.x0) * self.w
        v = (self.y1 - P[:, 1]) / (self.y1 - self.y0) * self.h
        return u, v

    def polyline(self, P, stroke="black", width=1.0, closed=False, fill="none", opacity=1.0):
        u, v = self._xy(P)
        pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(u, v))
        tag = "polygon" if closed else "polyline"
        self.items.append(f'<{tag} points="{pts}" fill="{fill}" fill-opacity="{opacity:g}" '
                          f'stroke="{stroke}" stroke-width="{width:g}"/>')

    def points(self, P, r=1.0, fill="black", opacity=0.6):
        u, v = self._xy(P)
        self.items.extend(f'<circle cx="{a:.3f}" cy="{b:.3f}" r="{r:g}" fill="{fill}" fill-opacity="{opacity:g}"/>'
                          for a, b in zip(u, v))

    def cells(self, P, values, size):
        """Colored squares of chart side ``size`` centred at P: blue negative, red positive."""
        values = np.asarray(values, float)
        scale = float(np.max(np.abs(values))) or 1.0
        u, v = self._xy(P)
        s = size / (self.x1 - self.x0) * self.w
        for a, b, val in zip(u, v, values):
            t = min(1.0, abs(val) / scale)
            c = int(round(255 * (1 - t)))
            color = f"rgb(255,{c},{c})" if val >= 0 else f"rgb({c},{c},255)"
            self.items.append(f'<rect x="{a - s / 2:.3f}" y="{b - s / 2:.3f}" width="{s:.3f}" height="{s:.3f}" '
                              f'fill="{color}" stroke="none"/>')

    def text(self, P, label, size=12):
        u, v = self._xy(P)
        self.items.append(f'<text x="{u[0]:.3f}" y="{v[0]:.3f}" font-size="{size}" font-family="sans-serif">'
                          f'{label}</text>')

    def save(self, path):
        path = Path(path)
        body = "\n".join(self.items)
        path.write_text(f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                        f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n'
                        f'{body}\n</svg>\n')
        return path


def outline(region, m: int = 256):
    """Closed boundary polylines of a region (list of arrays)."""
    from .sets import Annulus, Disc, Polygon, Shape

    if isinstance(region, Disc):
        return [region.outline(m)]
    if isinstance(region, Annulus):
        return [Disc(region.center, region.r_out).outline(m), Disc(region.center, region.r_in).outline(m)]
    if isinstance(region, Polygon):
        return [np.asarray(region.vertices)]
    if isinstance(region, Shape):
        polys = getattr(region.geom, "geoms", [region.geom])
        return [np.asarray(p.exterior.coords) for p in polys if p.geom_type == "Polygon"]
    return []
