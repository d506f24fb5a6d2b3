"""Planar regions, deterministic sampling, and weighted area by rasterisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShPolygon

from .surface import ConformalChart, ScalarField


class Region:
    """Closed planar set in chart coordinates."""

    def contains(self, x, y):  # closed containment
        raise NotImplementedError

    @property
    def bbox(self):
        raise NotImplementedError

    def boundary(self, spacing: float) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        b = self.bbox
        return float(np.hypot(b[1] - b[0], b[3] - b[2]))

    def check_in(self, chart: ConformalChart, n: int = 256):
        """Reject regions whose closure leaves the (strict) chart domain."""
        pts = self.boundary(self.diameter / n)
        if not np.all(chart.contains(pts[:, 0], pts[:, 1])):
            raise ValueError(f"region {self!r} is not inside the domain of chart {chart.name!r}")
        return self


@dataclass(frozen=True)
class Disc(Region):
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, x, y):
        cx, cy = self.center
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 <= self.radius**2 * (1 + 1e-12)

    @property
    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def boundary(self, spacing):
        m = max(8, int(np.ceil(2 * np.pi * self.radius / spacing)))
        a = 2 * np.pi * np.arange(m) / m
        return np.column_stack([self.center[0] + self.radius * np.cos(a), self.center[1] + self.radius * np.sin(a)])

    def outline(self, m: int = 128):
        return self.boundary(2 * np.pi * self.radius / m)


@dataclass(frozen=True)
class Annulus(Region):
    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise ValueError("annulus needs 0 < r_in < r_out")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, x, y):
        d2 = (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2
        return (d2 <= self.r_out**2 * (1 + 1e-12)) & (d2 >= self.r_in**2 * (1 - 1e-12))

    @property
    def bbox(self):
        cx, cy = self.center
        r = self.r_out
        return (cx - r, cx + r, cy - r, cy + r)

    def boundary(self, spacing):
        return np.concatenate([Disc(self.center, self.r_out).boundary(spacing),
                               Disc(self.center, self.r_in).boundary(spacing)])


@dataclass(frozen=True)
class Polygon(Region):
    vertices: tuple
    _shape: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = tuple((float(p[0]), float(p[1])) for p in self.vertices)
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        shape = _ShPolygon(v)
        if not shape.is_valid or not shape.exterior.is_simple or shape.area <= 0:
            raise ValueError("polygon must be simple with positive area")
        shapely.prepare(shape)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_shape", shape)

    def contains(self, x, y):
        return shapely.intersects_xy(self._shape, np.asarray(x, float), np.asarray(y, float))

    @property
    def bbox(self):
        x0, y0, x1, y1 = self._shape.bounds
        return (x0, x1, y0, y1)

    def boundary(self, spacing):
        V = np.asarray(self.vertices)
        out = []
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            m = max(1, int(np.ceil(np.hypot(*(b - a)) / spacing)))
            u = np.arange(m)[:, None] / m
            out.append(a + u * (b - a))
        return np.concatenate(out)

    @property
    def area(self) -> float:
        return float(self._shape.area)


class Shape(Region):
    """Region backed by an arbitrary shapely geometry (e.g. a union of polygons)."""

    def __init__(self, geom):
        if geom.is_empty or geom.area <= 0:
            raise ValueError("shape must have positive area")
        shapely.prepare(geom)
        self.geom = geom

    def __repr__(self):
        return f"Shape(area={self.geom.area:.6g})"

    def contains(self, x, y):
        return shapely.intersects_xy(self.geom, np.asarray(x, float), np.asarray(y, float))

    @property
    def bbox(self):
        x0, y0, x1, y1 = self.geom.bounds
        return (x0, x1, y0, y1)

    def boundary(self, spacing):
        line = self.geom.boundary
        n = max(8, int(np.ceil(line.length / spacing)))
        pts = shapely.line_interpolate_point(line, np.linspace(0, 1, n, endpoint=False), normalized=True)
        return shapely.get_coordinates(pts)

    @property
    def area(self) -> float:
        return float(self.geom.area)


def region_from_spec(spec) -> Region:
    """{disc: [cx, cy, r]} | {polygon: [[x, y], ...]} | {annulus: [cx, cy, r_in, r_out]}."""
    if isinstance(spec, Region):
        return spec
    if "disc" in spec:
        cx, cy, r = spec["disc"]
        return Disc((cx, cy), r)
    if "polygon" in spec:
        return Polygon(spec["polygon"])
    if "annulus" in spec:
        cx, cy, a, b = spec["annulus"]
        return Annulus((cx, cy), a, b)
    raise ValueError(f"unknown region spec {spec!r}")


@dataclass
class PointCloud:
    points: np.ndarray
    provenance: str = "sampled region"
    n_failed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)


def lattice(bbox, spacing):
    """Origin-anchored lattice spacing * Z^2 within a closed box."""
    x0, x1, y0, y1 = bbox
    i = np.arange(np.ceil(x0 / spacing - 1e-9), np.floor(x1 / spacing + 1e-9) + 1)
    j = np.arange(np.ceil(y0 / spacing - 1e-9), np.floor(y1 / spacing + 1e-9) + 1)
    X, Y = np.meshgrid(i * spacing, j * spacing)
    return np.column_stack([X.ravel(), Y.ravel()])


def sample_region(region: Region, spacing: float) -> PointCloud:
    """Lattice points of the region plus boundary points at the same spacing."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    G = lattice(region.bbox, spacing)
    G = G[region.contains(G[:, 0], G[:, 1])]
    B = region.boundary(spacing)
    pts = np.concatenate([G, B])
    if len(pts) == 0:
        raise ValueError("region sampling is empty")
    return PointCloud(pts, "sampled region", meta={"n_grid": len(G), "n_boundary": len(B), "spacing": spacing})


# raster origin as a fraction of the cell; keeps lattice samples (multiples of
# cell/2) and lattice-aligned boundaries off cell edges, so shooting round-off
# cannot flip a point into a neighbouring cell
GRID_OFFSET = 0.3090169943749474


def _weights(chart, centers, fallback, phi):
    """Area density at cell centers, or at a member point when the center is off-domain."""
    ok = chart.contains(centers[:, 0], centers[:, 1])
    where = np.where(ok[:, None], centers, fallback)
    with np.errstate(all="ignore"):
        return chart.area_density(where[:, 0], where[:, 1], phi)


def measure_area(chart: ConformalChart, obj, cell: float, phi: Optional[ScalarField] = None) -> float:
    """Weighted area sum over counted cells of e^{2 psi - phi}(c) * cell^2.

    Cells are the squares cell * ([i, i+1) x [j, j+1)) shifted by
    GRID_OFFSET * cell in both axes. A region counts a
    cell whose center it contains; a point cloud counts every cell holding
    at least one point.
    """
    if not cell > 0:
        raise ValueError("cell must be positive")
    if isinstance(obj, Region):
        x0, x1, y0, y1 = obj.bbox
        o = GRID_OFFSET
        i = np.arange(np.floor(x0 / cell - o), np.ceil(x1 / cell - o) + 1) + o
        j = np.arange(np.floor(y0 / cell - o), np.ceil(y1 / cell - o) + 1) + o
        total = 0.0
        # row blocks keep memory bounded for fine cells
        for rows in np.array_split(j, max(1, len(j) * len(i) // 2_000_000 + 1)):
            X, Y = np.meshgrid((i + 0.5) * cell, (rows + 0.5) * cell)
            X, Y = X.ravel(), Y.ravel()
            m = obj.contains(X, Y) & chart.contains(X, Y)
            with np.errstate(all="ignore"):
                total += float(np.sum(chart.area_density(X[m], Y[m], phi)))
        return total * cell * cell
    P = obj.points if isinstance(obj, PointCloud) else np.asarray(obj, float)
    if len(P) == 0:
        return 0.0
    idx = np.floor(P / cell - GRID_OFFSET).astype(np.int64)
    uniq, first = np.unique(idx, axis=0, return_index=True)
    centers = (uniq + 0.5 + GRID_OFFSET) * cell
    w = _weights(chart, centers, P[first], phi)
    return float(np.sum(w)) * cell * cell
