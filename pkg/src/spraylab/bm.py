"""Generalised Minkowski averages, Brunn-Minkowski checks, and the thin-strip violation finder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .jacobi import JacobiTrace, jacobi_trace
from .ode import integrate_batch
import shapely

from .sets import Annulus, Disc, PointCloud, Polygon, Region, Shape, lattice, measure_area, sample_region
from .spray import ShootingError, SprayField, _inside, _to_state, log_map_batch, spray_rhs
from .surface import ConformalChart, ScalarField

TOL_REL = 0.02


class NonSimpleError(ShootingError):
    """Too many shooting failures: the spray is probably not simple on these sets."""


def _cloud(obj, spacing):
    if isinstance(obj, PointCloud):
        return obj
    if isinstance(obj, Region):
        return sample_region(obj, spacing)
    pts = np.atleast_2d(np.asarray(obj, float))
    return PointCloud(pts, "points")


def minkowski_averages(chart: ConformalChart, spray: SprayField, A, B, lams, spacing: Optional[float] = None,
                       *, tol: float = 1e-8, ode_tol: float = 1e-8, budget: int = 50,
                       max_failure_rate: float = 0.01, chunk: int = 20000) -> list:
    """Minkowski averages for several lambdas from one set of connecting geodesics."""
    lams = [float(l) for l in np.atleast_1d(lams)]
    if any(not 0.0 <= l <= 1.0 for l in lams):
        raise ValueError("lambda must lie in [0, 1]")
    ca, cb = _cloud(A, spacing), _cloud(B, spacing)
    Pa, Pb = ca.points, cb.points
    na, nb = len(Pa), len(Pb)
    total = na * nb
    inner = [l for l in lams if 0.0 < l < 1.0]
    out = np.empty((len(inner), total, 2))
    ok = np.ones(total, bool)
    if inner:
        for start in range(0, total, chunk):
            idx = np.arange(start, min(total, start + chunk))
            res = log_map_batch(chart, spray, Pa[idx // nb], Pb[idx % nb], budget=budget, tol=tol,
                                ode_tol=ode_tol, s_eval=inner)
            out[:, idx] = res.at[:, :, :2]
            ok[idx] = res.converged & np.all(np.isfinite(res.at[:, :, :2]), axis=(0, 2))
    n_failed = int(total - ok.sum())
    if n_failed > max_failure_rate * total:
        raise NonSimpleError(f"{n_failed} of {total} shootings failed ({n_failed / total:.1%}); "
                             "the spray is likely not simple on these sets or geodesics leave the domain")
    clouds = []
    for l in lams:
        if l == 0.0:
            pts, nf = Pa, 0
        elif l == 1.0:
            pts, nf = Pb, 0
        else:
            pts, nf = out[inner.index(l)][ok], n_failed
        clouds.append(PointCloud(pts, "minkowski", nf, {"lambda": l, "pairs": total}))
    return clouds


def minkowski_average(chart: ConformalChart, spray: SprayField, A, B, lam: float, spacing: Optional[float] = None,
                      **kw) -> PointCloud:
    """Lambda-points of the spray geodesics joining every sample of A to every sample of B.

    A and B are regions (sampled at ``spacing``), point clouds, or point arrays.
    At most 1% of the shootings may fail; beyond that NonSimpleError is raised.
    """
    return minkowski_averages(chart, spray, A, B, [lam], spacing, **kw)[0]


def _simply_connected(region: Region):
    if isinstance(region, Annulus) or (isinstance(region, Shape) and region.geom.geom_type != "Polygon"):
        raise ValueError("polygon mode needs simply connected regions")


def _ring(region: Region, n: int) -> np.ndarray:
    _simply_connected(region)
    b = region.bbox
    per = 2 * ((b[1] - b[0]) + (b[3] - b[2]))
    return region.boundary(per / n)


def _fill(region: Region, n_ring: int, spacing: float) -> np.ndarray:
    """Boundary at ring density plus an interior lattice at ``spacing``."""
    G = lattice(region.bbox, spacing)
    G = G[region.contains(G[:, 0], G[:, 1])]
    return np.concatenate([_ring(region, n_ring), G])


def _inradius(region: Region) -> float:
    if isinstance(region, Disc):
        return region.radius
    geom = region.geom if isinstance(region, Shape) else region._shape
    return float(shapely.maximum_inscribed_circle(geom, tolerance=1e-3 * region.diameter).length)


def minkowski_shape(chart: ConformalChart, spray: SprayField, A: Region, B: Region, lam: float,
                    n_ring: int = 64, *, tol: float = 1e-8, ode_tol: float = 1e-8, budget: int = 50,
                    max_failure_rate: float = 0.01) -> tuple:
    """Minkowski average of two simply connected regions as a union of polygons.

    For a simple spray the lambda-point of the geodesic from a to b depends
    diffeomorphically on a for fixed b (and on b for fixed a), so the image
    of A is the polygon traced by the image of its boundary. M is the union
    of these images over samples of the other set, whose interior lattice
    spacing is half the image inradius so that the union has no holes; the
    family with the larger images is used. Returns (Shape, pairs, failures).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("polygon mode needs 0 < lambda < 1")
    _simply_connected(A)
    _simply_connected(B)
    rA, rB = _inradius(A), _inradius(B)
    ring_is_A = (1 - lam) * rA >= lam * rB
    image = max((1 - lam) * rA, lam * rB)
    ring = _ring(A if ring_is_A else B, n_ring)
    other = _fill(B if ring_is_A else A, n_ring, 0.5 * image)
    m, k = len(ring), len(other)
    R = np.tile(ring, (k, 1))
    O = np.repeat(other, m, axis=0)
    X, Y = (R, O) if ring_is_A else (O, R)
    res = log_map_batch(chart, spray, X, Y, budget=budget, tol=tol, ode_tol=ode_tol, s_eval=[lam])
    P = res.at[0, :, :2].reshape(k, m, 2)
    good = res.converged.reshape(k, m).all(axis=1) & np.isfinite(P).all(axis=(1, 2))
    n_failed = int((~res.converged).sum())
    if n_failed > max_failure_rate * len(X):
        raise NonSimpleError(f"{n_failed} of {len(X)} shootings failed; the spray is likely not simple here")
    polys = shapely.make_valid(shapely.polygons(P[good]))
    return Shape(shapely.union_all(polys)), len(X), n_failed


@dataclass
class BmReport:
    lam: float
    N: float
    mu_A: float
    mu_B: float
    mu_M: float
    lhs: float
    rhs: float
    margin: float
    spacing: float
    cell: float
    n_pairs: int
    n_failed: int
    tol_rel: float = TOL_REL
    area_mode: str = "cloud"

    @property
    def relative_margin(self) -> float:
        return self.margin / self.rhs if self.rhs > 0 else 0.0

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tol_rel * self.rhs

    @property
    def verdict(self) -> str:
        return "holds" if self.holds else "violated"

    CSV_FIELDS = ("lambda", "N", "mu_A", "mu_B", "mu_M", "lhs", "rhs", "margin", "relative_margin",
                  "spacing", "cell", "pairs", "failed", "tol_rel", "verdict")

    def csv_row(self):
        return (self.lam, self.N, self.mu_A, self.mu_B, self.mu_M, self.lhs, self.rhs, self.margin,
                self.relative_margin, self.spacing, self.cell, self.n_pairs, self.n_failed, self.tol_rel, self.verdict)

    def text(self) -> str:
        return (
            f"lambda: {self.lam:g}\nexponent: 1/{self.N:g}\n"
            f"mu(A): {self.mu_A:.12g}\nmu(B): {self.mu_B:.12g}\nmu(M): {self.mu_M:.12g}\n"
            f"lhs: {self.lhs:.12g}\nrhs: {self.rhs:.12g}\nmargin: {self.margin:.12g} "
            f"({self.relative_margin:+.3%} of rhs)\n"
            f"spacing: {self.spacing:g}\ncell: {self.cell:g}\narea mode: {self.area_mode}\n"
            f"pairs: {self.n_pairs} (failed {self.n_failed})\n"
            f"tolerance: margin >= -{self.tol_rel:g} * rhs\nverdict: {self.verdict}\n"
        )


def default_cell(A, B) -> float:
    """A twelfth of the smaller set diameter."""
    def diam(o):
        if isinstance(o, Region):
            return o.diameter
        P = o.points if isinstance(o, PointCloud) else np.atleast_2d(o)
        return float(np.hypot(*(P.max(0) - P.min(0))))
    d = [v for v in (diam(A), diam(B)) if v > 0]
    return min(d) / 12 if d else 1e-2


def verify_bm(chart: ConformalChart, spray: SprayField, A, B, lam: float, N: float = 2.0,
              spacing: Optional[float] = None, cell: Optional[float] = None, phi: Optional[ScalarField] = None,
              tol_rel: float = TOL_REL, area_mode: str = "cloud", **kw) -> BmReport:
    """mu(M)^{1/N} >= (1 - lam) mu(A)^{1/N} + lam mu(B)^{1/N}, measured by rasterisation.

    ``area_mode='cloud'``: A and B are sampled at ``spacing``, every pair is
    shot, and all three areas are cell covers of the point clouds.
    ``area_mode='polygon'``: M is the polygon union built by minkowski_shape
    and all three areas count cells by their centers (regions only).
    """
    return verify_bm_many(chart, spray, A, B, [lam], N, spacing, cell, phi, tol_rel, area_mode, **kw)[0]


def verify_bm_many(chart: ConformalChart, spray: SprayField, A, B, lams, N: float = 2.0,
                   spacing: Optional[float] = None, cell: Optional[float] = None, phi: Optional[ScalarField] = None,
                   tol_rel: float = TOL_REL, area_mode: str = "cloud", n_ring: int = 64, **kw) -> list:
    """verify_bm for several lambdas (the cloud mode shares the connecting geodesics)."""
    if N <= 0:
        raise ValueError("N must be positive")
    if area_mode == "polygon":
        if not (isinstance(A, Region) and isinstance(B, Region)):
            raise ValueError("polygon mode needs regions")
        cell = default_cell(A, B) / 8 if cell is None else float(cell)
        mu_A = measure_area(chart, A, cell, phi)
        mu_B = measure_area(chart, B, cell, phi)
        out = []
        for lam in np.atleast_1d(lams):
            lam = float(lam)
            if lam in (0.0, 1.0):
                mu_M, pairs, nf = (mu_A if lam == 0.0 else mu_B), 0, 0
            else:
                M, pairs, nf = minkowski_shape(chart, spray, A, B, lam, n_ring, **kw)
                mu_M = measure_area(chart, M, cell, phi)
            out.append(_report(lam, N, mu_A, mu_B, mu_M, float("nan"), cell, pairs, nf, tol_rel, area_mode))
        return out
    if area_mode != "cloud":
        raise ValueError("area_mode must be 'cloud' or 'polygon'")
    cell = default_cell(A, B) if cell is None else float(cell)
    spacing = cell / 2 if spacing is None else float(spacing)
    if spacing > cell / 2 * (1 + 1e-12):
        raise ValueError("coupling rule violated: spacing must be at most cell/2")
    ca, cb = _cloud(A, spacing), _cloud(B, spacing)
    Ms = minkowski_averages(chart, spray, ca, cb, lams, spacing, **kw)
    mu_A = measure_area(chart, ca, cell, phi)
    mu_B = measure_area(chart, cb, cell, phi)
    return [_report(M.meta["lambda"], N, mu_A, mu_B, measure_area(chart, M, cell, phi), spacing, cell,
                    M.meta["pairs"], M.n_failed, tol_rel, area_mode) for M in Ms]


def _report(lam, N, mu_A, mu_B, mu_M, spacing, cell, pairs, n_failed, tol_rel, mode) -> BmReport:
    lhs = mu_M ** (1.0 / N)
    rhs = (1 - lam) * mu_A ** (1.0 / N) + lam * mu_B ** (1.0 / N)
    return BmReport(lam, N, mu_A, mu_B, mu_M, lhs, rhs, lhs - rhs, spacing, cell, pairs, n_failed, tol_rel, mode)


# ------------------------------------------------------------ converse

@dataclass
class Violation:
    status: str                      # found | none | inconclusive
    A: Optional[Polygon] = None
    B: Optional[Polygon] = None
    lam: float = 0.5
    report: Optional[BmReport] = None
    predicted: Optional[float] = None  # relative margin predicted by the Jacobi trace
    window: Optional[tuple] = None     # (x0, l0, x1, l1, delta)
    offset: Optional[tuple] = None
    levels: list = field(default_factory=list)
    max_second_difference: float = 0.0

    def text(self) -> str:
        lines = [f"status: {self.status}", f"max second difference of J: {self.max_second_difference:.6g}"]
        if self.offset is not None:
            lines.append(f"variation offset (dx, dy, dtheta): {tuple(round(v, 12) for v in self.offset)}")
        if self.window is not None:
            x0, l0, x1, l1, d = self.window
            lines.append(f"strips: x0={x0:.6g} l0={l0:.6g}  x1={x1:.6g} l1={l1:.6g}  delta={d:.6g}")
        if self.predicted is not None:
            lines.append(f"predicted relative margin (Jacobi trace): {self.predicted:+.3%}")
        for lev, dl, m in self.levels:
            lines.append(f"level {lev}: delta={dl:.6g} relative margin={m:+.3%}")
        if self.report is not None:
            lines.append(self.report.text())
        return "\n".join(lines) + "\n"


def _strip_measure(Jf, a, ell):
    t = np.linspace(a, a + ell, 65)
    return np.trapezoid(Jf(t), t)


def _strip_geometry(trace: JacobiTrace, chart: ConformalChart):
    """Chart width per unit delta and chart length per unit arclength along the trace."""
    x, y, a = trace.states.T
    width = np.abs(np.cos(a) * trace.S[:, 1] - np.sin(a) * trace.S[:, 0])
    return width, 1.0 / chart.conformal_factor(x, y)


def _plan(W, C, samples_across):
    """delta, cell and estimated pair count for strips with widths delta*W and chart lengths C."""
    W, C = np.asarray(W), np.asarray(C)
    delta = 0.5 * np.min(C / W)
    cell = delta * np.min(W) / samples_across
    h = cell / 2
    n = delta * W * C / h**2 + 2 * (C + delta * W) / h
    return delta, cell, float(np.prod(n))


def _best_window(trace: JacobiTrace, chart: ConformalChart, lam: float, T: float, samples_across: float,
                 pair_budget: float, frac: float = 0.2):
    """Window maximising the Jacobi-predicted violation among affordable ones.

    Strips start at x0 and x1 with arclength proportional to J there, the
    longer one being frac*(x1 - x0). A window is affordable when the
    estimated number of sample pairs stays within ``pair_budget``.
    """
    t, J = trace.t, trace.J
    Wt, Et = _strip_geometry(trace, chart)
    Jf = lambda s: np.interp(s, t, J)
    best = (0.0, None, None)
    for x0 in np.linspace(0.0, T, 41)[:-1]:
        for x1 in np.linspace(x0, T, 41)[1:]:
            w = x1 - x0
            J0, J1 = Jf(x0), Jf(x1)
            if min(J0, J1) <= 0:
                continue
            Jm = max(J0, J1)
            l0, l1 = frac * w * J0 / Jm, frac * w * J1 / Jm
            if x1 + l1 > T:
                continue
            span = (t >= x0) & (t <= x1 + l1)
            if np.any(J[span] <= 0):
                continue
            xl = (1 - lam) * x0 + lam * x1
            lm = (1 - lam) * l0 + lam * l1
            mA, mB, mM = _strip_measure(Jf, x0, l0), _strip_measure(Jf, x1, l1), _strip_measure(Jf, xl, lm)
            rhs = (1 - lam) * np.sqrt(mA) + lam * np.sqrt(mB)
            rel = (np.sqrt(mM) - rhs) / rhs
            if rel >= best[0]:
                continue
            W = np.interp([x0, x1], t, Wt)
            C = np.array([l0, l1]) * np.interp([x0, x1], t, Et)
            delta, cell, pairs = _plan(W, C, samples_across)
            if pairs <= pair_budget:
                best = (rel, (x0, l0, x1, l1), (delta, cell, pairs))
    return best


def _variation_points(chart, spray, seed, off, s_vals, t_vals):
    """F(s, t) for the variation start + s*off: array (len(t_vals), len(s_vals), 2)."""
    base = np.array([seed.start[0], seed.start[1], seed.theta0])
    Y = base + np.asarray(s_vals)[:, None] * np.asarray(off)[None, :]
    res = integrate_batch(spray_rhs(chart, spray), _to_state(Y[:, :2], Y[:, 2]), seed.T, rtol=1e-11, atol=1e-11,
                          s_eval=np.asarray(t_vals) / seed.T, inside=_inside(chart), err_cols=2)
    if res.exited.any():
        raise ShootingError("strip geodesic left the chart domain")
    return res.at[:, :, :2]


def _strip(chart, spray, seed, off, delta, a, ell, n_s=24, n_t=48):
    s = np.linspace(0.0, delta, n_s + 1)
    t = np.linspace(a, a + ell, n_t + 1)
    F = _variation_points(chart, spray, seed, off, s, t)
    ring = np.concatenate([F[:, 0], F[-1, 1:], F[-2::-1, -1], F[0, -2:0:-1]])
    return Polygon(ring)


def find_violation(chart: ConformalChart, spray: SprayField, seed, phi: Optional[ScalarField] = None,
                   budget: int = 6, lam: float = 0.5, target: float = 0.05, samples_across: float = 3.0,
                   n: int = 401, offsets=None, pair_budget: float = 150000, **bm_kw) -> Violation:
    """Search for a Brunn-Minkowski violation from thin strips along ``seed``.

    Jacobi traces of a few transversal variations are scanned for positive
    second differences; for the most convex one, strips of lengths
    proportional to J(x_j) are placed on either side of the convex window
    and verify_bm is run with geometrically shrinking width (``budget``
    halvings). The cell is a fixed fraction of the strip width, so the
    sampling cost per level stays near ``pair_budget`` pairs.

    Status is ``none`` when every trace is concave (no certificate can come
    from this seed) and ``inconclusive`` when convexity exists but no level
    reached a relative margin below ``-target``.
    """
    th = seed.theta0
    nrm = (-np.sin(th), np.cos(th))
    if offsets is None:
        offsets = [(nrm[0], nrm[1], 0.0), (0.0, 0.0, 1.0), (0.5 * nrm[0], 0.5 * nrm[1], 1.0 / max(seed.T, 1e-9))]
    best = None
    max_d2 = -np.inf
    convex = False
    for off in offsets:
        try:
            tr = jacobi_trace(chart, spray, seed.start, th, seed.T, offset=off, n=n, phi=phi)
        except ValueError:
            continue
        d2 = tr.second_difference()
        max_d2 = max(max_d2, float(d2.max()))
        if d2.max() <= 1e-6 * np.abs(tr.J).max():
            continue
        convex = True
        rel, win, plan = _best_window(tr, chart, lam, seed.T, samples_across, pair_budget)
        if win is not None and (best is None or rel < best[0]):
            best = (rel, win, plan, off)
    if best is None:
        return Violation("inconclusive" if convex else "none", lam=lam,
                         max_second_difference=max_d2 if np.isfinite(max_d2) else 0.0)
    rel, (x0, l0, x1, l1), (delta0, cell0, _), off = best
    viol = Violation("inconclusive", lam=lam, predicted=rel, offset=tuple(float(v) for v in off),
                     max_second_difference=max_d2)
    for level in range(budget):
        f = 0.5**level
        delta, cell = delta0 * f, cell0 * f
        A = _strip(chart, spray, seed, off, delta, x0, l0 * f)
        B = _strip(chart, spray, seed, off, delta, x1, l1 * f)
        rep = verify_bm(chart, spray, A, B, lam, 2.0, cell / 2, cell, phi, **bm_kw)
        viol.levels.append((level, delta, rep.relative_margin))
        viol.A, viol.B, viol.report, viol.window = A, B, rep, (x0, l0 * f, x1, l1 * f, delta)
        if rep.margin < -target * rep.rhs:
            viol.status = "found"
            break
    return viol
