"""The curvature scalar Q on the unit tangent bundle and the nonnegativity conditions.

With h = 0 the scalar is

    Q = K + k^2 + Gamma(dphi) - (dphi)^2 - E2 k,

where E1 differentiates along the Riemannian geodesic flow, V = d/dtheta and
E2 = [V, E1]. All tangent-bundle derivatives are central differences with
step 1e-4 in flow time and in angle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sets import Annulus, Disc, Region
from .spray import SprayField
from .surface import ConformalChart, ScalarField

FD_STEP = 1e-4
NNC_TOL = 1e-6
MAGNETIC_TOL = 1e-8


# --------------------------------------------------------------- grids

@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid: ``box`` (n cells per side, n+1 nodes) or ``polar``."""

    kind: str
    params: tuple
    region: Optional[Region] = None

    @classmethod
    def box(cls, xmin, xmax, ymin, ymax, n=64, region=None):
        return cls("box", (float(xmin), float(xmax), float(ymin), float(ymax), int(n)), region)

    @classmethod
    def polar(cls, center, r_in, r_out, n_r, n_phi=64, region=None):
        return cls("polar", (float(center[0]), float(center[1]), float(r_in), float(r_out), int(n_r), int(n_phi)), region)

    @classmethod
    def for_region(cls, region: Region, n: int = 64):
        if isinstance(region, Annulus):
            return cls.polar(region.center, region.r_in, region.r_out, n + 1, n, region)
        b = region.bbox
        return cls.box(*b, n=n, region=region)

    def points(self, chart: Optional[ConformalChart] = None) -> np.ndarray:
        if self.kind == "box":
            x0, x1, y0, y1, n = self.params
            X, Y = np.meshgrid(np.linspace(x0, x1, n + 1), np.linspace(y0, y1, n + 1))
        else:
            cx, cy, a, b, nr, nphi = self.params
            R, A = np.meshgrid(np.linspace(a, b, nr), 2 * np.pi * np.arange(nphi) / nphi)
            X, Y = cx + R * np.cos(A), cy + R * np.sin(A)
        P = np.column_stack([X.ravel(), Y.ravel()])
        if self.region is not None:
            P = P[self.region.contains(P[:, 0], P[:, 1])]
        if chart is not None:
            P = P[chart.contains(P[:, 0], P[:, 1])]
        if len(P) == 0:
            raise ValueError("grid has no points inside the domain")
        return P


# ------------------------------------------------------- pointwise terms

def _unit(chart, x, y, th):
    e = 1.0 / chart.conformal_factor(x, y)
    return e * np.cos(th), e * np.sin(th)


def _flow_step(chart, spray, x, y, th, h):
    """One RK4 step of the unit-speed flow (spray=None: Riemannian geodesics)."""
    psi = chart.psi

    def f(x, y, th):
        e = 1.0 / chart.conformal_factor(x, y)
        px, py = psi.grad(x, y)
        c, s = np.cos(th), np.sin(th)
        k = 0.0 if spray is None else spray.curvature(x, y, th)
        return e * c, e * s, k + e * (c * py - s * px)

    a = f(x, y, th)
    b = f(x + h / 2 * a[0], y + h / 2 * a[1], th + h / 2 * a[2])
    c = f(x + h / 2 * b[0], y + h / 2 * b[1], th + h / 2 * b[2])
    d = f(x + h * c[0], y + h * c[1], th + h * c[2])
    return tuple(u + h / 6 * (p + 2 * q + 2 * r + s) for u, p, q, r, s in zip((x, y, th), a, b, c, d))


def _along(chart, spray, u, x, y, th, h=FD_STEP):
    """Central difference of u(x, y, theta) along a flow."""
    fwd = _flow_step(chart, spray, x, y, th, h)
    bwd = _flow_step(chart, spray, x, y, th, -h)
    return (u(*fwd) - u(*bwd)) / (2 * h)


def dphi_v(chart, phi, x, y, th):
    """dphi(v) for the unit vector v with angle theta."""
    if phi.is_zero:
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(th)))
    px, py = phi.grad(x, y)
    u, w = _unit(chart, x, y, th)
    return px * u + py * w


def vertical_k(spray, x, y, th, d=FD_STEP):
    """Vk = dk/dtheta."""
    if spray.is_magnetic:
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(th)))
    return (spray.curvature(x, y, th + d) - spray.curvature(x, y, th - d)) / (2 * d)


def e2_k(chart, spray, x, y, th, h=FD_STEP):
    """E2 k = V(E1 k) - E1(V k) by nested central differences."""
    def e1k(x, y, th):
        return _along(chart, None, spray.curvature, x, y, th, h)

    first = (e1k(x, y, th + h) - e1k(x, y, th - h)) / (2 * h)
    if spray.is_magnetic:
        return first
    second = _along(chart, None, lambda a, b, c: vertical_k(spray, a, b, c, h), x, y, th, h)
    return first - second


def _terms(chart, spray, phi, x, y, th):
    K = chart.gauss_curvature(x, y)
    k = spray.curvature(x, y, th)
    if phi.is_zero:
        gphi = dphi = 0.0
    else:
        dphi = dphi_v(chart, phi, x, y, th)
        gphi = _along(chart, spray, lambda a, b, c: dphi_v(chart, phi, a, b, c), x, y, th)
    return K, k, gphi, dphi, e2_k(chart, spray, x, y, th)


def q_scalar(chart: ConformalChart, spray: SprayField, phi: Optional[ScalarField], p, theta):
    """Q(p, theta) = K + k^2 + Gamma(dphi) - (dphi)^2 - E2 k (vectorised over p rows / theta)."""
    phi = chart.weight_phi if phi is None else phi
    p = np.asarray(p, float)
    x, y = p[..., 0], p[..., 1]
    th = np.asarray(theta, float)
    chart.require(x, y)
    K, k, gphi, dphi, e2 = _terms(chart, spray, phi, x, y, th)
    out = K + k * k + gphi - dphi * dphi - e2
    return float(out) if np.ndim(out) == 0 else out


def cd0n_value(chart, spray, phi, p, theta, N: float):
    """Pointwise CD(0, N) expression with r = 0."""
    if not N > 2:
        raise ValueError("CD(0,N) pointwise form requires N > 2")
    phi = chart.weight_phi if phi is None else phi
    p = np.asarray(p, float)
    x, y = p[..., 0], p[..., 1]
    th = np.asarray(theta, float)
    K, k, gphi, dphi, e2 = _terms(chart, spray, phi, x, y, th)
    vk = vertical_k(spray, x, y, th)
    out = (K + k * k + gphi - e2 - ((N - 1) * vk - 2 * dphi) ** 2 / (4 * (N - 1) * (N - 2))
           - dphi * dphi / (N - 1))
    return float(out) if np.ndim(out) == 0 else out


def magnetic_defect(chart: ConformalChart, spray: SprayField, p, n_angles: int = 16):
    """max_theta k - min_theta k at p over n_angles uniform angles."""
    p = np.asarray(p, float)
    chart.require(p[..., 0], p[..., 1])
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    k = spray.curvature(p[..., 0][..., None], p[..., 1][..., None], th)
    k = np.broadcast_to(k, np.shape(p[..., 0]) + (n_angles,))
    out = k.max(axis=-1) - k.min(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def compatibility_defect(chart, spray, phi, p, n_angles: int = 16):
    """max_theta |Vk - 2 dphi(v)|; zero iff the spray is magnetic for e^{-4 phi} g."""
    phi = chart.weight_phi if phi is None else phi
    p = np.asarray(p, float)
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    x, y = p[..., 0][..., None], p[..., 1][..., None]
    d = np.abs(vertical_k(spray, x, y, th) - 2 * dphi_v(chart, phi, x, y, th))
    return np.broadcast_to(d, np.shape(p[..., 0]) + (n_angles,)).max(axis=-1)


# ------------------------------------------------------------- reports

@dataclass
class CurvatureReport:
    points: np.ndarray
    values: np.ndarray
    minimum: float
    argmin: tuple
    magnetic_defect: float
    compatibility_defect: float
    verdict: str
    tolerance: float
    method: str
    condition: str = "nnc"
    n_angles: int = 16
    notes: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == "nonnegative"

    def text(self) -> str:
        lines = [
            f"condition: {self.condition}",
            f"method: {self.method}",
            f"grid points: {len(self.points)}, angles: {self.n_angles}",
            f"minimum: {self.minimum:.12g} at ({self.argmin[0]:.12g}, {self.argmin[1]:.12g})",
            f"magnetic defect: {self.magnetic_defect:.6g}",
            f"compatibility defect |Vk - 2 dphi|: {self.compatibility_defect:.6g}",
            f"tolerance: {self.tolerance:g}",
            f"verdict: {self.verdict}",
        ]
        return "\n".join(lines + self.notes) + "\n"


def _grid_min(chart, fn, P, n_angles):
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    vals = fn(P[:, 0][:, None], P[:, 1][:, None], th[None, :])
    return np.broadcast_to(vals, (len(P), n_angles)).min(axis=1)


def _report(P, vals, mag, comp, tol, method, condition, n_angles, compat_gate=True):
    # ties (e.g. a minimum along a whole line) resolve to the point nearest the grid centroid
    lo = float(np.min(vals))
    ties = np.flatnonzero(vals <= lo + 1e-12 * max(1.0, abs(lo)))
    c = P.mean(axis=0)
    i = int(ties[np.argmin(np.hypot(*(P[ties] - c).T))])
    if compat_gate and comp > MAGNETIC_TOL:
        verdict = "fails: not magnetic"
    elif vals[i] >= -tol:
        verdict = "nonnegative"
    else:
        verdict = "negative"
    return CurvatureReport(P, vals, float(vals[i]), (float(P[i, 0]), float(P[i, 1])), mag, comp,
                           verdict, tol, method, condition, n_angles)


def _grid(chart, grid, region):
    if grid is None:
        if region is None:
            raise ValueError("need a grid spec or a working region")
        grid = GridSpec.for_region(region)
    return grid.points(chart)


def check_nnc(chart: ConformalChart, spray: SprayField, phi: Optional[ScalarField] = None,
              grid: Optional[GridSpec] = None, n_angles: int = 16, tol: float = NNC_TOL,
              region: Optional[Region] = None) -> CurvatureReport:
    """Per-point minimum over angles of K + k^2 + Gamma(dphi) - (dphi)^2 - E2 k.

    For phi = 0 and a magnetic spray the value is the closed form
    K + kappa^2 - |grad kappa|_g with the field's own derivatives.
    """
    phi = chart.weight_phi if phi is None else phi
    P = _grid(chart, grid, region)
    x, y = P[:, 0], P[:, 1]
    mag = float(np.max(magnetic_defect(chart, spray, P, n_angles)))
    comp = float(np.max(compatibility_defect(chart, spray, phi, P, n_angles)))
    if phi.is_zero and spray.is_magnetic:
        kap = spray.kappa
        gx, gy = kap.grad(x, y)
        vals = chart.gauss_curvature(x, y) + kap(x, y) ** 2 - np.hypot(gx, gy) / chart.conformal_factor(x, y)
        vals = np.broadcast_to(vals, x.shape).astype(float)
        method = "closed form K + kappa^2 - |grad kappa|_g"
    else:
        vals = _grid_min(chart, lambda a, b, c: q_scalar(chart, spray, phi, np.stack(np.broadcast_arrays(a, b), -1), c), P, n_angles)
        method = f"finite differences (step {FD_STEP:g}), min over {n_angles} angles"
    return _report(P, vals, mag, comp, tol, method, "nnc", n_angles)


def check_cd0n(chart: ConformalChart, spray: SprayField, phi: Optional[ScalarField] = None, N: float = 3.0,
               grid: Optional[GridSpec] = None, n_angles: int = 16, tol: float = NNC_TOL,
               region: Optional[Region] = None) -> CurvatureReport:
    """Per-point minimum over angles of the pointwise CD(0, N) expression."""
    if not N > 2:
        raise ValueError("CD(0,N) check requires N > 2")
    phi = chart.weight_phi if phi is None else phi
    P = _grid(chart, grid, region)
    mag = float(np.max(magnetic_defect(chart, spray, P, n_angles)))
    comp = float(np.max(compatibility_defect(chart, spray, phi, P, n_angles)))
    vals = _grid_min(chart, lambda a, b, c: cd0n_value(chart, spray, phi, np.stack(np.broadcast_arrays(a, b), -1), c, N), P, n_angles)
    rep = _report(P, vals, mag, comp, tol, f"finite differences (step {FD_STEP:g}), min over {n_angles} angles",
                  f"cd(0,{N:g})", n_angles, compat_gate=False)
    return rep
