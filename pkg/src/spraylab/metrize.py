"""Randers metrization of a magnetic spray from unit radial fields of three base points."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sets import Disc, Region, lattice
from .spray import ShootingError, SprayField, log_map_batch, shoot
from .surface import ConformalChart, TangentVec

TOL = 1e-10


def _radial_angles(chart, spray, base, P, tol=TOL):
    """Terminal angles of the spray geodesics from ``base`` to each row of P."""
    P = np.atleast_2d(np.asarray(P, float))
    base = np.asarray(base, float)
    if np.any(np.all(P == base, axis=1)):
        raise ValueError("radial field is undefined at its base point")
    X = np.broadcast_to(base, P.shape)
    res = log_map_batch(chart, spray, X, P, tol=tol, ode_tol=tol)
    if not res.converged.all():
        raise ShootingError(f"{int((~res.converged).sum())} shootings from base {tuple(base)} failed")
    return res.end[:, 2], res.V


def radial_field(chart: ConformalChart, spray: SprayField, base, p) -> TangentVec:
    """Unit tangent at p along the spray geodesic from base through p."""
    th, _ = _radial_angles(chart, spray, base, [p])
    e = chart.conformal_factor(p[0], p[1])
    return TangentVec(p, (np.cos(th[0]) / e, np.sin(th[0]) / e))


def _eta_single(chart, spray, base, P, tol=TOL):
    """Covector components e^{psi}(cos, sin) of the g-dual of the radial field."""
    th, _ = _radial_angles(chart, spray, base, P, tol)
    P = np.atleast_2d(P)
    e = chart.conformal_factor(P[:, 0], P[:, 1])
    return e[:, None] * np.column_stack([np.cos(th), np.sin(th)])


def eta_form(chart: ConformalChart, spray: SprayField, bases, p):
    """Average of the three radial covectors at p."""
    return OneFormField(chart, spray, bases)(np.atleast_2d(p))[0]


def _same_direction(chart, spray, a, b, c, tol):
    res = log_map_batch(chart, spray, [a, a], [b, c], tol=1e-10, ode_tol=1e-10)
    if not res.converged.all():
        return None
    u, v = res.V
    cross = u[0] * v[1] - u[1] * v[0]
    return abs(cross) <= tol * np.hypot(*u) * np.hypot(*v) and u @ v > 0


@dataclass
class OneFormField:
    """eta = (eta_x + eta_y + eta_z)/3 for base points x, y, z.

    Three bases lie on a common spray geodesic exactly when, from the first
    of them along it, the other two are reached in the same initial
    direction; that is what the setup check looks for. A base pair that
    cannot be joined by shooting is recorded in ``unverified``.
    """

    chart: ConformalChart
    spray: SprayField
    bases: tuple
    tol: float = TOL
    unverified: list = field(default_factory=list)

    def __post_init__(self):
        B = np.asarray(self.bases, float)
        if B.shape != (3, 2):
            raise ValueError("need exactly three base points")
        if not self.spray.is_magnetic:
            raise ValueError("metrization needs a magnetic spray")
        self.chart.require(B[:, 0], B[:, 1])
        for i in range(3):
            for j in range(i + 1, 3):
                if np.allclose(B[i], B[j]):
                    raise ValueError("base points must be distinct")
        for i in range(3):
            j, k = [m for m in range(3) if m != i]
            same = _same_direction(self.chart, self.spray, B[i], B[j], B[k], 1e-7)
            if same is None:
                self.unverified.append(i)
            elif same:
                raise ValueError("base points lie on a common spray geodesic")
        self.bases = tuple(map(tuple, B))

    def __call__(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, float))
        return sum(_eta_single(self.chart, self.spray, b, P, self.tol) for b in self.bases) / 3.0

    def g_norm(self, P) -> np.ndarray:
        P = np.atleast_2d(P)
        eta = self(P)
        return np.hypot(eta[:, 0], eta[:, 1]) / self.chart.conformal_factor(P[:, 0], P[:, 1])


@dataclass
class MetrizationReport:
    sup_eta: float
    argmax: tuple
    grid: np.ndarray                 # (n, 3): x, y, |eta|_g
    stokes: np.ndarray               # (n_squares, 4): x0, y0, side, relative residual
    lengths: np.ndarray              # (n_pairs, n_perturb): perturbed F-length minus geodesic F-length
    geodesic_lengths: np.ndarray
    unverified_bases: list

    @property
    def delta(self) -> float:
        return 1.0 - self.sup_eta

    @property
    def stokes_max(self) -> float:
        return float(self.stokes[:, 3].max())

    @property
    def min_excess(self) -> float:
        return float(self.lengths.min())

    @property
    def n_beaten(self) -> int:
        return int((self.lengths < 0).sum())

    def holds(self, stokes_tol: float = 1e-4) -> bool:
        return self.sup_eta < 1 and self.stokes_max <= stokes_tol and self.n_beaten == 0

    def text(self) -> str:
        lines = [
            f"sup |eta|_g over U: {self.sup_eta:.10g} at ({self.argmax[0]:.6g}, {self.argmax[1]:.6g})",
            f"margin below 1 (delta): {self.delta:.6g}",
            f"Stokes squares: {len(self.stokes)}, max relative residual {self.stokes_max:.3e}",
            f"endpoint pairs: {self.lengths.shape[0]}, perturbations each: {self.lengths.shape[1]}",
            f"smallest F-length excess of a perturbation: {self.min_excess:.6e}",
            f"perturbations shorter than the geodesic: {self.n_beaten}",
        ]
        if self.unverified_bases:
            lines.append(f"collinearity not verified from bases {self.unverified_bases} (shooting failed)")
        lines.append(f"verdict: {'metrized' if self.holds() else 'fails'}")
        return "\n".join(lines) + "\n"


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _square_residual(form, chart, kappa, corners, side, n_gauss):
    """|closed integral of eta - double integral of kappa omega_g| / g-area, for many squares."""
    u, w = _gauss(n_gauss)
    m = len(corners)
    # counter-clockwise sides: start point and direction
    starts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    dirs = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    pts = (corners[:, None, None, :] + side[:, None, None, None]
           * (starts[None, :, None, :] + u[None, None, :, None] * dirs[None, :, None, :]))
    eta = form(pts.reshape(-1, 2)).reshape(m, 4, n_gauss, 2)
    line = side * np.einsum("mkqi,ki,q->m", eta, dirs, w)
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(w, w)
    X = corners[:, 0, None, None] + side[:, None, None] * U
    Y = corners[:, 1, None, None] + side[:, None, None] * V
    e = chart.conformal_factor(X, Y)
    area_g = side**2 * np.einsum("mij,ij->m", e * e, W)
    flux = side**2 * np.einsum("mij,ij->m", kappa(X, Y) * e * e, W)
    return np.abs(line - flux) / area_g


def _f_length(form, chart, C, dC, w):
    """F-length sum over quadrature nodes: |c'|_g - eta(c')."""
    n_curves, n_q, _ = C.shape
    P = C.reshape(-1, 2)
    e = chart.conformal_factor(P[:, 0], P[:, 1]).reshape(n_curves, n_q)
    eta = form(P).reshape(n_curves, n_q, 2)
    speed = e * np.hypot(dC[..., 0], dC[..., 1])
    return (speed - np.einsum("cqi,cqi->cq", eta, dC)) @ w


def verify_metrization(chart: ConformalChart, spray: SprayField, U: Region, bases, n_squares: int = 64,
                       n_perturb: int = 50, n_pairs: int = 20, seed: int = 0, grid_n: int = 41,
                       n_gauss: int = 32, n_quad: int = 32, amplitude: float = 0.05) -> MetrizationReport:
    """Check |eta|_g < 1 on U, d eta = kappa omega_g on small squares, and F-minimality of spray geodesics.

    Squares have side diam(U)/64. Perturbations keep the endpoints and add
    a normal cubic bump s(1-s)(a + b s) to the geodesic, with peak amplitude
    between 10% and 100% of ``amplitude`` times the endpoint distance.
    """
    rng = np.random.default_rng(seed)
    B = np.asarray(bases, float)
    if np.any(U.contains(B[:, 0], B[:, 1])):
        raise ValueError("base points must lie outside U")
    form = OneFormField(chart, spray, bases)
    kappa = spray.kappa

    def inside(n):
        out = np.empty((0, 2))
        x0, x1, y0, y1 = U.bbox
        while len(out) < n:
            P = rng.uniform([x0, y0], [x1, y1], size=(4 * n, 2))
            out = np.concatenate([out, P[U.contains(P[:, 0], P[:, 1])]])
        return out[:n]

    # (i) sup of |eta|_g
    x0, x1, y0, y1 = U.bbox
    G = lattice(U.bbox, max(x1 - x0, y1 - y0) / (grid_n - 1))
    G = G[U.contains(G[:, 0], G[:, 1])]
    if isinstance(U, Disc):
        G = np.concatenate([G, U.outline(128)])
    nrm = form.g_norm(G)
    i = int(np.argmax(nrm))
    grid = np.column_stack([G, nrm])

    # (ii) Stokes on small squares
    side = np.full(n_squares, U.diameter / 64)
    corners = inside(n_squares)
    ok = U.contains(corners[:, 0] + side, corners[:, 1] + side)
    while not ok.all():
        corners[~ok] = inside(int((~ok).sum()))
        ok = U.contains(corners[:, 0] + side, corners[:, 1] + side)
    res = _square_residual(form, chart, kappa, corners, side, n_gauss)
    stokes = np.column_stack([corners, side, res])

    # (iii) F-length of geodesics vs perturbations
    s, w = _gauss(n_quad)
    P, Q = inside(n_pairs), inside(n_pairs)
    lb = log_map_batch(chart, spray, P, Q, tol=1e-11, ode_tol=1e-11)
    if not lb.converged.all():
        raise ShootingError("could not join a random endpoint pair inside U")
    shot = shoot(chart, spray, P, lb.V, tol=1e-11, s_eval=s)
    st = np.transpose(shot.at, (1, 0, 2))                       # (pairs, q, 3)
    L = chart.conformal_factor(P[:, 0], P[:, 1]) * np.hypot(lb.V[:, 0], lb.V[:, 1])
    C = st[..., :2]
    e = chart.conformal_factor(C[..., 0], C[..., 1])
    dC = (L[:, None] / e)[..., None] * np.stack([np.cos(st[..., 2]), np.sin(st[..., 2])], axis=-1)
    base_len = _f_length(form, chart, C, dC, w)
    D = Q - P
    dist = np.hypot(D[:, 0], D[:, 1])
    nvec = np.column_stack([-D[:, 1], D[:, 0]]) / dist[:, None]
    excess = np.empty((n_pairs, n_perturb))
    for k in range(n_pairs):
        a = rng.uniform(-1, 1, n_perturb)
        b = rng.uniform(-1, 1, n_perturb)
        bump = s[None, :] * (1 - s[None, :]) * (a[:, None] + b[:, None] * s[None, :])
        dbump = (1 - 2 * s[None, :]) * (a[:, None] + b[:, None] * s[None, :]) + s * (1 - s) * b[:, None]
        peak = np.abs(bump).max(axis=1)
        amp = amplitude * dist[k] * rng.uniform(0.1, 1.0, n_perturb) / peak
        Cp = C[k][None] + (amp[:, None] * bump)[..., None] * nvec[k]
        dCp = dC[k][None] + (amp[:, None] * dbump)[..., None] * nvec[k]
        if not np.all(U.contains(Cp[..., 0], Cp[..., 1])):
            # keep the curves in U: shrink offending perturbations
            bad = ~np.all(U.contains(Cp[..., 0], Cp[..., 1]), axis=1)
            while bad.any():
                amp[bad] *= 0.5
                Cp[bad] = C[k][None] + (amp[bad, None] * bump[bad])[..., None] * nvec[k]
                dCp[bad] = dC[k][None] + (amp[bad, None] * dbump[bad])[..., None] * nvec[k]
                bad = ~np.all(U.contains(Cp[..., 0], Cp[..., 1]), axis=1)
        excess[k] = _f_length(form, chart, Cp, dCp, w) - base_len[k]
    return MetrizationReport(float(nrm[i]), tuple(G[i]), grid, stokes, excess, base_len, list(form.unverified))
