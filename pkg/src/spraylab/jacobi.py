"""Jacobi fields by finite-difference variation, concavity of J, and the 1-D needle inequality."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from .ode import StepUnderflow, integrate_batch
from .spray import IntegrationError, SprayField, _from_state, _inside, _to_state, spray_rhs
from .surface import ConformalChart, DomainError, ScalarField


@dataclass
class JacobiTrace:
    """J(t) = omega(gamma', S) on a uniform arclength grid."""

    t: np.ndarray
    J: np.ndarray
    states: Optional[np.ndarray] = None   # (m, 3) x, y, theta of the reference geodesic
    S: Optional[np.ndarray] = None        # (m, 2) chart components of the variation field
    start: Optional[tuple] = None
    theta0: Optional[float] = None
    offset: Optional[tuple] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.J = np.asarray(self.J, float)
        if not np.all(np.isfinite(self.J)):
            raise ValueError("Jacobi trace has non-finite values")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def second_difference(self) -> np.ndarray:
        """Centered second difference divided by dt^2 on interior nodes."""
        J = self.J
        return (J[2:] - 2 * J[1:-1] + J[:-2]) / self.dt**2


def jacobi_trace(chart: ConformalChart, spray: SprayField, start, theta0: float, T: float,
                 offset=(0.0, 0.0, 1.0), eps: float = 1e-4, n: int = 201,
                 phi: Optional[ScalarField] = None, tol: float = 1e-11) -> JacobiTrace:
    """Variation through spray geodesics, differenced at +-eps.

    ``offset = (dx, dy, dtheta)`` perturbs the initial position (chart units)
    and angle. All three geodesics share the integrator's steps, so the
    central difference S = (gamma_+ - gamma_-) / (2 eps) is smooth in t.
    """
    phi = chart.weight_phi if phi is None else phi
    start = np.asarray(start, float)
    off = np.asarray(offset, float)
    base = np.array([start[0], start[1], theta0])
    Y0 = np.array([base, base + eps * off, base - eps * off])
    chart.require(Y0[:, 0], Y0[:, 1])
    s_eval = np.linspace(0.0, 1.0, n)
    try:
        res = integrate_batch(spray_rhs(chart, spray), _to_state(Y0[:, :2], Y0[:, 2]), float(T),
                              rtol=tol, atol=tol, s_eval=s_eval, inside=_inside(chart), err_cols=2)
    except StepUnderflow as exc:
        raise IntegrationError(str(exc)) from exc
    if res.exited.any():
        raise DomainError("a varied geodesic left the chart domain")
    at = res.at                         # (n, 3, 4)
    ref = _from_state(at[:, 0, :])
    S = (at[:, 1, :2] - at[:, 2, :2]) / (2 * eps)
    x, y = ref[:, 0], ref[:, 1]
    e = chart.conformal_factor(x, y)
    vel = np.column_stack([at[:, 0, 2], at[:, 0, 3]]) / e[:, None]   # chart velocity e^{-psi}(cos, sin)
    dens = e * e if phi.is_zero else e * e * np.exp(-phi(x, y))
    J = dens * (vel[:, 0] * S[:, 1] - vel[:, 1] * S[:, 0])
    if J[0] < 0:
        raise ValueError("variation is not transversal: J(0) < 0 (reverse the offset)")
    return JacobiTrace(s_eval * T, J, ref, S, tuple(start), float(theta0), tuple(off))


@dataclass
class ConcavityReport:
    max_second_difference: float
    location: float
    tolerance: float
    concave: bool

    @property
    def verdict(self) -> str:
        return "concave" if self.concave else "not concave"


def concavity_check(trace: JacobiTrace, tol: Optional[float] = None) -> ConcavityReport:
    """Largest centered second difference; concave iff it is at most ``tol``.

    Default tolerance is 1e-6 * max|J|.
    """
    if len(trace.t) < 3:
        raise ValueError("need at least 3 grid points")
    d2 = trace.second_difference()
    i = int(np.argmax(d2))
    tol = 1e-6 * float(np.max(np.abs(trace.J))) if tol is None else float(tol)
    return ConcavityReport(float(d2[i]), float(trace.t[i + 1]), tol, bool(d2[i] <= tol))


# ------------------------------------------------------------ needle lemma

def _merge(intervals):
    intervals = sorted(intervals)
    out = []
    for a, b in intervals:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [tuple(iv) for iv in out]


def ordered_average(A1: Sequence, B1: Sequence, lam: float):
    """{(1-lam) a + lam b : a in A1, b in B1, a <= b} as merged closed intervals.

    For one pair of intervals the admissible (a, b) form the rectangle
    clipped to the half-plane a <= b, a convex polygon; the linear image of a
    polygon is the interval spanned by its vertices.
    """
    pieces = []
    for a1, a2 in A1:
        for b1, b2 in B1:
            verts = [(a, b) for a in (a1, a2) for b in (b1, b2) if a <= b]
            # the diagonal a = b meets the rectangle on [max(a1, b1), min(a2, b2)]
            lo, hi = max(a1, b1), min(a2, b2)
            if lo <= hi:
                verts += [(lo, lo), (hi, hi)]
            if not verts:
                continue
            vals = [(1 - lam) * a + lam * b for a, b in verts]
            pieces.append((min(vals), max(vals)))
    return _merge(pieces)


def _density_fn(density, support):
    if callable(density):
        return density
    grid, values = (np.asarray(v, float) for v in density)
    return lambda t: np.interp(t, grid, values)


def measure_1d(density: Callable, intervals, n: int = 2000) -> float:
    """Composite Simpson integral of ``density`` over a union of intervals."""
    total = 0.0
    for a, b in intervals:
        if b <= a:
            continue
        t = np.linspace(a, b, n + 1)
        total += float(simpson(np.asarray(density(t), float) * np.ones_like(t), x=t))
    return total


@dataclass
class NeedleResult:
    M: list
    mu_A: float
    mu_B: float
    mu_M: float
    lhs: float
    rhs: float
    margin: float


def needle_bm_1d(density, A1, B1, lam: float, support=None, n: int = 2000) -> NeedleResult:
    """Square-root Brunn-Minkowski inequality for a density on a line.

    ``density`` is a callable or a (grid, values) pair sampled on its support.
    """
    if not A1 or not B1:
        raise ValueError("interval lists must be nonempty")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    A1 = [tuple(map(float, iv)) for iv in A1]
    B1 = [tuple(map(float, iv)) for iv in B1]
    for a, b in A1 + B1:
        if b < a:
            raise ValueError(f"malformed interval ({a}, {b})")
    f = _density_fn(density, support)
    M = ordered_average(A1, B1, lam)
    mu_A = measure_1d(f, _merge(A1), n)
    mu_B = measure_1d(f, _merge(B1), n)
    mu_M = measure_1d(f, M, n)
    lhs = np.sqrt(max(mu_M, 0.0))
    rhs = (1 - lam) * np.sqrt(max(mu_A, 0.0)) + lam * np.sqrt(max(mu_B, 0.0))
    return NeedleResult(M, mu_A, mu_B, mu_M, float(lhs), float(rhs), float(lhs - rhs))
