"""Metric sprays given by a geodesic-curvature law, and their exponential maps.

In a conformal chart a unit-speed curve with direction angle theta and
geodesic curvature k satisfies

    x' = e^{-psi} cos(theta),  y' = e^{-psi} sin(theta),
    theta' = k(x, y, theta) + e^{-psi} (-sin(theta) psi_x + cos(theta) psi_y).

Positive k bends toward the left normal (-sin theta, cos theta). The psi term
is the chart turning rate of a Riemannian geodesic: the Euclidean curvature of
a curve in the chart is e^{psi} k_g + d psi / dn along the left normal n.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .ode import StepUnderflow, integrate_batch
from .surface import ConformalChart, DomainError, ScalarField, TangentVec


class ShootingError(RuntimeError):
    """Newton shooting for the inverse exponential map did not converge."""


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SprayField:
    """Geodesic-curvature law k(x, y, theta) of a metric spray.

    ``magnetic_kappa`` is set when k does not depend on theta. ``reversed``
    selects the spray whose geodesics are the original ones run backwards,
    i.e. k_rev(x, y, theta) = -k(x, y, theta + pi).
    """

    k: Callable
    magnetic_kappa: Optional[ScalarField] = None
    reversed: bool = False
    label: str = ""
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.check and self.magnetic_kappa is not None:
            rng = np.random.default_rng(0)
            x = rng.uniform(-2, 2, 100)[:, None]
            y = rng.uniform(-2, 2, 100)[:, None]
            th = np.linspace(0, 2 * np.pi, 16, endpoint=False)[None, :]
            with np.errstate(all="ignore"):
                a = np.broadcast_to(self.k(x, y, th), (100, 16))
                b = np.broadcast_to(self.magnetic_kappa(x, y), (100, 16))
            ok = np.isfinite(a) & np.isfinite(b)
            if np.any((np.abs(a - b) > 1e-12 * np.maximum(1.0, np.abs(b)))[ok]):
                raise ValueError("magnetic_kappa disagrees with k: curvature law depends on direction")

    @classmethod
    def magnetic(cls, kappa, label: str = "") -> "SprayField":
        """Direction-independent curvature law k = kappa(x, y)."""
        if not isinstance(kappa, ScalarField):
            kappa = ScalarField.const(kappa)
        return cls(lambda x, y, th: kappa(x, y) + 0 * th, kappa, label=label or f"kappa={kappa.label}", check=False)

    @classmethod
    def geodesic(cls) -> "SprayField":
        return cls.magnetic(0.0, label="geodesic")

    def curvature(self, x, y, theta):
        if self.reversed:
            return -self.k(x, y, theta + np.pi)
        return self.k(x, y, theta)

    @property
    def is_magnetic(self) -> bool:
        return self.magnetic_kappa is not None

    @property
    def kappa(self) -> Optional[ScalarField]:
        """Effective kappa, sign-flipped for the reversed spray."""
        if self.magnetic_kappa is None:
            return None
        return self.magnetic_kappa.scaled(-1.0) if self.reversed else self.magnetic_kappa

    def reverse(self) -> "SprayField":
        return replace(self, reversed=not self.reversed, check=False)


def spray_from_expression(text: str, fd_step: float = 1e-5) -> SprayField:
    """k from an expression; theta-free expressions give a magnetic spray."""
    from .expr import parse_expression

    e = parse_expression(text)
    if "theta" in e.variables:
        return SprayField(lambda x, y, th: e(x, y, th), None, label=f"k={text}", check=False)
    return SprayField.magnetic(ScalarField.from_expression(e, fd_step=fd_step), label=f"kappa={text}")


def spray_rhs(chart: ConformalChart, spray: SprayField) -> Callable:
    """Vector field per unit g-arclength on rows (x, y, cos theta, sin theta).

    Carrying the direction as a unit vector avoids trigonometric calls in
    the inner loop; theta is recovered with atan2.
    """
    psi = chart.psi
    kappa = spray.kappa

    def f(Y):
        x, y, c, s = Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3]
        e = 1.0 / chart.conformal_factor(x, y)
        px, py = psi.grad(x, y)
        if kappa is not None:
            kk = kappa(x, y) if kappa.constant is None else kappa.constant
        else:
            kk = spray.curvature(x, y, np.arctan2(s, c))
        w = kk + e * (c * py - s * px)
        out = np.empty_like(Y)
        out[:, 0] = e * c
        out[:, 1] = e * s
        out[:, 2] = -w * s
        out[:, 3] = w * c
        return out

    return f


def _to_state(P, theta):
    P = np.atleast_2d(P)
    theta = np.asarray(theta, float)
    return np.column_stack([P[:, 0], P[:, 1], np.cos(theta), np.sin(theta)])


def _from_state(Y):
    """(..., 4) unit-vector states to (..., 3) angle states."""
    out = np.empty(Y.shape[:-1] + (3,))
    out[..., :2] = Y[..., :2]
    out[..., 2] = np.arctan2(Y[..., 3], Y[..., 2])
    return out


def _inside(chart):
    return lambda Y: chart.contains(Y[:, 0], Y[:, 1])


@dataclass
class Trajectory:
    """Unit-speed spray geodesic sampled at accepted integrator steps."""

    t: np.ndarray          # g-arclength
    states: np.ndarray     # (m, 3): x, y, theta
    rates: np.ndarray      # (m, 3): d/dt of states
    exited: bool = False
    n_accepted: int = 0
    n_rejected: int = 0

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def theta(self):
        return self.states[:, 2]

    @property
    def endpoint(self):
        return self.states[-1, :2].copy()

    def at(self, t):
        """Cubic Hermite dense output at arclength(s) t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tt = self.t
        asc = tt[-1] >= tt[0]
        key = tt if asc else -tt
        q = t if asc else -t
        i = np.clip(np.searchsorted(key, q, side="right") - 1, 0, len(tt) - 2)
        h = tt[i + 1] - tt[i]
        u = ((t - tt[i]) / h)[:, None]
        y0, y1 = self.states[i], self.states[i + 1]
        f0, f1 = self.rates[i] * h[:, None], self.rates[i + 1] * h[:, None]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        return h00 * y0 + h10 * f0 + h01 * y1 + h11 * f1

    def g_lengths(self, chart: ConformalChart, nodes: int = 8) -> np.ndarray:
        """g-length of each sample-to-sample segment (Gauss-Legendre on the interpolant)."""
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        out = np.empty(len(self.t) - 1)
        for j in range(len(self.t) - 1):
            a, b = self.t[j], self.t[j + 1]
            tq = 0.5 * (a + b) + 0.5 * (b - a) * xg
            h = b - a
            u = ((tq - a) / h)[:, None]
            y0, y1 = self.states[j], self.states[j + 1]
            f0, f1 = self.rates[j] * h, self.rates[j + 1] * h
            d = ((6 * u**2 - 6 * u) * y0 + (3 * u**2 - 4 * u + 1) * f0
                 + (-6 * u**2 + 6 * u) * y1 + (3 * u**2 - 2 * u) * f1) / h
            pts = self.at(tq)
            speed = chart.conformal_factor(pts[:, 0], pts[:, 1]) * np.hypot(d[:, 0], d[:, 1])
            out[j] = 0.5 * abs(h) * np.dot(wg, speed)
        return out


def integrate(chart: ConformalChart, spray: SprayField, start, theta0: float, T: float,
              tol: float = 1e-10, t_eval=None) -> Trajectory:
    """Integrate the unit-speed spray geodesic for signed arclength T.

    If the curve leaves the domain the partial trajectory is returned with
    ``exited`` set. ``t_eval`` arclengths are forced to be sample nodes.
    """
    x0, y0 = float(start[0]), float(start[1])
    chart.require(x0, y0)
    T = float(T)
    th0 = float(theta0)
    Y0 = _to_state([[x0, y0]], [th0])
    f = spray_rhs(chart, spray)

    def angles(ys, fs):
        st = _from_state(ys)
        st[:, 2] = th0 + np.unwrap(st[:, 2] - th0)
        rates = np.empty_like(st)
        rates[:, :2] = fs[:, :2]
        # d(theta)/dt = -sin * d(cos) + cos * d(sin)
        rates[:, 2] = -ys[:, 3] * fs[:, 2] + ys[:, 2] * fs[:, 3]
        return st, rates

    if T == 0.0:
        st, rates = angles(Y0, f(Y0))
        return Trajectory(np.zeros(1), st, rates, False)
    s_eval = None if t_eval is None else np.asarray(t_eval, float) / T
    if s_eval is not None and np.any((s_eval < 0) | (s_eval > 1)):
        raise ValueError("t_eval must lie between 0 and T")
    try:
        res = integrate_batch(f, Y0, T, rtol=tol, atol=tol, s_eval=s_eval, inside=_inside(chart), record=True, err_cols=2)
    except StepUnderflow as exc:
        raise IntegrationError(str(exc)) from exc
    s, ys, fs = res.history
    keep = s <= res.s_exit[0] + 1e-15
    st, rates = angles(ys[keep, 0, :], fs[keep, 0, :] / T)
    return Trajectory(s[keep] * T, st, rates, bool(res.exited[0]), res.n_accepted, res.n_rejected)


@dataclass
class ShotBatch:
    end: np.ndarray        # (n, 3) terminal states
    exited: np.ndarray     # (n,) bool
    at: Optional[np.ndarray]  # (m, n, 3)


def shoot(chart: ConformalChart, spray: SprayField, P, V, tol: float = 1e-10, s_eval=None) -> ShotBatch:
    """exp_P(s V) for a batch of base points P and chart vectors V (rows)."""
    P = np.atleast_2d(np.asarray(P, float))
    V = np.atleast_2d(np.asarray(V, float))
    L = chart.conformal_factor(P[:, 0], P[:, 1]) * np.hypot(V[:, 0], V[:, 1])
    Y0 = _to_state(P, np.arctan2(V[:, 1], V[:, 0]))
    try:
        res = integrate_batch(spray_rhs(chart, spray), Y0, L, rtol=tol, atol=tol,
                              s_eval=s_eval, inside=_inside(chart), err_cols=2)
    except StepUnderflow as exc:
        raise IntegrationError(str(exc)) from exc
    return ShotBatch(_from_state(res.y), res.exited, None if res.at is None else _from_state(res.at))


def exp_map(chart: ConformalChart, spray: SprayField, x, v, tol: float = 1e-10):
    """Endpoint of the spray geodesic from x with initial velocity v (g-length = arclength)."""
    if isinstance(v, TangentVec):
        v = v.components
    chart.require(float(x[0]), float(x[1]))
    if v[0] == 0 and v[1] == 0:
        return np.array([float(x[0]), float(x[1])])
    shot = shoot(chart, spray, [x], [v], tol=tol)
    if shot.exited[0]:
        raise DomainError("geodesic left the chart domain")
    return shot.end[0, :2].copy()


@dataclass
class LogBatch:
    V: np.ndarray          # (n, 2) chart components (nan where not converged)
    converged: np.ndarray  # (n,) bool
    end: np.ndarray        # (n, 3) terminal states of the converged shots
    at: Optional[np.ndarray]  # (m, n, 3) states at requested s values
    iterations: int = 0


def _newton(chart, spray, X, Y, V, budget, tol, ode_tol, s_eval):
    """Damped Newton on v -> exp_x(v) - y.

    The Jacobian is a forward difference on the first iteration and after any
    rejected step; accepted steps update it by Broyden's rank-one formula,
    so most iterations cost one shot per pair instead of three.
    """
    n = len(X)
    m = 0 if s_eval is None else len(s_eval)
    conv = np.zeros(n, bool)
    done = np.zeros(n, bool)
    out_V = np.full((n, 2), np.nan)
    end = np.full((n, 3), np.nan)
    at = np.full((m, n, 3), np.nan) if m else None
    V = V.copy()
    V_best = np.full((n, 2), np.nan)
    R_best = np.full((n, 2), np.nan)
    r_best = np.full(n, np.inf)
    J = np.full((n, 2, 2), np.nan)
    need_fd = np.ones(n, bool)
    fresh = np.zeros(n, bool)          # Jacobian at V_best is a finite difference
    chord = np.hypot(*(Y - X).T)
    it = 0
    for it in range(1, budget + 1):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        k = act.size
        Va = V[act]
        fd = need_fd[act]
        fdi = np.flatnonzero(fd)
        h = 1e-7 * np.maximum(np.hypot(Va[fdi, 0], Va[fdi, 1]), 1e-3 * chord[act[fdi]])[:, None]
        P = np.concatenate([X[act], X[act[fdi]], X[act[fdi]]])
        W = np.concatenate([Va, Va[fdi] + h * [1.0, 0.0], Va[fdi] + h * [0.0, 1.0]])
        shot = shoot(chart, spray, P, W, tol=ode_tol, s_eval=s_eval)
        q = fdi.size
        E0 = shot.end[:k, :2]
        ex0 = shot.exited[:k]
        R = E0 - Y[act]
        rn = np.hypot(R[:, 0], R[:, 1])
        hit = ~ex0 & (rn < tol)
        if hit.any():
            idx = act[hit]
            conv[idx] = done[idx] = True
            out_V[idx] = Va[hit]
            end[idx] = shot.end[:k][hit]
            if m:
                at[:, idx] = shot.at[:, :k][:, hit]
        # fresh finite-difference Jacobians
        Jfd = np.full((k, 2, 2), np.nan)
        if q:
            E1, E2 = shot.end[k:k + q, :2], shot.end[k + q:, :2]
            okj = ~shot.exited[k:k + q] & ~shot.exited[k + q:]
            Jfd[fdi, :, 0] = np.where(okj[:, None], (E1 - E0[fdi]) / h, np.nan)
            Jfd[fdi, :, 1] = np.where(okj[:, None], (E2 - E0[fdi]) / h, np.nan)
        improve = ~hit & ~ex0 & (rn < r_best[act])
        # Jacobian for improved rows: fresh FD, else Broyden update from the last accepted point
        Jn = J[act].copy()
        Jn[fd] = Jfd[fd]
        br = improve & ~fd
        if br.any():
            dv = Va[br] - V_best[act[br]]
            dr = R[br] - R_best[act[br]]
            Jb = Jn[br]
            u = dr - np.einsum("nij,nj->ni", Jb, dv)
            den = np.einsum("ni,ni->n", dv, dv)
            Jn[br] = Jb + u[:, :, None] * dv[:, None, :] / np.where(den > 0, den, 1.0)[:, None, None]
        step = improve & np.all(np.isfinite(Jn), axis=(1, 2))
        if step.any():
            with np.errstate(all="ignore"):
                dV = -np.linalg.solve(Jn[step], R[step][:, :, None])[:, :, 0]
            cap = np.maximum(np.hypot(*Va[step].T), chord[act[step]])
            dn = np.hypot(dV[:, 0], dV[:, 1])
            bad = ~np.isfinite(dn)
            dV[bad] = 0.0
            dV *= np.minimum(1.0, cap / np.where(dn > 0, dn, 1.0))[:, None]
            idx = act[step]
            V_best[idx] = Va[step]
            R_best[idx] = R[step]
            r_best[idx] = rn[step]
            J[idx] = Jn[step]
            fresh[idx] = fd[step]
            V[idx] = Va[step] + dV
            need_fd[idx] = False
            done[idx[bad]] = True
        back = ~hit & ~step
        if back.any():
            idx = act[back]
            has_best = np.isfinite(V_best[idx, 0])
            # a rejected quasi-Newton step: retry from the best point with an exact Jacobian
            redo = has_best & ~fresh[idx] & ~fd[back]
            V[idx[redo]] = V_best[idx[redo]]
            need_fd[idx[redo]] = True
            r_best[idx[redo]] = np.inf
            # a rejected Newton step: halve it
            half = ~redo
            j = idx[half]
            base = np.where(has_best[half][:, None], V_best[j], 0.0)
            V[j] = base + 0.5 * (V[j] - base)
            need_fd[j] = ~has_best[half]
            tiny = np.hypot(*(V[j] - base).T) < 1e-15 * np.maximum(chord[j], 1e-300)
            done[j[tiny]] = True
    return out_V, conv, end, at, it


def _arc_guess(chart, spray, X, Y):
    """Initial velocity treating the connecting curve as a chart circle.

    The chart curvature of the spray geodesic at the chord midpoint (heading
    along the chord) bends the chord direction by half the turning angle and
    lengthens it to the arc length.
    """
    D = Y - X
    d = np.hypot(D[:, 0], D[:, 1])
    th = np.arctan2(D[:, 1], D[:, 0])
    M = 0.5 * (X + Y)
    with np.errstate(all="ignore"):
        rate = spray_rhs(chart, spray)(_to_state(M, th))
        eM = chart.conformal_factor(M[:, 0], M[:, 1])
        eX = chart.conformal_factor(X[:, 0], X[:, 1])
        # dtheta/dt divided by chart speed e^{-psi} = chart curvature
        c = (-np.sin(th) * rate[:, 2] + np.cos(th) * rate[:, 3]) * eM
        ang = th - 0.5 * c * d
        ell = d * (1.0 + (c * d) ** 2 / 24.0) * eM / eX
    ok = np.isfinite(ang) & np.isfinite(ell) & (np.abs(c * d) < 1.0)
    V = D.copy()
    V[ok] = ell[ok, None] * np.column_stack([np.cos(ang[ok]), np.sin(ang[ok])])
    return V


def log_map_batch(chart: ConformalChart, spray: SprayField, X, Y, budget: int = 50, tol: float = 1e-9,
                  ode_tol: float = 1e-10, s_eval=None, multistart: bool = True) -> LogBatch:
    """Solve exp_x(v) = y for many pairs by Newton shooting.

    Failures from the chord initial guess are retried from 16 initial angles
    with chord magnitude; the converged solution of least g-norm is kept.
    """
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    n = len(X)
    m = 0 if s_eval is None else len(s_eval)
    V = np.full((n, 2), np.nan)
    conv = np.zeros(n, bool)
    end = np.full((n, 3), np.nan)
    at = np.full((m, n, 3), np.nan) if m else None
    same = np.all(X == Y, axis=1)
    V[same] = 0.0
    conv[same] = True
    end[same, :2] = X[same]
    if m:
        at[:, same, :2] = X[same]
    idx = np.flatnonzero(~same)
    iters = 0
    if idx.size:
        v, c, e, a, iters = _newton(chart, spray, X[idx], Y[idx], _arc_guess(chart, spray, X[idx], Y[idx]),
                                    budget, tol, ode_tol, s_eval)
        V[idx], conv[idx], end[idx] = v, c, e
        if m:
            at[:, idx] = a
    fail = np.flatnonzero(~conv)
    if multistart and fail.size:
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        Xf = np.repeat(X[fail], 16, axis=0)
        Yf = np.repeat(Y[fail], 16, axis=0)
        chord = np.hypot(*(Yf - Xf).T)
        A = np.tile(ang, fail.size)
        V0 = chord[:, None] * np.column_stack([np.cos(A), np.sin(A)])
        v, c, e, a, it2 = _newton(chart, spray, Xf, Yf, V0, budget, tol, ode_tol, s_eval)
        iters += it2
        gn = chart.conformal_factor(Xf[:, 0], Xf[:, 1]) * np.hypot(v[:, 0], v[:, 1])
        gn = np.where(c, gn, np.inf).reshape(fail.size, 16)
        best = np.argmin(gn, axis=1)
        ok = np.isfinite(gn[np.arange(fail.size), best])
        pick = np.arange(fail.size) * 16 + best
        sel = fail[ok]
        V[sel], end[sel] = v[pick[ok]], e[pick[ok]]
        conv[sel] = True
        if m:
            at[:, sel] = a[:, pick[ok]]
    return LogBatch(V, conv, end, at, iters)


def log_map(chart: ConformalChart, spray: SprayField, x, y, budget: int = 50, tol: float = 1e-9) -> TangentVec:
    """Inverse exponential map: v at x with exp_x(v) = y."""
    chart.require(float(x[0]), float(x[1]))
    chart.require(float(y[0]), float(y[1]))
    res = log_map_batch(chart, spray, [x], [y], budget=budget, tol=tol)
    if not res.converged[0]:
        raise ShootingError(f"no geodesic from {tuple(x)} to {tuple(y)} found within budget {budget}")
    return TangentVec(x, res.V[0])


def cot_k(K: float, x):
    """sqrt(K) cot(sqrt(K) x); 1/x for K = 0; sqrt(-K) coth(sqrt(-K) x) for K < 0."""
    x = np.asarray(x, dtype=float)
    if K > 0:
        a = np.sqrt(K)
        s = np.sin(a * x)
        if np.any(np.abs(s) < 1e-300) or np.any(x == 0):
            raise ValueError("cot_K pole")
        out = a * np.cos(a * x) / s
    elif K == 0:
        if np.any(x == 0):
            raise ValueError("cot_K pole at x = 0")
        out = 1.0 / x
    else:
        a = np.sqrt(-K)
        if np.any(x == 0):
            raise ValueError("cot_K pole at x = 0")
        out = a / np.tanh(a * x)
    return float(out) if out.ndim == 0 else out
