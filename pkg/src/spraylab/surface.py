"""Conformal charts: g = e^{2 psi} (dx^2 + dy^2) on a planar domain."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class DomainError(ValueError):
    """A point (or trajectory) left the chart domain."""


def _zeros_like(x, y):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))


@dataclass(frozen=True)
class ScalarField:
    """f(x, y) with optional analytic gradient and Hessian.

    Missing derivatives fall back to central differences with step ``fd_step``.
    """

    value: Callable
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None
    fd_step: float = 1e-5
    constant: Optional[float] = None
    label: str = ""

    def __call__(self, x, y):
        return self.value(x, y)

    def grad(self, x, y):
        if self.gradient is not None:
            return self.gradient(x, y)
        h = self.fd_step
        fx = (self.value(x + h, y) - self.value(x - h, y)) / (2 * h)
        fy = (self.value(x, y + h) - self.value(x, y - h)) / (2 * h)
        return fx, fy

    def hess(self, x, y):
        if self.hessian is not None:
            return self.hessian(x, y)
        h = self.fd_step
        if self.gradient is not None:
            gxp, gyp = self.gradient(x + h, y)
            gxm, gym = self.gradient(x - h, y)
            _, gy_up = self.gradient(x, y + h)
            _, gy_dn = self.gradient(x, y - h)
            return (gxp - gxm) / (2 * h), (gyp - gym) / (2 * h), (gy_up - gy_dn) / (2 * h)
        f0 = self.value(x, y)
        fxx = (self.value(x + h, y) - 2 * f0 + self.value(x - h, y)) / h**2
        fyy = (self.value(x, y + h) - 2 * f0 + self.value(x, y - h)) / h**2
        fxy = (self.value(x + h, y + h) - self.value(x + h, y - h)
               - self.value(x - h, y + h) + self.value(x - h, y - h)) / (4 * h * h)
        return fxx, fxy, fyy

    @property
    def is_zero(self) -> bool:
        return self.constant is not None and self.constant == 0.0

    def scaled(self, c: float) -> "ScalarField":
        """c * f, keeping analytic derivatives."""
        g = self.gradient
        H = self.hessian
        return ScalarField(
            lambda x, y: c * self.value(x, y),
            None if g is None else (lambda x, y: tuple(c * d for d in g(x, y))),
            None if H is None else (lambda x, y: tuple(c * d for d in H(x, y))),
            self.fd_step,
            None if self.constant is None else c * self.constant,
            f"{c}*({self.label})",
        )

    @classmethod
    def const(cls, c: float) -> "ScalarField":
        c = float(c)
        return cls(
            lambda x, y: c + _zeros_like(x, y),
            lambda x, y: (_zeros_like(x, y), _zeros_like(x, y)),
            lambda x, y: (_zeros_like(x, y),) * 3,
            constant=c,
            label=repr(c),
        )

    @classmethod
    def from_expression(cls, expr, fd_step: float = 1e-5) -> "ScalarField":
        """Wrap a parsed expression (theta-free) with finite-difference derivatives."""
        if "theta" in expr.variables:
            raise ValueError(f"scalar field {expr.text!r} may not depend on theta")
        return cls(lambda x, y: expr(x, y), fd_step=fd_step, label=expr.text)


ZERO = ScalarField.const(0.0)


@dataclass(frozen=True)
class ConformalChart:
    """Planar domain with conformal factor e^{psi}.

    ``inside`` is a strict membership predicate (boundary points are outside).
    ``curvature`` optionally gives the analytic Gauss curvature K(x, y).
    """

    name: str
    psi: ScalarField
    inside: Callable
    bbox: tuple
    weight_phi: ScalarField = ZERO
    factor: Optional[Callable] = None
    curvature: Optional[Callable] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.validate:
            xs = np.linspace(self.bbox[0], self.bbox[1], 23)[1:-1]
            ys = np.linspace(self.bbox[2], self.bbox[3], 23)[1:-1]
            X, Y = np.meshgrid(xs, ys)
            m = self.contains(X, Y)
            X, Y = X[m], Y[m]
            if X.size == 0:
                raise ValueError(f"chart {self.name!r}: no domain points inside the bounding box")
            with np.errstate(all="ignore"):
                vals = [self.psi(X, Y), *self.psi.grad(X, Y), *self.psi.hess(X, Y)]
            if not all(np.all(np.isfinite(v)) for v in vals):
                raise ValueError(f"chart {self.name!r}: psi or its derivatives not finite in the domain")

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.bbox[1] - self.bbox[0], self.bbox[3] - self.bbox[2]))

    def contains(self, x, y):
        with np.errstate(invalid="ignore"):
            return np.asarray(self.inside(np.asarray(x, float), np.asarray(y, float)), dtype=bool) & np.isfinite(x) & np.isfinite(y)

    def require(self, x, y):
        if not np.all(self.contains(x, y)):
            raise DomainError(f"point(s) outside the domain of chart {self.name!r}")

    def conformal_factor(self, x, y):
        """e^{psi(x, y)}."""
        if self.factor is not None:
            return self.factor(x, y)
        return np.exp(self.psi(x, y))

    def area_density(self, x, y, phi: Optional[ScalarField] = None):
        """e^{2 psi - phi}: density of omega = e^{-phi} omega_g in chart coordinates."""
        phi = self.weight_phi if phi is None else phi
        e = self.conformal_factor(x, y)
        if phi.is_zero:
            return e * e
        return e * e * np.exp(-phi(x, y))

    def gauss_curvature_fd(self, x, y):
        fxx, _, fyy = self.psi.hess(x, y)
        e = self.conformal_factor(x, y)
        return -(fxx + fyy) / (e * e)

    def gauss_curvature(self, x, y):
        if self.curvature is not None:
            return self.curvature(x, y)
        return self.gauss_curvature_fd(x, y)

    def with_weight(self, phi: ScalarField) -> "ConformalChart":
        return ConformalChart(self.name, self.psi, self.inside, self.bbox, phi,
                              self.factor, self.curvature, validate=False)


@dataclass(frozen=True)
class TangentVec:
    base: tuple
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(c) for c in self.base))
        object.__setattr__(self, "components", tuple(float(c) for c in self.components))


def _vec(w):
    return w if isinstance(w, TangentVec) else TangentVec(*w)


def metric_norm(chart: ConformalChart, w) -> float:
    """|w|_g = e^{psi(base)} |w|."""
    w = _vec(w)
    chart.require(*w.base)
    return float(chart.conformal_factor(*w.base) * np.hypot(*w.components))


def gauss_curvature(chart: ConformalChart, p) -> float:
    """K = -e^{-2 psi} (psi_xx + psi_yy)."""
    chart.require(*p)
    return float(chart.gauss_curvature(*p))


def grad_norm(chart: ConformalChart, f: ScalarField, p) -> float:
    """|grad f|_g = e^{-psi} |grad f| (Euclidean gradient)."""
    chart.require(*p)
    fx, fy = f.grad(*p)
    return float(np.hypot(fx, fy) / chart.conformal_factor(*p))


def rotate90(chart: ConformalChart, w) -> TangentVec:
    """Positive quarter turn; a chart rotation is a g-isometry for conformal g."""
    w = _vec(w)
    chart.require(*w.base)
    u, v = w.components
    return TangentVec(w.base, (-v, u))


# ---------------------------------------------------------------- built-ins

def _r2(x, y):
    return x * x + y * y


def euclidean(radius: Optional[float] = None, punctured: bool = False, name: Optional[str] = None) -> ConformalChart:
    """Flat plane, optionally restricted to an open disc and/or punctured at 0."""
    if radius is None:
        inside = (lambda x, y: _r2(x, y) > 0) if punctured else (lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)), bool))
        bbox = (-10.0, 10.0, -10.0, 10.0)
    else:
        R2 = float(radius) ** 2
        inside = (lambda x, y: (_r2(x, y) < R2) & (_r2(x, y) > 0)) if punctured else (lambda x, y: _r2(x, y) < R2)
        bbox = (-radius, radius, -radius, radius)
    if name is None:
        name = "euclidean" if radius is None else f"euclidean_disc({radius:g})"
        if punctured:
            name = "punctured_" + name
    return ConformalChart(name, ZERO, inside, bbox, factor=lambda x, y: 1.0 + _zeros_like(x, y),
                          curvature=lambda x, y: _zeros_like(x, y))


def _log_ratio_psi(sign: float) -> ScalarField:
    # psi = log(2 / (1 + sign r^2)); sign=-1 disk, sign=+1 sphere
    def val(x, y):
        return np.log(2.0 / (1.0 + sign * _r2(x, y)))

    def grad(x, y):
        d = 1.0 + sign * _r2(x, y)
        return -2 * sign * x / d, -2 * sign * y / d

    def hess(x, y):
        d = 1.0 + sign * _r2(x, y)
        fxx = -2 * sign / d + 4 * x * x / (d * d)
        fyy = -2 * sign / d + 4 * y * y / (d * d)
        fxy = 4 * x * y / (d * d)
        return fxx, fxy, fyy

    return ScalarField(val, grad, hess, label=f"log(2/(1{'+' if sign > 0 else '-'}r^2))")


def poincare_disk() -> ConformalChart:
    return ConformalChart(
        "poincare_disk", _log_ratio_psi(-1.0), lambda x, y: _r2(x, y) < 1.0, (-1.0, 1.0, -1.0, 1.0),
        factor=lambda x, y: 2.0 / (1.0 - _r2(x, y)), curvature=lambda x, y: -1.0 + _zeros_like(x, y))


def stereographic_sphere() -> ConformalChart:
    return ConformalChart(
        "stereographic_sphere", _log_ratio_psi(1.0), lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)), bool),
        (-10.0, 10.0, -10.0, 10.0), factor=lambda x, y: 2.0 / (1.0 + _r2(x, y)),
        curvature=lambda x, y: 1.0 + _zeros_like(x, y))


def half_plane() -> ConformalChart:
    psi = ScalarField(
        lambda x, y: -np.log(y) + 0 * x,
        lambda x, y: (_zeros_like(x, y), -1.0 / y + 0 * x),
        lambda x, y: (_zeros_like(x, y), _zeros_like(x, y), 1.0 / (y * y) + 0 * x),
        label="-log(y)",
    )
    return ConformalChart(
        "half_plane", psi, lambda x, y: y > 0, (-5.0, 5.0, 0.0, 10.0),
        factor=lambda x, y: 1.0 / y + 0 * x, curvature=lambda x, y: -1.0 + _zeros_like(x, y))


BUILTIN_CHARTS = {
    "euclidean": euclidean,
    "punctured_plane": lambda: euclidean(punctured=True, name="punctured_plane"),
    "poincare_disk": poincare_disk,
    "half_plane": half_plane,
    "stereographic_sphere": stereographic_sphere,
}


def builtin_chart(name: str, **params) -> ConformalChart:
    if name == "euclidean_disc":
        return euclidean(radius=params.get("radius", 1.0))
    try:
        return BUILTIN_CHARTS[name]()
    except KeyError:
        raise ValueError(f"unknown chart {name!r}; known: {sorted(BUILTIN_CHARTS) + ['euclidean_disc']}") from None


def chart_from_expression(psi_text: str, bbox, inside_text: Optional[str] = None,
                          name: str = "user", phi_text: Optional[str] = None) -> ConformalChart:
    """User chart: psi given as an expression; domain = open bbox (and inside_text > 0 if given)."""
    from .expr import parse_expression

    bbox = tuple(float(b) for b in bbox)
    step = 1e-5 * float(np.hypot(bbox[1] - bbox[0], bbox[3] - bbox[2]))
    psi = ScalarField.from_expression(parse_expression(psi_text), fd_step=step)
    cond = None if inside_text is None else parse_expression(inside_text)

    def inside(x, y):
        m = (x > bbox[0]) & (x < bbox[1]) & (y > bbox[2]) & (y < bbox[3])
        if cond is not None:
            m = m & (cond(x, y) > 0)
        return m

    phi = ZERO if phi_text is None else ScalarField.from_expression(parse_expression(phi_text), fd_step=step)
    return ConformalChart(name, psi, inside, bbox, weight_phi=phi)
