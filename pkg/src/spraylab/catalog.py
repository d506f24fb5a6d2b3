"""Built-in example sprays, each with a chart, weight, working region and expected verdict."""
from __future__ import annotations

import inspect
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .curvature import GridSpec, check_nnc
from .expr import parse_expression
from .sets import Annulus, Disc, Region
from .spray import SprayField, cot_k
from .surface import ZERO, ConformalChart, ScalarField, euclidean, half_plane, stereographic_sphere


@dataclass(frozen=True)
class GeodesicSeed:
    start: tuple
    theta0: float
    T: float


@dataclass
class CatalogEntry:
    name: str
    chart: ConformalChart
    spray: SprayField
    phi: ScalarField
    working: Region
    expected_verdict: str
    expected_min: Optional[float]
    notes: str
    grid: Optional[GridSpec] = None
    seed: Optional[GeodesicSeed] = None            # geodesic used for Jacobi checks and violation search
    params: dict = field(default_factory=dict)

    def grid_spec(self) -> GridSpec:
        return self.grid if self.grid is not None else GridSpec.for_region(self.working)

    def self_test(self):
        rep = check_nnc(self.chart, self.spray, self.phi, self.grid_spec())
        if rep.verdict != self.expected_verdict:
            raise AssertionError(f"catalog entry {self.name!r}: expected {self.expected_verdict}, got {rep.verdict} "
                                 f"(minimum {rep.minimum:.3g})")
        return rep


def _kappa(value, grad, label):
    return ScalarField(value, grad, label=label)


def _flat_lines():
    return CatalogEntry("flat_lines", euclidean(), SprayField.geodesic(), ZERO, Disc((0, 0), 1.0),
                        "nonnegative", 0.0, "Euclidean straight lines.",
                        seed=GeodesicSeed((-0.8, 0.1), 0.0, 1.6))


def _horocycles():
    return CatalogEntry("horocycles", half_plane(), SprayField.magnetic(1.0, "horocycles"), ZERO,
                        Disc((0, 1), 0.5), "nonnegative", 0.0,
                        "Unit-speed horocycles in the hyperbolic plane: K + kappa^2 = -1 + 1 = 0.",
                        seed=GeodesicSeed((0.0, 0.6), 0.0, 1.0))


def _norwich():
    kap = _kappa(lambda x, y: 1.0 / np.hypot(x, y),
                 lambda x, y: (-x / np.hypot(x, y) ** 3, -y / np.hypot(x, y) ** 3), "1/r")
    return CatalogEntry("norwich", euclidean(punctured=True, name="punctured_plane"),
                        SprayField.magnetic(kap, "norwich"), ZERO, Annulus((0, 0), 0.05, 5.0),
                        "nonnegative", 0.0,
                        "kappa = 1/r on the punctured plane; curves a(t^2+1) e^{i(t - 2 atan t + b)}. "
                        "The working region excludes r < 0.05.",
                        grid=GridSpec.polar((0, 0), 0.05, 5.0, 100, 64),
                        seed=GeodesicSeed((1.0, 0.0), -np.pi / 2, 2.0))


def _seiffert():
    def val(x, y):
        r2 = x * x + y * y
        return (1 - r2) / (1 + r2)

    def grad(x, y):
        d = (1 + x * x + y * y) ** 2
        return -4 * x / d, -4 * y / d

    return CatalogEntry("seiffert", stereographic_sphere(), SprayField.magnetic(_kappa(val, grad, "z"), "seiffert"),
                        ZERO, Annulus((0, 0), 0.2, 3.0), "nonnegative", 0.0,
                        "Unit sphere, kappa = height z = (1 - r^2)/(1 + r^2); the condition "
                        "1 + z^2 - sqrt(1 - z^2) vanishes on the equator r = 1. Both poles are avoided.",
                        grid=GridSpec.polar((0, 0), 0.2, 3.0, 57, 64),
                        seed=GeodesicSeed((0.5, 0.0), np.pi / 2, 1.5))


def _circular_arcs(r=0.5, R=1.0):
    r, R = float(r), float(R)
    if not 0 < r <= R:
        raise ValueError("circular_arcs needs 0 < r <= R")
    return CatalogEntry(f"circular_arcs", euclidean(radius=r), SprayField.magnetic(1.0 / R, "circular_arcs"), ZERO,
                        Disc((0, 0), 0.999 * r), "nonnegative", 1.0 / R**2,
                        f"Arcs of circles of radius R={R:g} on the open disc of radius r={r:g}.",
                        seed=GeodesicSeed((-0.8 * r, -0.3 * r), 0.0, 1.4 * r), params={"r": r, "R": R})


_COTK_DEFAULT_F = {-1: "log(y)+2", 0: "x+2", 1: "2*atan(r)"}


def _cotk(K=-1, f=None):
    K = int(K)
    if K not in _COTK_DEFAULT_F:
        raise ValueError("cotK supports K in {-1, 0, 1}")
    f = _COTK_DEFAULT_F[K] if f is None else f
    chart, working, seed = {
        -1: (half_plane(), Disc((0, 1), 0.5), GeodesicSeed((0.0, 0.6), 0.0, 1.0)),
        0: (euclidean(), Disc((0, 0), 0.9), GeodesicSeed((-0.7, 0.0), 0.3, 1.4)),
        1: (stereographic_sphere(), Annulus((0, 0), 0.2, 3.0), GeodesicSeed((0.5, 0.0), np.pi / 2, 1.5)),
    }[K]
    fe = ScalarField.from_expression(parse_expression(str(f)), fd_step=1e-5 * working.diameter)

    def val(x, y):
        return cot_k(K, fe(x, y))

    def grad(x, y):
        u = fe(x, y)
        fx, fy = fe.grad(x, y)
        if K > 0:
            d = -K / np.sin(np.sqrt(K) * u) ** 2
        elif K == 0:
            d = -1.0 / u**2
        else:
            d = K / np.sinh(np.sqrt(-K) * u) ** 2
        return d * fx, d * fy

    return CatalogEntry("cotK", chart, SprayField.magnetic(_kappa(val, grad, f"cot_K({f})"), "cotK"), ZERO, working,
                        "nonnegative", 0.0,
                        f"kappa = cot_K(f) with K={K}, f = {f}; nonnegative whenever f is 1-Lipschitz.",
                        seed=seed, params={"K": K, "f": f})


def _hyperbolic_geodesics():
    return CatalogEntry("hyperbolic_geodesics", half_plane(), SprayField.geodesic(), ZERO, Disc((0, 1), 0.5),
                        "negative", -1.0,
                        "Riemannian geodesics of the hyperbolic plane (K = -1, kappa = 0); violates the condition.",
                        seed=GeodesicSeed((0.0, 0.3), np.pi / 2, 2.6))


def _kappa_3x():
    kap = _kappa(lambda x, y: 3.0 * x + 0 * y, lambda x, y: (3.0 + 0 * x + 0 * y, 0 * x + 0 * y), "3x")
    return CatalogEntry("kappa_3x", euclidean(), SprayField.magnetic(kap, "kappa_3x"), ZERO, Disc((0, 0), 1.0),
                        "negative", -3.0,
                        "Euclidean plane with kappa = 3x: condition value 9x^2 - 3, minimum -3 at the origin.",
                        seed=GeodesicSeed((0.0, 0.9), -np.pi / 2, 1.8))


_BUILDERS = {
    "flat_lines": _flat_lines,
    "horocycles": _horocycles,
    "norwich": _norwich,
    "seiffert": _seiffert,
    "circular_arcs": _circular_arcs,
    "cotK": _cotk,
    "hyperbolic_geodesics": _hyperbolic_geodesics,
    "kappa_3x": _kappa_3x,
}

NAMES = tuple(_BUILDERS)


def builtin(name: str, self_test: bool = True, **params) -> CatalogEntry:
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown catalog entry {name!r}; known: {', '.join(NAMES)}") from None
    entry = build(**params)
    entry.working.check_in(entry.chart)
    if self_test:
        entry.self_test()
    return entry


def norwich_closed_form(a: float, b: float, t):
    """a (t^2 + 1) e^{i (t - 2 atan t + b)} as chart coordinates."""
    if not a > 0:
        raise ValueError("a must be positive")
    t = np.asarray(t, float)
    z = a * (t * t + 1) * np.exp(1j * (t - 2 * np.arctan(t) + b))
    if z.ndim == 0:
        return np.array([z.real, z.imag])
    return np.column_stack([z.real, z.imag])


def _value(text: str):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text.strip("'\"")


def _split_args(text: str):
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += (ch == "(") - (ch == ")")
        cur += ch
    if cur.strip():
        parts.append(cur)
    return parts


def parse_entry(spec):
    """'name', 'name(a, b, key=c)' or {'name': ..., 'params': {...}} -> (name, params)."""
    if isinstance(spec, dict):
        return spec["name"], dict(spec.get("params", {}))
    m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*", spec)
    if not m:
        raise ValueError(f"malformed catalog entry {spec!r}")
    name, args = m.group(1), m.group(2)
    if name not in _BUILDERS:
        raise ValueError(f"unknown catalog entry {name!r}; known: {', '.join(NAMES)}")
    params = {}
    if args:
        names = list(inspect.signature(_BUILDERS[name]).parameters)
        for i, a in enumerate(_split_args(args)):
            if "=" in a and not a.strip().startswith(("'", '"')):
                k, v = a.split("=", 1)
                params[k.strip()] = _value(v)
            elif i < len(names):
                params[names[i]] = _value(a)
            else:
                raise ValueError(f"too many arguments for {name}")
    return name, params


def entry_from_spec(spec, self_test: bool = True) -> CatalogEntry:
    name, params = parse_entry(spec)
    return builtin(name, self_test=self_test, **params)
