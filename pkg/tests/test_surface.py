import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spraylab.surface import (DomainError, ScalarField, TangentVec, builtin_chart, chart_from_expression,
                              euclidean, gauss_curvature, grad_norm, half_plane, metric_norm, poincare_disk,
                              rotate90, stereographic_sphere)

CHARTS = {"euclidean": (euclidean, 0.0), "poincare_disk": (poincare_disk, -1.0),
          "half_plane": (half_plane, -1.0), "stereographic_sphere": (stereographic_sphere, 1.0)}


def _interior_grid(chart, n=50):
    # the disc grid is the square inscribed in r <= 0.9, clear of the rim
    x0, x1, y0, y1 = (-0.63, 0.63, -0.63, 0.63) if chart.name == "poincare_disk" else chart.bbox
    X, Y = np.meshgrid(np.linspace(x0, x1, n + 2)[1:-1], np.linspace(y0, y1, n + 2)[1:-1])
    m = chart.contains(X, Y)
    return X[m], Y[m]


def _fd_curvature(chart, x, y):
    """Fourth-order five-point Laplacian of psi values only."""
    p = chart.psi
    h = 1e-3 * np.maximum(1.0, np.hypot(x, y))

    def d2(dx, dy):
        return (-p(x + 2 * dx, y + 2 * dy) + 16 * p(x + dx, y + dy) - 30 * p(x, y)
                + 16 * p(x - dx, y - dy) - p(x - 2 * dx, y - 2 * dy)) / (12 * h * h)

    lap = d2(h, 0) + d2(0, h)
    return -np.exp(-2 * p(x, y)) * lap


def test_metric_norm_examples():
    assert metric_norm(euclidean(), ((0, 0), (3, 4))) == 5.0
    assert metric_norm(poincare_disk(), ((0, 0), (1, 0))) == pytest.approx(2.0)
    for make, _ in CHARTS.values():
        c = make()
        x0, x1, y0, y1 = c.bbox
        base = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
        assert metric_norm(c, TangentVec(base, (0, 0))) == 0.0


def test_metric_norm_outside_domain():
    with pytest.raises(DomainError):
        metric_norm(poincare_disk(), ((1.0, 0.0), (1, 0)))
    with pytest.raises(DomainError):
        metric_norm(half_plane(), ((0.0, -1.0), (1, 0)))


def test_gauss_curvature_examples():
    assert gauss_curvature(euclidean(), (0.3, -7.0)) == 0.0
    assert gauss_curvature(poincare_disk(), (0.3, 0.1)) == pytest.approx(-1.0, abs=1e-12)
    assert gauss_curvature(stereographic_sphere(), (0.5, -0.2)) == pytest.approx(1.0, abs=1e-12)
    assert _fd_curvature(poincare_disk(), 0.3, 0.1) == pytest.approx(-1.0, abs=1e-6)
    assert _fd_curvature(stereographic_sphere(), 0.5, -0.2) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("name", list(CHARTS))
def test_builtin_curvature_constant_on_grid(name):
    make, K = CHARTS[name]
    c = make()
    x, y = _interior_grid(c)
    assert np.abs(c.gauss_curvature(x, y) - K).max() <= 1e-6
    assert np.abs(c.gauss_curvature_fd(x, y) - K).max() <= 1e-6
    assert np.abs(_fd_curvature(c, x, y) - K).max() <= 1e-6


def test_grad_norm_examples():
    fx = ScalarField(lambda x, y: x, lambda x, y: (1.0 + 0 * x, 0 * y))
    assert grad_norm(euclidean(), fx, (0.2, 0.4)) == 1.0
    assert grad_norm(poincare_disk(), ScalarField.const(3.0), (0.1, 0.1)) == 0.0
    assert grad_norm(poincare_disk(), fx, (0.0, 0.0)) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 10))
def test_grad_norm_homogeneous(c, y):
    f = ScalarField(lambda x, y: x * y, lambda x, y: (y, x))
    p = (0.3, y)
    assert grad_norm(half_plane(), f.scaled(c), p) == pytest.approx(abs(c) * grad_norm(half_plane(), f, p), rel=1e-12)


def test_rotate90_examples():
    w = rotate90(euclidean(), ((0, 0), (1, 0)))
    assert w.base == (0.0, 0.0) and w.components == (-0.0, 1.0) or w.components == (0.0, 1.0)
    v = rotate90(poincare_disk(), ((0, 0), (2, 0)))
    assert v.components[1] == 2.0 and abs(v.components[0]) == 0.0
    assert metric_norm(poincare_disk(), v) == pytest.approx(4.0)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(list(CHARTS)), st.floats(-0.9, 0.9), st.floats(0.05, 0.6), st.floats(-1e3, 1e3),
       st.floats(-1e3, 1e3))
def test_rotate90_isometry_and_period(name, x, y, u, v):
    c = CHARTS[name][0]()
    w = TangentVec((x * 0.7, y), (u, v))
    r = rotate90(c, w)
    assert abs(metric_norm(c, r) - metric_norm(c, w)) <= 1e-12 * max(1.0, metric_norm(c, w))
    r4 = rotate90(c, rotate90(c, rotate90(c, r)))
    assert r4.components == w.components and r4.base == w.base


def test_strict_domain():
    assert not poincare_disk().contains(1.0, 0.0)
    assert not half_plane().contains(0.0, 0.0)
    assert not euclidean(radius=1.0).contains(1.0, 0.0)
    assert not euclidean(punctured=True).contains(0.0, 0.0)


def test_builtin_chart_lookup():
    assert builtin_chart("half_plane").name == "half_plane"
    with pytest.raises(ValueError):
        builtin_chart("torus")


def test_chart_from_expression_matches_builtin():
    user = chart_from_expression("log(2/(1 + x^2 + y^2))", (-3, 3, -3, 3))
    ref = stereographic_sphere()
    x, y = _interior_grid(user, 20)
    assert np.allclose(user.conformal_factor(x, y), ref.conformal_factor(x, y), rtol=1e-13)
    assert np.abs(user.gauss_curvature(x, y) - 1.0).max() < 1e-4


def test_chart_rejects_nonfinite_psi():
    with pytest.raises(ValueError):
        chart_from_expression("log(x)", (-1, 1, -1, 1))
    c = chart_from_expression("log(x)", (-1, 1, -1, 1), inside_text="x")
    assert c.contains(0.5, 0.0) and not c.contains(-0.5, 0.0)


def test_weighted_area_density():
    c = euclidean().with_weight(ScalarField.const(0.5))
    assert c.area_density(0.1, 0.2) == pytest.approx(np.exp(-0.5))
