import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import entry
from spraylab.catalog import NAMES
from spraylab.sets import Annulus
from spraylab.spray import (SprayField, cot_k, exp_map, integrate, log_map, log_map_batch, shoot,
                            spray_from_expression)
from spraylab.surface import DomainError, TangentVec, euclidean, half_plane, metric_norm

FLAT = euclidean()
LINES = SprayField.geodesic()
ARCS = SprayField.magnetic(1.0)


def test_flat_line():
    tr = integrate(FLAT, LINES, (0, 0), 0.0, 5.0)
    assert tr.endpoint == pytest.approx([5.0, 0.0], abs=1e-12)
    assert tr.theta[-1] == pytest.approx(0.0, abs=1e-12)


def test_half_circle():
    tr = integrate(FLAT, ARCS, (0, 0), 0.0, np.pi)
    assert tr.endpoint == pytest.approx([0.0, 2.0], abs=1e-9)
    assert tr.theta[-1] == pytest.approx(np.pi, abs=1e-9)


def test_positive_curvature_turns_left():
    tr = integrate(FLAT, ARCS, (0, 0), 0.0, 0.1)
    assert tr.y[-1] > 0


def test_unit_speed_samples():
    for name in ("horocycles", "seiffert", "norwich"):
        e = entry(name)
        tr = integrate(e.chart, e.spray, e.seed.start, e.seed.theta0, e.seed.T)
        rel = np.abs(tr.g_lengths(e.chart) / np.diff(tr.t) - 1.0)
        assert rel.max() <= 1e-8, name


def test_domain_exit_returns_partial():
    disc = euclidean(radius=1.0)
    tr = integrate(disc, LINES, (0.0, 0.0), 0.0, 5.0)
    assert tr.exited and tr.t[-1] == pytest.approx(1.0, abs=1e-6)
    assert disc.contains(*tr.endpoint)
    with pytest.raises(DomainError):
        integrate(half_plane(), LINES, (0.0, -1.0), 0.0, 1.0)


def test_t_eval_validation():
    with pytest.raises(ValueError):
        integrate(FLAT, LINES, (0, 0), 0.0, 1.0, t_eval=[2.0])


def test_exp_examples():
    assert exp_map(FLAT, LINES, (0, 0), (3, 4)) == pytest.approx([3, 4], abs=1e-12)
    assert exp_map(half_plane(), ARCS, (0.3, 2.0), (0, 0)).tolist() == [0.3, 2.0]
    assert exp_map(FLAT, ARCS, (0, 0), (np.pi, 0.0)) == pytest.approx([0, 2], abs=1e-9)


def test_log_examples():
    assert log_map(FLAT, LINES, (0, 0), (1, 1)).components == pytest.approx((1, 1), abs=1e-9)
    # (0, 2) lies on the envelope of the unit circles through the origin, where
    # the differential of exp is singular and Newton converges only linearly
    v = log_map(FLAT, ARCS, (0, 0), (0, 2))
    assert np.hypot(*v.components) == pytest.approx(np.pi, abs=1e-4)
    assert np.arctan2(v.components[1], v.components[0]) == pytest.approx(0.0, abs=1e-3)
    assert log_map(FLAT, ARCS, (0.5, 0.5), (0.5, 0.5)).components == (0.0, 0.0)


def test_log_prefers_shortest_solution():
    # two unit circles join (0,0) to (1,0) counterclockwise; the short arc has length pi/3
    v = log_map(FLAT, ARCS, (0, 0), (1, 0))
    assert np.hypot(*v.components) == pytest.approx(np.pi / 3, abs=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2 * np.pi), st.floats(0.1, 1.5))
def test_homogeneity(theta, L):
    chart, spray = half_plane(), ARCS
    x = (0.2, 1.0)
    v = np.array([np.cos(theta), np.sin(theta)]) * L / chart.conformal_factor(*x)
    tr = integrate(chart, spray, x, theta, L, tol=1e-12, t_eval=L * np.array([0.25, 0.5, 0.75, 1.0]))
    for f in (0.25, 0.5, 0.75, 1.0):
        got = exp_map(chart, spray, x, f * v, tol=1e-12)
        assert np.hypot(*(got - tr.at(f * L)[0, :2])) <= 1e-8
    assert metric_norm(chart, TangentVec(x, v)) == pytest.approx(L)


def _small_disc_pairs(e, rng, n=100):
    """Two point sets in a disc of 15% of the working region's width."""
    W = e.working
    if isinstance(W, Annulus):
        c = np.asarray(W.center) + (0.5 * (W.r_in + W.r_out), 0.0)
        rad = 0.15 * (W.r_out - W.r_in) / 2
    else:
        c = np.asarray(W.center, float)
        rad = 0.15 * W.radius

    def pts():
        a = rng.uniform(0, 2 * np.pi, n)
        r = rad * np.sqrt(rng.uniform(0, 1, n))
        return c + np.column_stack([r * np.cos(a), r * np.sin(a)])

    return pts(), pts()


@pytest.mark.parametrize("name", NAMES)
def test_round_trip(name):
    e = entry(name)
    rng = np.random.default_rng(1)
    X, Y = _small_disc_pairs(e, rng)
    res = log_map_batch(e.chart, e.spray, X, Y, tol=1e-11, ode_tol=1e-12)
    assert res.converged.all()
    end = shoot(e.chart, e.spray, X, res.V, tol=1e-12).end[:, :2]
    assert np.hypot(*(end - Y).T).max() <= 1e-8


@pytest.mark.parametrize("name", ["horocycles", "seiffert", "kappa_3x", "norwich"])
def test_reversal_retraces(name):
    e = entry(name)
    s = e.seed
    tr = integrate(e.chart, e.spray, s.start, s.theta0, s.T, tol=1e-12)
    end = tr.states[-1]
    back = integrate(e.chart, e.spray.reverse(), end[:2], end[2] + np.pi, s.T, tol=1e-12, t_eval=s.T - tr.t[::-1])
    got = back.at(s.T - tr.t)[:, :2]
    assert np.abs(got - tr.states[:, :2]).max() <= 1e-7


def test_reverse_twice_is_identity():
    sp = entry("kappa_3x").spray
    rr = sp.reverse().reverse()
    assert rr.curvature(0.3, 0.1, 0.2) == sp.curvature(0.3, 0.1, 0.2)
    assert sp.reverse().kappa(0.3, 0.1) == -sp.kappa(0.3, 0.1)


def test_cot_k_examples():
    assert cot_k(0, 2.0) == 0.5
    assert cot_k(1, np.pi / 4) == pytest.approx(1.0)
    assert cot_k(-1, 3.0) == pytest.approx(1.0 / np.tanh(3.0))
    assert cot_k(-1, 3.0) == pytest.approx(1.004969, abs=1e-6)
    with pytest.raises(ValueError):
        cot_k(0, 0.0)


def test_spray_from_expression():
    m = spray_from_expression("3*x")
    assert m.is_magnetic and m.curvature(0.5, 0.0, 1.0) == pytest.approx(1.5)
    d = spray_from_expression("cos(theta)")
    assert not d.is_magnetic and d.curvature(0, 0, np.pi) == pytest.approx(-1.0)


def test_magnetic_consistency_check():
    from spraylab.surface import ScalarField
    with pytest.raises(ValueError):
        SprayField(lambda x, y, th: np.cos(th) + 0 * x, ScalarField.const(1.0))
