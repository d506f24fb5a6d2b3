import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import entry
from spraylab.metrize import (OneFormField, _eta_single, _square_residual, eta_form, radial_field,
                              verify_metrization)
from spraylab.sets import Disc
from spraylab.spray import SprayField
from spraylab.surface import euclidean

FLAT = euclidean()
LINES = SprayField.geodesic()
FAR = [(-5.0, 0.0), (5.0, 0.5), (0.0, -5.0)]


def flat_eta(bases, P):
    P = np.atleast_2d(P)
    out = 0
    for b in bases:
        D = P - np.asarray(b)
        out = out + D / np.hypot(D[:, 0], D[:, 1])[:, None]
    return out / len(bases)


def test_flat_radial_examples():
    v = radial_field(FLAT, LINES, (0, 0), (2, 0))
    assert np.allclose(v.components, (1, 0), atol=1e-9)
    v = radial_field(FLAT, LINES, (0, 0), (0, 3))
    assert np.allclose(v.components, (0, 1), atol=1e-9)


def test_arc_quarter_circle():
    # unit circles through (0,0) and (1,1): the short left-turning arc is centred at (0,1)
    v = radial_field(FLAT, SprayField.magnetic(1.0), (0, 0), (1, 1))
    assert np.allclose(v.components, (0, 1), atol=1e-7)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 1.4), st.floats(-np.pi, np.pi))
def test_arc_arrival_direction(d, a):
    # on the short arc of radius R the tangent turns by 2 asin(d/2R); arrival = chord + asin(d/2R)
    p = (d * np.cos(a), d * np.sin(a))
    v = radial_field(FLAT, SprayField.magnetic(1.0), (0, 0), p)
    want = a + np.arcsin(d / 2)
    assert np.allclose(v.components, (np.cos(want), np.sin(want)), atol=1e-7)


def test_far_bases_give_eta_near_dx():
    bases = [(-1e3, 0.0), (-1e3, 1.0), (-1e3 - 1.0, -2.0)]
    eta = eta_form(FLAT, LINES, bases, (0.1, 0.2))
    assert np.allclose(eta, (1, 0), atol=2e-3)
    assert np.hypot(*eta) < 1


def test_flat_form_matches_closed_form():
    rng = np.random.default_rng(3)
    P = rng.uniform(-0.5, 0.5, (40, 2))
    form = OneFormField(FLAT, LINES, FAR)
    assert np.abs(form(P) - flat_eta(FAR, P)).max() < 1e-9


def test_radial_covector_has_unit_norm():
    e = entry("horocycles")
    rng = np.random.default_rng(5)
    P = np.column_stack([rng.uniform(-0.3, 0.3, 30), rng.uniform(0.7, 1.3, 30)])
    eta = _eta_single(e.chart, e.spray, (0.9, 1.0), P)
    norm = np.hypot(eta[:, 0], eta[:, 1]) / e.chart.conformal_factor(P[:, 0], P[:, 1])
    assert np.abs(norm - 1).max() < 1e-8


def test_average_norm_below_one():
    rng = np.random.default_rng(6)
    P = rng.uniform(-0.5, 0.5, (50, 2))
    form = OneFormField(FLAT, LINES, FAR)
    assert form.g_norm(P).max() < 1


def test_base_point_rejected():
    with pytest.raises(ValueError, match="base point"):
        radial_field(FLAT, LINES, (0, 0), (0, 0))


def test_collinear_bases_rejected():
    with pytest.raises(ValueError, match="common spray geodesic"):
        OneFormField(FLAT, LINES, [(0, 0), (1, 0), (2, 0)])
    # three nearby points on one unit circle lie on one left-turning arc
    arc = [(np.cos(a), np.sin(a)) for a in (0.0, 0.5, 1.0)]
    with pytest.raises(ValueError, match="common spray geodesic"):
        OneFormField(FLAT, SprayField.magnetic(1.0), arc)


def test_noncollinear_bases_accepted():
    form = OneFormField(FLAT, LINES, [(0, 0), (1, 0), (0, 1)])
    assert form.unverified == []


def test_bad_base_sets():
    with pytest.raises(ValueError, match="three"):
        OneFormField(FLAT, LINES, [(0, 0), (1, 0)])
    with pytest.raises(ValueError, match="distinct"):
        OneFormField(FLAT, LINES, [(0, 0), (0, 0), (0, 1)])
    with pytest.raises(ValueError, match="magnetic"):
        OneFormField(FLAT, SprayField(lambda x, y, th: np.cos(th)), FAR)


def test_base_inside_region_rejected():
    with pytest.raises(ValueError, match="outside U"):
        verify_metrization(FLAT, LINES, Disc((0, 0), 1.0), [(0, 0), (5, 0), (0, 5)])


def test_flat_verification():
    rep = verify_metrization(FLAT, LINES, Disc((0, 0), 0.5), FAR, n_squares=16, n_perturb=20, n_pairs=5, seed=1)
    assert rep.stokes_max < 1e-10
    assert rep.n_beaten == 0 and rep.holds()
    # eta is the gradient of the mean distance, so the F-excess is the Euclidean length excess
    assert rep.min_excess > 0
    P = rep.grid[:, :2]
    assert np.abs(rep.grid[:, 2] - np.hypot(*flat_eta(FAR, P).T)).max() < 1e-9


def test_zero_perturbation_has_zero_excess():
    rep = verify_metrization(FLAT, LINES, Disc((0, 0), 0.5), FAR, n_squares=4, n_perturb=5, n_pairs=3,
                             amplitude=0.0)
    assert np.abs(rep.lengths).max() < 1e-12


def test_horocycle_stokes_single_base():
    # d eta_x = kappa omega_g already holds for one base
    e = entry("horocycles")
    one = OneFormField(e.chart, e.spray, [(-0.9, 1.0), (0.9, 1.0), (0.0, 0.4)])
    one.bases = ((0.9, 1.0),) * 3
    corners = np.array([[0.0, 1.0], [-0.2, 0.9], [0.1, 1.1]])
    side = np.full(3, 0.01)
    res = _square_residual(one, e.chart, e.spray.kappa, corners, side, 16)
    assert res.max() < 1e-6


def test_report_text():
    rep = verify_metrization(FLAT, LINES, Disc((0, 0), 0.5), FAR, n_squares=4, n_perturb=5, n_pairs=3)
    txt = rep.text()
    assert "delta" in txt and "verdict: metrized" in txt
