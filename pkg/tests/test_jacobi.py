import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import entry
from spraylab.jacobi import JacobiTrace, concavity_check, jacobi_trace, needle_bm_1d, ordered_average
from spraylab.spray import SprayField
from spraylab.surface import DomainError, ScalarField, euclidean, half_plane


def test_flat_parallel_lines():
    tr = jacobi_trace(euclidean(), SprayField.geodesic(), (0, 0), 0.3, 4.0, offset=(-np.sin(0.3), np.cos(0.3), 0))
    assert np.abs(tr.J - 1.0).max() < 1e-9


def test_flat_radial_is_linear():
    tr = jacobi_trace(euclidean(), SprayField.geodesic(), (0, 0), 0.0, 2.0)
    assert np.abs(tr.J - tr.t).max() < 1e-8


def test_weight_scales_density():
    c = 0.4
    tr0 = jacobi_trace(euclidean(), SprayField.geodesic(), (0, 0), 0.0, 1.0)
    tr1 = jacobi_trace(euclidean(), SprayField.geodesic(), (0, 0), 0.0, 1.0, phi=ScalarField.const(c))
    assert np.allclose(tr1.J, np.exp(-c) * tr0.J, atol=1e-14)


def test_hyperbolic_radial_is_sinh():
    # a geodesic through i in the half plane runs along the imaginary axis
    tr = jacobi_trace(half_plane(), SprayField.geodesic(), (0, 1), np.pi / 2, 2.0)
    assert np.abs(tr.J[1:] / np.sinh(tr.t[1:]) - 1).max() < 1e-6


@pytest.mark.parametrize("off", [(0, 0, 1), (1, 0, 0), (0.4, 0.2, -0.5)])
def test_horocycle_traces_are_affine(off):
    e = entry("horocycles")
    tr = jacobi_trace(e.chart, e.spray, (0.0, 1.0), 0.0, 1.5, offset=off)
    assert np.abs(tr.second_difference()).max() <= 1e-6


def test_nontransversal_rejected():
    with pytest.raises(ValueError, match="transversal"):
        jacobi_trace(euclidean(), SprayField.geodesic(), (0, 0), 0.0, 1.0, offset=(0, -1, 0))


def test_domain_exit():
    with pytest.raises(DomainError):
        jacobi_trace(euclidean(radius=1.0), SprayField.geodesic(), (0.5, 0), 0.0, 1.0)


def test_eps_robustness():
    e = entry("seiffert")
    s = e.seed
    a = jacobi_trace(e.chart, e.spray, s.start, s.theta0, s.T, eps=1e-4)
    b = jacobi_trace(e.chart, e.spray, s.start, s.theta0, s.T, eps=5e-5)
    assert np.abs(a.J - b.J).max() <= 1e-5 * np.abs(a.J).max()


def test_concavity_examples():
    t = np.linspace(0, 1, 101)
    r = concavity_check(JacobiTrace(t, t))
    assert r.concave and abs(r.max_second_difference) < 1e-9
    t = np.linspace(0, np.pi, 101)
    assert concavity_check(JacobiTrace(t, np.sin(t))).verdict == "concave"
    t = np.linspace(0, 1, 101)
    r = concavity_check(JacobiTrace(t, t**2))
    assert not r.concave and r.max_second_difference == pytest.approx(2.0)
    with pytest.raises(ValueError):
        concavity_check(JacobiTrace([0.0, 1.0], [0.0, 1.0]))
    with pytest.raises(ValueError):
        JacobiTrace([0.0, 1.0], [0.0, np.nan])


def test_negative_curvature_trace_not_concave():
    e = entry("hyperbolic_geodesics")
    s = e.seed
    tr = jacobi_trace(e.chart, e.spray, s.start, s.theta0, s.T)
    assert concavity_check(tr).verdict == "not concave"


# ------------------------------------------------------------ needle

def one(t):
    return np.ones_like(t)


def test_needle_uniform_example():
    r = needle_bm_1d(one, [(0, 0.1)], [(0.8, 1.0)], 0.5)
    assert r.M == [(0.4, 0.55)] or np.allclose(r.M, [(0.4, 0.55)])
    assert r.lhs == pytest.approx(np.sqrt(0.15), abs=1e-12)
    assert r.rhs == pytest.approx(0.5 * np.sqrt(0.1) + 0.5 * np.sqrt(0.2), abs=1e-12)
    assert r.rhs == pytest.approx(0.3817, abs=1e-4) and r.margin > 0


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.5, 1.0])
def test_needle_identity(lam):
    r = needle_bm_1d(one, [(0.2, 0.5)], [(0.2, 0.5)], lam)
    assert np.allclose(r.M, [(0.2, 0.5)])
    assert r.margin == pytest.approx(0.0, abs=1e-14)


def test_needle_tent():
    tent = lambda t: 1 - np.abs(2 * t - 1)
    r = needle_bm_1d(tent, [(0.1, 0.2)], [(0.7, 0.8)], 0.5)
    # exact integrals of the tent
    assert r.mu_A == pytest.approx(0.03, abs=1e-9) and r.mu_B == pytest.approx(0.05, abs=1e-9)
    assert np.allclose(r.M, [(0.4, 0.5)]) and r.mu_M == pytest.approx(0.09, abs=1e-9)
    assert r.margin > 0


def test_ordered_average_respects_order():
    assert ordered_average([(2, 3)], [(0, 1)], 0.5) == []
    assert ordered_average([(0, 2)], [(1, 3)], 0.5) == [(0.5, 2.5)]


def test_needle_sampled_density_and_errors():
    grid = np.linspace(0, 1, 11)
    r = needle_bm_1d((grid, np.ones_like(grid)), [(0, 0.1)], [(0.8, 1.0)], 0.5)
    assert r.mu_M == pytest.approx(0.15)
    with pytest.raises(ValueError):
        needle_bm_1d(one, [], [(0, 1)], 0.5)
    with pytest.raises(ValueError):
        needle_bm_1d(one, [(0, 1)], [(0, 1)], 1.5)
    with pytest.raises(ValueError):
        needle_bm_1d(one, [(1, 0)], [(0, 1)], 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.01, 0.3), st.floats(0.5, 0.95), st.floats(0.01, 0.3),
       st.floats(0.1, 0.9), st.floats(0.2, 5.0), st.floats(-3, 3), st.floats(-0.8, 0.8))
def test_needle_affine_invariance(a0, la, b0, lb, lam, alpha, beta, slope):
    f = lambda t: 1.0 + slope * t
    A, B = [(a0, a0 + la)], [(b0, min(b0 + lb, 1.0))]
    base = needle_bm_1d(f, A, B, lam)
    g = lambda s: f((s - beta) / alpha) / alpha          # pushforward density
    move = lambda ivs: [(alpha * a + beta, alpha * b + beta) for a, b in ivs]
    moved = needle_bm_1d(g, move(A), move(B), lam)
    assert moved.margin == pytest.approx(base.margin, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.4), st.floats(0.05, 0.3), st.floats(0.05, 0.3), st.floats(0.05, 0.95), st.floats(0, 1))
def test_needle_concave_forward_pairs_hold(a0, la, lb, lam, c):
    # A entirely before B: the forward transport exists and the inequality holds for concave densities
    f = lambda t: 1.0 + c * t * (2.0 - t)
    A, B = [(a0, a0 + la)], [(a0 + la + 0.1, a0 + la + 0.1 + lb)]
    assert needle_bm_1d(f, A, B, lam).margin >= -1e-12
