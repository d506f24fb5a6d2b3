import numpy as np
import pytest

from spraylab.ode import StepUnderflow, integrate_batch


def oscillator(Y):
    return np.column_stack([Y[:, 1], -Y[:, 0]])


def test_oscillator_batch_and_dense_samples():
    y0 = np.array([[1.0, 0.0], [0.0, 2.0]])
    L = np.array([np.pi, 2.0])
    s = np.linspace(0, 1, 11)
    res = integrate_batch(oscillator, y0, L, s_eval=s)
    t = L[None, :] * s[:, None]
    want_x = np.stack([np.cos(t[:, 0]), 2 * np.sin(t[:, 1])], axis=1)
    assert np.abs(res.at[:, :, 0] - want_x).max() < 1e-9
    assert res.y[0] == pytest.approx([-1.0, 0.0], abs=1e-9)
    assert not res.exited.any() and np.all(res.s_exit == 1.0)


def test_negative_length_runs_backwards():
    res = integrate_batch(oscillator, [[1.0, 0.0]], -np.pi / 2)
    assert res.y[0] == pytest.approx([0.0, 1.0], abs=1e-9)


def test_exit_detection_freezes_row():
    inside = lambda Y: Y[:, 0] < 0.5
    res = integrate_batch(lambda Y: np.ones_like(Y), [[0.0, 0.0], [-5.0, 0.0]], 1.0, inside=inside,
                          s_eval=[0.25, 1.0])
    assert res.exited.tolist() == [True, False]
    assert res.s_exit[0] == pytest.approx(0.5, abs=1e-8)
    assert np.isnan(res.at[1, 0]).all() and res.at[0, 0, 0] == pytest.approx(0.25)


def test_history_is_recorded():
    res = integrate_batch(oscillator, [[1.0, 0.0]], 1.0, record=True)
    s, ys, fs = res.history
    assert s[0] == 0.0 and s[-1] == pytest.approx(1.0)
    assert np.allclose(ys[:, 0, 0], np.cos(s), atol=1e-9)


def test_max_steps():
    with pytest.raises(StepUnderflow):
        integrate_batch(oscillator, [[1.0, 0.0]], 1e4, max_steps=10)


def test_error_norm_columns():
    # a wild third column is ignored when only two columns enter the norm
    f = lambda Y: np.column_stack([Y[:, 1], -Y[:, 0], 1e3 * np.sin(1e3 * Y[:, 0])])
    a = integrate_batch(f, [[1.0, 0.0, 0.0]], 1.0, err_cols=2)
    b = integrate_batch(f, [[1.0, 0.0, 0.0]], 1.0)
    assert a.n_accepted < b.n_accepted
    assert a.y[0, 0] == pytest.approx(np.cos(1.0), abs=1e-8)
