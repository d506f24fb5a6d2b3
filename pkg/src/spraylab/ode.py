"""Batched Dormand-Prince 5(4) with a shared step size.

All trajectories in a batch advance with the same step in the normalised
time s in [0, 1]; trajectory i solves dy/ds = L_i f(y), so its physical time
is L_i s. A shared step keeps finite-difference variations (Jacobians, Jacobi
fields) smooth in the perturbation parameter, which per-trajectory adaptivity
would not.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_AM = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _AM[_i, :len(_row)] = _row
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class StepUnderflow(RuntimeError):
    pass


@dataclass
class BatchResult:
    y: np.ndarray            # (n, d) final states (frozen at exit for exited rows)
    exited: np.ndarray       # (n,) bool
    s_exit: np.ndarray       # (n,) normalised time of exit (1 for survivors)
    at: Optional[np.ndarray]  # (m, n, d) states at requested s values (nan after exit)
    n_accepted: int
    n_rejected: int
    history: Optional[tuple] = None  # (s, y, dyds) arrays over accepted steps


def integrate_batch(fun: Callable, y0, L, *, rtol: float = 1e-10, atol: float = 1e-10,
                    s_eval=None, inside: Optional[Callable] = None, record: bool = False,
                    h_min: float = 1e-13, exit_step: float = 1e-9, max_steps: int = 200000,
                    err_cols: Optional[int] = None) -> BatchResult:
    """Integrate dy/ds = L f(y) for s in [0, 1] for a batch of initial states.

    ``fun(Y) -> dY`` acts on (m, d) arrays. Rows whose trial state becomes
    non-finite or leaves ``inside`` force step rejection; once the step falls
    below ``exit_step`` those rows are frozen and flagged as exited. Only the
    first ``err_cols`` components enter the error norm when it is given.
    """
    y = np.array(y0, dtype=float, copy=True)
    n, d = y.shape
    L = np.broadcast_to(np.asarray(L, dtype=float), (n,)).copy()
    exited = np.zeros(n, bool)
    s_exit = np.ones(n)
    s_eval = np.array([] if s_eval is None else s_eval, dtype=float)
    order = np.argsort(s_eval)
    targets = s_eval[order]
    at = np.full((len(targets), n, d), np.nan) if len(targets) else None
    ti = 0
    while ti < len(targets) and targets[ti] <= 0.0:
        at[order[ti]] = y
        ti += 1

    def F(Y, Ls):
        return Ls[:, None] * fun(Y)

    active = np.arange(n)
    k1 = F(y, L)
    bad0 = ~np.all(np.isfinite(k1), axis=1)
    if inside is not None:
        bad0 |= ~np.asarray(inside(y), bool)
    if bad0.any():
        exited[bad0] = True
        s_exit[bad0] = 0.0
        active = active[~bad0]
        k1 = k1[~bad0]

    hist_s, hist_y, hist_f = ([0.0], [y.copy()], [np.zeros_like(y)]) if record else (None, None, None)
    if record and active.size:
        hist_f[0][active] = k1

    s = 0.0
    scale0 = np.max(np.abs(k1)) if active.size else 1.0
    h = min(1.0, 0.05 / max(scale0, 1e-12)) if scale0 > 0 else 1.0
    n_acc = n_rej = 0
    while s < 1.0 and active.size:
        if n_acc + n_rej > max_steps:
            raise StepUnderflow("maximum number of steps exceeded")
        h = min(h, 1.0 - s)
        h_free = h
        next_target = None
        if ti < len(targets) and targets[ti] <= s + h:
            h = targets[ti] - s
            next_target = targets[ti]
        ya = y[active]
        La = L[active]
        K = np.empty((7,) + ya.shape)
        K[0] = k1
        with np.errstate(all="ignore"):
            for i in range(1, 7):
                yi = ya + np.tensordot(h * _AM[i, :i], K[:i], axes=1)
                K[i] = F(yi, La)
            y_new = yi  # stage 7 point equals the 5th-order solution (FSAL)
            err_vec = np.tensordot(h * _E, K, axes=1)
            c = slice(None) if err_cols is None else slice(0, err_cols)
            sc = atol + rtol * np.maximum(np.abs(ya[:, c]), np.abs(y_new[:, c]))
            err_rows = np.max(np.abs(err_vec[:, c]) / sc, axis=1)
        ks = K
        bad = ~np.isfinite(err_rows) | ~np.all(np.isfinite(ks[6]), axis=1)
        if inside is not None:
            bad |= ~np.asarray(inside(y_new), bool)
        if bad.any():
            if h > exit_step:
                h *= 0.25
                n_rej += 1
                continue
            idx = active[bad]
            exited[idx] = True
            s_exit[idx] = s
            keep = ~bad
            active = active[keep]
            k1 = k1[keep]
            continue
        err = float(np.max(err_rows)) if err_rows.size else 0.0
        if err <= 1.0:
            if next_target is not None:
                s_new = next_target
            else:
                s_new = 1.0 if s + h >= 1.0 - 1e-13 else s + h
            y[active] = y_new
            k1 = ks[6]
            s = s_new
            n_acc += 1
            if record:
                hist_s.append(s)
                hist_y.append(y.copy())
                f = np.zeros_like(y)
                f[active] = k1
                hist_f.append(f)
            while ti < len(targets) and targets[ti] <= s + 1e-15:
                at[order[ti]][active] = y[active]
                ti += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = h * fac if next_target is None else max(h * fac, h_free)
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < h_min:
                raise StepUnderflow(f"step size underflow at s={s:.6g}")
    history = None
    if record:
        history = (np.array(hist_s), np.stack(hist_y), np.stack(hist_f))
    return BatchResult(y, exited, s_exit, at, n_acc, n_rej, history)
