"""Batched evaluation kernels for curves, surfaces, and compensated sums.

Every kernel exists twice: a numba ``@njit`` version for the hot loops and a
vectorized pure-numpy fallback.  The backend is chosen once at import time:
numba is used when it imports cleanly, unless the environment variable
``FOLDQUAD_PURE_NUMPY`` is set to a non-empty value other than ``0``.

All curve/surface kernels work on *homogeneous* control data: an ``(m, c)``
array whose columns are either plain coordinates (polynomial entities) or
``(w*x, w*y[, w*z], w)`` rows (rational entities).  Projection back to
Cartesian coordinates happens in :mod:`foldquad.splines`, which keeps the
kernels free of branching on entity kind.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "backend",
    "bezier_eval",
    "bezier_eval_deriv",
    "bspline_eval",
    "surface_eval",
    "surface_eval_partials",
    "kahan_dot",
]


def _want_numba() -> bool:
    flag = os.environ.get("FOLDQUAD_PURE_NUMPY", "").strip()
    return flag in ("", "0")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def bezier_eval_np(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    """De Casteljau evaluation of a Bezier row array at parameters t.

    ctrl: (m, c) control rows, t: (N,) -> (N, c).
    """
    m = ctrl.shape[0]
    b = np.broadcast_to(ctrl[:, None, :], (m, t.shape[0], ctrl.shape[1])).copy()
    s = t[None, :, None]
    for level in range(m - 1):
        b = (1.0 - s[0]) * b[: m - 1 - level] + s[0] * b[1 : m - level]
    return b[0]


def bezier_eval_deriv_np(ctrl: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and first derivative of a Bezier row array; (N, c) each."""
    m = ctrl.shape[0]
    if m == 1:
        vals = np.broadcast_to(ctrl[0], (t.shape[0], ctrl.shape[1])).copy()
        return vals, np.zeros_like(vals)
    b = np.broadcast_to(ctrl[:, None, :], (m, t.shape[0], ctrl.shape[1])).copy()
    s = t[:, None]
    for level in range(m - 2):
        b = (1.0 - s) * b[: m - 1 - level] + s * b[1 : m - level]
    vals = (1.0 - s) * b[0] + s * b[1]
    derivs = (m - 1.0) * (b[1] - b[0])
    return vals, derivs


def bspline_eval_np(knots: np.ndarray, ctrl: np.ndarray, degree: int, t: np.ndarray) -> np.ndarray:
    """De Boor evaluation of a clamped b-spline at parameters t; (N, c)."""
    n_ctrl = ctrl.shape[0]
    lo, hi = knots[degree], knots[n_ctrl]
    tt = np.clip(t, lo, hi)
    span = np.searchsorted(knots, tt, side="right") - 1
    span = np.clip(span, degree, n_ctrl - 1)
    # gather the degree+1 active control rows per point
    idx = span[:, None] + np.arange(-degree, 1)[None, :]
    d = ctrl[idx].astype(float)  # (N, degree+1, c)
    for r in range(1, degree + 1):
        for j in range(degree, r - 1, -1):
            left = knots[idx[:, j]]
            right = knots[idx[:, j] + degree - r + 1]
            denom = right - left
            alpha = np.where(denom > 0.0, (tt - left) / np.where(denom > 0.0, denom, 1.0), 0.0)
            d[:, j] = (1.0 - alpha)[:, None] * d[:, j - 1] + alpha[:, None] * d[:, j]
    return d[:, degree]


def surface_eval_np(net: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Tensor-product Bezier surface evaluation; net (mu, mv, c) -> (N, c)."""
    mu, mv = net.shape[0], net.shape[1]
    rows = np.broadcast_to(net[:, :, None, :], (mu, mv, u.shape[0], net.shape[2])).copy()
    s = v[None, :, None]
    for level in range(mv - 1):
        rows = (1.0 - s[0]) * rows[:, : mv - 1 - level] + s[0] * rows[:, 1 : mv - level]
    b = rows[:, 0]  # (mu, N, c)
    s = u[:, None]
    for level in range(mu - 1):
        b = (1.0 - s) * b[: mu - 1 - level] + s * b[1 : mu - level]
    return b[0]


def surface_eval_partials_np(
    net: np.ndarray, u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value and both first partials of a tensor-product Bezier net."""
    mu, mv = net.shape[0], net.shape[1]
    rows = np.broadcast_to(net[:, :, None, :], (mu, mv, u.shape[0], net.shape[2])).copy()
    s = v[None, :, None]
    if mv == 1:
        a = rows[:, 0]
        da = np.zeros_like(a)
    else:
        for level in range(mv - 2):
            rows = (1.0 - s[0]) * rows[:, : mv - 1 - level] + s[0] * rows[:, 1 : mv - level]
        a = (1.0 - s[0]) * rows[:, 0] + s[0] * rows[:, 1]
        da = (mv - 1.0) * (rows[:, 1] - rows[:, 0])

    def collapse_u(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if mu == 1:
            return b[0], np.zeros_like(b[0])
        su = u[:, None]
        for level in range(mu - 2):
            b = (1.0 - su) * b[: mu - 1 - level] + su * b[1 : mu - level]
        val = (1.0 - su) * b[0] + su * b[1]
        der = (mu - 1.0) * (b[1] - b[0])
        return val, der

    vals, du = collapse_u(a.copy())
    dv, _ = collapse_u(da)
    return vals, du, dv


def kahan_dot_np(vals: np.ndarray, weights: np.ndarray) -> float:
    """Exact compensated dot product (math.fsum on the products)."""
    return math.fsum((vals * weights).tolist())


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_HAVE_NUMBA = False
if _want_numba():
    try:
        import numba

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False

if _HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def bezier_eval_nb(ctrl, t):
        m, c = ctrl.shape
        n = t.shape[0]
        out = np.empty((n, c))
        b = np.empty((m, c))
        for q in range(n):
            s = t[q]
            for i in range(m):
                for k in range(c):
                    b[i, k] = ctrl[i, k]
            for level in range(m - 1):
                for i in range(m - 1 - level):
                    for k in range(c):
                        b[i, k] = (1.0 - s) * b[i, k] + s * b[i + 1, k]
            for k in range(c):
                out[q, k] = b[0, k]
        return out

    @_njit
    def bezier_eval_deriv_nb(ctrl, t):
        m, c = ctrl.shape
        n = t.shape[0]
        vals = np.empty((n, c))
        ders = np.empty((n, c))
        b = np.empty((m, c))
        for q in range(n):
            s = t[q]
            for i in range(m):
                for k in range(c):
                    b[i, k] = ctrl[i, k]
            if m == 1:
                for k in range(c):
                    vals[q, k] = b[0, k]
                    ders[q, k] = 0.0
                continue
            for level in range(m - 2):
                for i in range(m - 1 - level):
                    for k in range(c):
                        b[i, k] = (1.0 - s) * b[i, k] + s * b[i + 1, k]
            for k in range(c):
                vals[q, k] = (1.0 - s) * b[0, k] + s * b[1, k]
                ders[q, k] = (m - 1.0) * (b[1, k] - b[0, k])
        return vals, ders

    @_njit
    def bspline_eval_nb(knots, ctrl, degree, t):
        n_ctrl, c = ctrl.shape
        n = t.shape[0]
        out = np.empty((n, c))
        d = np.empty((degree + 1, c))
        lo = knots[degree]
        hi = knots[n_ctrl]
        for q in range(n):
            tt = min(max(t[q], lo), hi)
            span = degree
            while span < n_ctrl - 1 and knots[span + 1] <= tt:
                span += 1
            for j in range(degree + 1):
                for k in range(c):
                    d[j, k] = ctrl[span - degree + j, k]
            for r in range(1, degree + 1):
                for j in range(degree, r - 1, -1):
                    left = knots[span - degree + j]
                    right = knots[span + j - r + 1]
                    denom = right - left
                    alpha = 0.0
                    if denom > 0.0:
                        alpha = (tt - left) / denom
                    for k in range(c):
                        d[j, k] = (1.0 - alpha) * d[j - 1, k] + alpha * d[j, k]
            for k in range(c):
                out[q, k] = d[degree, k]
        return out

    @_njit
    def surface_eval_nb(net, u, v):
        mu, mv, c = net.shape
        n = u.shape[0]
        out = np.empty((n, c))
        row = np.empty((mv, c))
        col = np.empty((mu, c))
        for q in range(n):
            su = u[q]
            sv = v[q]
            for i in range(mu):
                for j in range(mv):
                    for k in range(c):
                        row[j, k] = net[i, j, k]
                for level in range(mv - 1):
                    for j in range(mv - 1 - level):
                        for k in range(c):
                            row[j, k] = (1.0 - sv) * row[j, k] + sv * row[j + 1, k]
                for k in range(c):
                    col[i, k] = row[0, k]
            for level in range(mu - 1):
                for i in range(mu - 1 - level):
                    for k in range(c):
                        col[i, k] = (1.0 - su) * col[i, k] + su * col[i + 1, k]
            for k in range(c):
                out[q, k] = col[0, k]
        return out

    @_njit
    def surface_eval_partials_nb(net, u, v):
        mu, mv, c = net.shape
        n = u.shape[0]
        vals = np.empty((n, c))
        dus = np.empty((n, c))
        dvs = np.empty((n, c))
        row = np.empty((mv, c))
        a = np.empty((mu, c))
        da = np.empty((mu, c))
        col = np.empty((mu, c))
        for q in range(n):
            su = u[q]
            sv = v[q]
            for i in range(mu):
                for j in range(mv):
                    for k in range(c):
                        row[j, k] = net[i, j, k]
                if mv == 1:
                    for k in range(c):
                        a[i, k] = row[0, k]
                        da[i, k] = 0.0
                else:
                    for level in range(mv - 2):
                        for j in range(mv - 1 - level):
                            for k in range(c):
                                row[j, k] = (1.0 - sv) * row[j, k] + sv * row[j + 1, k]
                    for k in range(c):
                        a[i, k] = (1.0 - sv) * row[0, k] + sv * row[1, k]
                        da[i, k] = (mv - 1.0) * (row[1, k] - row[0, k])
            if mu == 1:
                for k in range(c):
                    vals[q, k] = a[0, k]
                    dus[q, k] = 0.0
                    dvs[q, k] = da[0, k]
                continue
            for i in range(mu):
                for k in range(c):
                    col[i, k] = a[i, k]
            for level in range(mu - 2):
                for i in range(mu - 1 - level):
                    for k in range(c):
                        col[i, k] = (1.0 - su) * col[i, k] + su * col[i + 1, k]
            for k in range(c):
                vals[q, k] = (1.0 - su) * col[0, k] + su * col[1, k]
                dus[q, k] = (mu - 1.0) * (col[1, k] - col[0, k])
            for i in range(mu):
                for k in range(c):
                    col[i, k] = da[i, k]
            for level in range(mu - 1):
                for i in range(mu - 1 - level):
                    for k in range(c):
                        col[i, k] = (1.0 - su) * col[i, k] + su * col[i + 1, k]
            for k in range(c):
                dvs[q, k] = col[0, k]
        return vals, dus, dvs

    @_njit
    def kahan_dot_nb(vals, weights):
        total = 0.0
        comp = 0.0
        for i in range(vals.shape[0]):
            term = vals[i] * weights[i] - comp
            tentative = total + term
            comp = (tentative - total) - term
            total = tentative
        return total


if _HAVE_NUMBA:
    BACKEND = "numba"
    bezier_eval = bezier_eval_nb
    bezier_eval_deriv = bezier_eval_deriv_nb
    bspline_eval = bspline_eval_nb
    surface_eval = surface_eval_nb
    surface_eval_partials = surface_eval_partials_nb
    kahan_dot = kahan_dot_nb
else:
    BACKEND = "numpy"
    bezier_eval = bezier_eval_np
    bezier_eval_deriv = bezier_eval_deriv_np
    bspline_eval = bspline_eval_np
    surface_eval = surface_eval_np
    surface_eval_partials = surface_eval_partials_np
    kahan_dot = kahan_dot_np


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
