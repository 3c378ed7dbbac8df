"""Pure-Python kinematics and separation-scan kernels.

This module is the reference implementation and the fallback used when the
compiled `_kernels` extension is unavailable. `_kernels.pyx` mirrors the
arithmetic here operation for operation (same libm calls, same evaluation
order), so both backends produce identical trajectories.
"""
from __future__ import annotations

import math

import numpy as np

DEG2RAD = math.pi / 180.0
RAD2DEG = 180.0 / math.pi

_sin = math.sin
_cos = math.cos
_atan2 = math.atan2
_asin = math.asin
_sqrt = math.sqrt
_fmod = math.fmod


def norm360(a: float) -> float:
    a = _fmod(a, 360.0)
    if a < 0.0:
        a = a + 360.0
    if a >= 360.0:
        a = a - 360.0
    return a


def bearing(dx: float, dy: float) -> float:
    return norm360(_atan2(dx, dy) * RAD2DEG)


def wind_corrected_heading(track: float, tas: float, wx: float, wy: float) -> float:
    """Heading that makes good `track` over the ground in wind (wx, wy)."""
    tr = track * DEG2RAD
    cross = wx * _cos(tr) - wy * _sin(tr)
    ratio = cross / tas
    if ratio > 1.0:
        ratio = 1.0
    elif ratio < -1.0:
        ratio = -1.0
    return norm360(track - _asin(ratio) * RAD2DEG)


def advance_route(x, y, hdg, tas, turn_rate, rx, ry, rfl, idx, n, capture, cleared):
    """Skip captured or passed route points; returns (idx, cleared).

    A point is captured inside `capture` NM. A point closer than one turn
    diameter that lies behind the aircraft (more than 90 deg off the nose)
    is treated as passed, since pure pursuit could only orbit it.
    """
    diameter = 2.0 * (tas / 3600.0) / (turn_rate * DEG2RAD)
    while idx < n:
        dx = rx[idx] - x
        dy = ry[idx] - y
        d = _sqrt(dx * dx + dy * dy)
        passed = d <= capture
        if not passed and d < diameter:
            off = _fmod(bearing(dx, dy) - hdg + 540.0, 360.0) - 180.0
            passed = off > 90.0 or off < -90.0
        if not passed:
            break
        lvl = rfl[idx]
        if lvl == lvl:  # not NaN
            cleared = lvl
        idx += 1
    return idx, cleared


def step_scalar(x, y, fl, hdg, tas, cleared, climb, descent, turn_rate,
                mode_hdg, target_hdg, rx, ry, rfl, idx, wx, wy, dt, capture):
    """One fixed-step kinematic update. Returns (x, y, fl, hdg, idx, cleared)."""
    n = len(rx)
    if mode_hdg:
        target = target_hdg
    else:
        idx, cleared = advance_route(x, y, hdg, tas, turn_rate, rx, ry, rfl, idx, n,
                                     capture, cleared)
        if idx < n:
            trk = bearing(rx[idx] - x, ry[idx] - y)
            target = wind_corrected_heading(trk, tas, wx, wy)
        else:
            target = hdg
    diff = _fmod(target - hdg + 540.0, 360.0) - 180.0
    if diff == -180.0:
        diff = 180.0
    max_turn = turn_rate * dt
    if diff <= max_turn and diff >= -max_turn:
        hdg = target
    elif diff > 0.0:
        hdg = norm360(hdg + max_turn)
    else:
        hdg = norm360(hdg - max_turn)
    hr = hdg * DEG2RAD
    vx = tas * _sin(hr) + wx
    vy = tas * _cos(hr) + wy
    x = x + vx * dt / 3600.0
    y = y + vy * dt / 3600.0
    if fl < cleared:
        fl = fl + climb * dt / 6000.0
        if fl > cleared:
            fl = cleared
    elif fl > cleared:
        fl = fl - descent * dt / 6000.0
        if fl < cleared:
            fl = cleared
    return x, y, fl, hdg, idx, cleared


def propagate(x, y, fl, hdg, tas, cleared, climb, descent, turn_rate,
              mode_hdg, target_hdg, rx, ry, rfl, idx, wx, wy, dt, nsteps, capture):
    """Integrate `nsteps` steps; returns (X, Y, FL, HDG, idx, cleared).

    Output arrays have nsteps + 1 samples, the first being the input state.
    """
    rx = [float(v) for v in rx]
    ry = [float(v) for v in ry]
    rfl = [float(v) for v in rfl]
    X = np.empty(nsteps + 1)
    Y = np.empty(nsteps + 1)
    F = np.empty(nsteps + 1)
    H = np.empty(nsteps + 1)
    X[0], Y[0], F[0], H[0] = x, y, fl, hdg
    for k in range(1, nsteps + 1):
        x, y, fl, hdg, idx, cleared = step_scalar(
            x, y, fl, hdg, tas, cleared, climb, descent, turn_rate,
            mode_hdg, target_hdg, rx, ry, rfl, idx, wx, wy, dt, capture)
        X[k], Y[k], F[k], H[k] = x, y, fl, hdg
    return X, Y, F, H, idx, cleared


def pair_scan(X, Y, F, valid, lat_min, vert_min):
    """Exact separation check between consecutive samples of every pair.

    Positions and levels are linearly interpolated inside each sample
    interval. For P = n(n-1)/2 pairs (i < j, row-major) and T samples,
    returns arrays of shape (P, T-1):

    viol  -- 1 where both minima are broken somewhere inside the interval
    t_in  -- first violating fraction of the interval (0..1)
    dmin  -- minimum lateral distance over the interval (NM)
    tmin  -- fraction at which dmin occurs
    vmin  -- minimum |level difference| over the interval (FL)
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    F = np.asarray(F, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    n, T = X.shape
    ii, jj = np.triu_indices(n, k=1)
    P = len(ii)
    if P == 0 or T < 2:
        shape = (P, max(T - 1, 0))
        return (np.zeros(shape, np.uint8), np.zeros(shape), np.zeros(shape),
                np.zeros(shape), np.zeros(shape))
    rx = X[ii] - X[jj]
    ry = Y[ii] - Y[jj]
    h = F[ii] - F[jj]
    ok = valid[ii] & valid[jj]
    ok = ok[:, :-1] & ok[:, 1:]
    rx0, ry0, h0 = rx[:, :-1], ry[:, :-1], h[:, :-1]
    dx, dy, dh = rx[:, 1:] - rx0, ry[:, 1:] - ry0, h[:, 1:] - h0
    a = dx * dx + dy * dy
    b = 2.0 * (rx0 * dx + ry0 * dy)
    r2 = rx0 * rx0 + ry0 * ry0
    c = r2 - lat_min * lat_min

    moving = a > 1e-18
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.where(disc > 0.0, disc, 0.0))
        lat_lo = np.where(moving, (-b - sq) / (2.0 * a), 0.0)
        lat_hi = np.where(moving, (-b + sq) / (2.0 * a), 1.0)
        lat_any = np.where(moving, disc > 0.0, c < 0.0)

        vmov = np.abs(dh) > 1e-12
        ta = (-vert_min - h0) / dh
        tb = (vert_min - h0) / dh
        v_lo = np.where(vmov, np.minimum(ta, tb), 0.0)
        v_hi = np.where(vmov, np.maximum(ta, tb), 1.0)
        v_any = np.where(vmov, True, np.abs(h0) < vert_min)

        lo = np.maximum(np.maximum(lat_lo, v_lo), 0.0)
        hi = np.minimum(np.minimum(lat_hi, v_hi), 1.0)
        viol = ok & lat_any & v_any & (lo < hi)

        ts = np.where(moving, np.clip(-b / (2.0 * a), 0.0, 1.0), 0.0)
    dmin = np.sqrt(np.maximum(a * ts * ts + b * ts + r2, 0.0))
    h1 = h0 + dh
    vmin = np.where(h0 * h1 <= 0.0, 0.0, np.minimum(np.abs(h0), np.abs(h1)))
    t_in = np.where(viol, lo, 0.0)
    return viol.astype(np.uint8), t_in, dmin, ts, vmin
