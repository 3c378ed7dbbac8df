# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kinematics and separation-scan kernels.

Mirrors `_kernels_py` operation for operation; keep the two in lockstep.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, atan2, asin, sqrt, fmod, fabs

cnp.import_array()

cdef double PI = 3.141592653589793
cdef double DEG2RAD = PI / 180.0
cdef double RAD2DEG = 180.0 / PI


cdef inline double norm360(double a) nogil:
    a = fmod(a, 360.0)
    if a < 0.0:
        a = a + 360.0
    if a >= 360.0:
        a = a - 360.0
    return a


cdef inline double bearing(double dx, double dy) nogil:
    return norm360(atan2(dx, dy) * RAD2DEG)


cdef inline double wind_corrected_heading(double track, double tas, double wx, double wy) nogil:
    cdef double tr = track * DEG2RAD
    cdef double cross = wx * cos(tr) - wy * sin(tr)
    cdef double ratio = cross / tas
    if ratio > 1.0:
        ratio = 1.0
    elif ratio < -1.0:
        ratio = -1.0
    return norm360(track - asin(ratio) * RAD2DEG)


def propagate(double x, double y, double fl, double hdg, double tas, double cleared,
              double climb, double descent, double turn_rate,
              bint mode_hdg, double target_hdg,
              rx_in, ry_in, rfl_in, Py_ssize_t idx,
              double wx, double wy, double dt, Py_ssize_t nsteps, double capture):
    cdef double[::1] rx = np.ascontiguousarray(rx_in, dtype=np.float64)
    cdef double[::1] ry = np.ascontiguousarray(ry_in, dtype=np.float64)
    cdef double[::1] rfl = np.ascontiguousarray(rfl_in, dtype=np.float64)
    cdef Py_ssize_t n = rx.shape[0]
    out_x = np.empty(nsteps + 1)
    out_y = np.empty(nsteps + 1)
    out_f = np.empty(nsteps + 1)
    out_h = np.empty(nsteps + 1)
    cdef double[::1] X = out_x
    cdef double[::1] Y = out_y
    cdef double[::1] F = out_f
    cdef double[::1] H = out_h
    cdef Py_ssize_t k
    cdef double diameter, dx, dy, d, off, lvl, trk, target, diff, max_turn, hr, vx, vy
    cdef bint passed
    X[0] = x
    Y[0] = y
    F[0] = fl
    H[0] = hdg
    with nogil:
        for k in range(1, nsteps + 1):
            if mode_hdg:
                target = target_hdg
            else:
                diameter = 2.0 * (tas / 3600.0) / (turn_rate * DEG2RAD)
                while idx < n:
                    dx = rx[idx] - x
                    dy = ry[idx] - y
                    d = sqrt(dx * dx + dy * dy)
                    passed = d <= capture
                    if not passed and d < diameter:
                        off = fmod(bearing(dx, dy) - hdg + 540.0, 360.0) - 180.0
                        passed = off > 90.0 or off < -90.0
                    if not passed:
                        break
                    lvl = rfl[idx]
                    if lvl == lvl:
                        cleared = lvl
                    idx += 1
                if idx < n:
                    trk = bearing(rx[idx] - x, ry[idx] - y)
                    target = wind_corrected_heading(trk, tas, wx, wy)
                else:
                    target = hdg
            diff = fmod(target - hdg + 540.0, 360.0) - 180.0
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
            vx = tas * sin(hr) + wx
            vy = tas * cos(hr) + wy
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
            X[k] = x
            Y[k] = y
            F[k] = fl
            H[k] = hdg
    return out_x, out_y, out_f, out_h, idx, cleared


def pair_scan(X_in, Y_in, F_in, valid_in, double lat_min, double vert_min):
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[:, ::1] Y = np.ascontiguousarray(Y_in, dtype=np.float64)
    cdef double[:, ::1] F = np.ascontiguousarray(F_in, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] V = np.ascontiguousarray(valid_in, dtype=np.uint8)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t T = X.shape[1]
    cdef Py_ssize_t P = n * (n - 1) // 2
    cdef Py_ssize_t K = T - 1 if T > 1 else 0
    out_v = np.zeros((P, K), dtype=np.uint8)
    out_tin = np.zeros((P, K))
    out_dmin = np.zeros((P, K))
    out_tmin = np.zeros((P, K))
    out_vmin = np.zeros((P, K))
    cdef cnp.uint8_t[:, ::1] viol = out_v
    cdef double[:, ::1] tin = out_tin
    cdef double[:, ::1] dmin = out_dmin
    cdef double[:, ::1] tmin = out_tmin
    cdef double[:, ::1] vmin = out_vmin
    cdef Py_ssize_t i, j, k, p
    cdef double rx0, ry0, h0, dx, dy, dh, a, b, r2, c, disc, sq
    cdef double lat_lo, lat_hi, v_lo, v_hi, ta, tb, lo, hi, ts, h1, val
    cdef bint lat_any, v_any, moving
    with nogil:
        p = 0
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(K):
                    rx0 = X[i, k] - X[j, k]
                    ry0 = Y[i, k] - Y[j, k]
                    h0 = F[i, k] - F[j, k]
                    dx = (X[i, k + 1] - X[j, k + 1]) - rx0
                    dy = (Y[i, k + 1] - Y[j, k + 1]) - ry0
                    dh = (F[i, k + 1] - F[j, k + 1]) - h0
                    a = dx * dx + dy * dy
                    b = 2.0 * (rx0 * dx + ry0 * dy)
                    r2 = rx0 * rx0 + ry0 * ry0
                    c = r2 - lat_min * lat_min
                    moving = a > 1e-18
                    if moving:
                        disc = b * b - 4.0 * a * c
                        lat_any = disc > 0.0
                        sq = sqrt(disc) if disc > 0.0 else 0.0
                        lat_lo = (-b - sq) / (2.0 * a)
                        lat_hi = (-b + sq) / (2.0 * a)
                        ts = -b / (2.0 * a)
                        if ts < 0.0:
                            ts = 0.0
                        elif ts > 1.0:
                            ts = 1.0
                    else:
                        lat_any = c < 0.0
                        lat_lo = 0.0
                        lat_hi = 1.0
                        ts = 0.0
                    if fabs(dh) > 1e-12:
                        ta = (-vert_min - h0) / dh
                        tb = (vert_min - h0) / dh
                        v_lo = ta if ta < tb else tb
                        v_hi = tb if ta < tb else ta
                        v_any = True
                    else:
                        v_lo = 0.0
                        v_hi = 1.0
                        v_any = fabs(h0) < vert_min
                    lo = lat_lo if lat_lo > v_lo else v_lo
                    if lo < 0.0:
                        lo = 0.0
                    hi = lat_hi if lat_hi < v_hi else v_hi
                    if hi > 1.0:
                        hi = 1.0
                    if V[i, k] and V[j, k] and V[i, k + 1] and V[j, k + 1] \
                            and lat_any and v_any and lo < hi:
                        viol[p, k] = 1
                        tin[p, k] = lo
                    val = a * ts * ts + b * ts + r2
                    dmin[p, k] = sqrt(val) if val > 0.0 else 0.0
                    tmin[p, k] = ts
                    h1 = h0 + dh
                    if h0 * h1 <= 0.0:
                        vmin[p, k] = 0.0
                    else:
                        vmin[p, k] = fabs(h0) if fabs(h0) < fabs(h1) else fabs(h1)
                p += 1
    return out_v, out_tin, out_dmin, out_tmin, out_vmin
