# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rotated-rectangle overlap kernels.

Mirrors :mod:`harmonic3d._geom_py` function for function.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, hypot, fabs, sqrt

cnp.import_array()

DEF MAXV = 16
cdef double EDGE_TOL = 1e-9
cdef double AREA_EPS = 1e-12


cdef double _signed_area(double* px, double* py, int n) nogil:
    cdef double s = 0.0
    cdef int i, j
    for i in range(n):
        j = (i + 1) % n
        s += px[i] * py[j] - px[j] * py[i]
    return 0.5 * s


cdef int _clip(double* sx, double* sy, int n,
               double e0x, double e0y, double e1x, double e1y,
               double* ox, double* oy) nogil:
    cdef double ex = e1x - e0x
    cdef double ey = e1y - e0y
    cdef double tol = EDGE_TOL * hypot(ex, ey)
    cdef int i, k = 0
    cdef int ip
    cdef double c_cur, c_prev, t
    cdef bint in_cur, in_prev
    for i in range(n):
        ip = i - 1 if i > 0 else n - 1
        c_cur = ex * (sy[i] - e0y) - ey * (sx[i] - e0x)
        c_prev = ex * (sy[ip] - e0y) - ey * (sx[ip] - e0x)
        in_cur = c_cur >= -tol
        in_prev = c_prev >= -tol
        if in_cur:
            if not in_prev:
                t = c_prev / (c_prev - c_cur)
                ox[k] = sx[ip] + t * (sx[i] - sx[ip])
                oy[k] = sy[ip] + t * (sy[i] - sy[ip])
                k += 1
            ox[k] = sx[i]
            oy[k] = sy[i]
            k += 1
        elif in_prev:
            t = c_prev / (c_prev - c_cur)
            ox[k] = sx[ip] + t * (sx[i] - sx[ip])
            oy[k] = sy[ip] + t * (sy[i] - sy[ip])
            k += 1
    return k


cdef double _quad_area(double* ax, double* ay, double* bx, double* by) nogil:
    cdef double px[MAXV]
    cdef double py[MAXV]
    cdef double qx[MAXV]
    cdef double qy[MAXV]
    cdef double tx, ty
    cdef double sa = _signed_area(ax, ay, 4)
    cdef double sb = _signed_area(bx, by, 4)
    cdef int i, n
    cdef double cbx[4]
    cdef double cby[4]
    if fabs(sa) < AREA_EPS or fabs(sb) < AREA_EPS:
        return 0.0
    for i in range(4):
        if sa < 0:
            px[i] = ax[3 - i]
            py[i] = ay[3 - i]
        else:
            px[i] = ax[i]
            py[i] = ay[i]
        if sb < 0:
            cbx[i] = bx[3 - i]
            cby[i] = by[3 - i]
        else:
            cbx[i] = bx[i]
            cby[i] = by[i]
    n = 4
    for i in range(4):
        n = _clip(px, py, n, cbx[i], cby[i], cbx[(i + 1) % 4], cby[(i + 1) % 4], qx, qy)
        if n < 3:
            return 0.0
        for k in range(n):
            px[k] = qx[k]
            py[k] = qy[k]
    return fabs(_signed_area(px, py, n))


cdef void _corners(double x, double y, double l, double w, double yaw,
                   double* cx, double* cy) nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double hl = 0.5 * l
    cdef double hw = 0.5 * w
    cdef double us[4]
    cdef double vs[4]
    cdef int i
    us[0] = hl; vs[0] = hw
    us[1] = -hl; vs[1] = hw
    us[2] = -hl; vs[2] = -hw
    us[3] = hl; vs[3] = -hw
    for i in range(4):
        cx[i] = x + us[i] * c - vs[i] * s
        cy[i] = y + us[i] * s + vs[i] * c


def quad_intersection_area(a, b):
    """Area of the intersection of two convex quadrilaterals."""
    cdef double ax[4]
    cdef double ay[4]
    cdef double bx[4]
    cdef double by[4]
    cdef int i
    pa = list(a)
    pb = list(b)
    if len(pa) != 4 or len(pb) != 4:
        raise ValueError("expected 4 corners per quad")
    for i in range(4):
        ax[i] = float(pa[i][0])
        ay[i] = float(pa[i][1])
        bx[i] = float(pb[i][0])
        by[i] = float(pb[i][1])
    return _quad_area(ax, ay, bx, by)


def bev_intersection_matrix(boxes_a, boxes_b):
    """Pairwise BEV footprint intersection areas for (N, 7) and (M, 7) box arrays."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.ascontiguousarray(
        np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] B = np.ascontiguousarray(
        np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7))
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t m = B.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ca = np.empty((n, 8))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cb = np.empty((m, 8))
    cdef double[:, ::1] Av = A
    cdef double[:, ::1] Bv = B
    cdef double[:, ::1] outv = out
    cdef double[:, ::1] cav = ca
    cdef double[:, ::1] cbv = cb
    cdef Py_ssize_t i, j
    cdef double ra, rb, dx, dy
    with nogil:
        for i in range(n):
            _corners(Av[i, 0], Av[i, 1], Av[i, 3], Av[i, 4], Av[i, 6], &cav[i, 0], &cav[i, 4])
        for j in range(m):
            _corners(Bv[j, 0], Bv[j, 1], Bv[j, 3], Bv[j, 4], Bv[j, 6], &cbv[j, 0], &cbv[j, 4])
        for i in range(n):
            ra = 0.5 * hypot(Av[i, 3], Av[i, 4])
            for j in range(m):
                rb = 0.5 * hypot(Bv[j, 3], Bv[j, 4])
                dx = Av[i, 0] - Bv[j, 0]
                dy = Av[i, 1] - Bv[j, 1]
                if hypot(dx, dy) >= ra + rb:
                    continue
                outv[i, j] = _quad_area(&cav[i, 0], &cav[i, 4], &cbv[j, 0], &cbv[j, 4])
    return out
