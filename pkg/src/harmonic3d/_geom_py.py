"""Pure-Python rotated-rectangle overlap kernels.

Fallback for :mod:`harmonic3d._geomkernel`; both modules expose the same
functions and must agree to floating-point rounding.
"""

import math

import numpy as np

EDGE_TOL = 1e-9
AREA_EPS = 1e-12


def _signed_area(poly):
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def _clip(subject, e0, e1):
    ex = e1[0] - e0[0]
    ey = e1[1] - e0[1]
    elen = math.hypot(ex, ey)
    tol = EDGE_TOL * elen
    out = []
    n = len(subject)
    for i in range(n):
        cur = subject[i]
        prev = subject[i - 1]
        # positive side of a CCW edge is the interior
        c_cur = ex * (cur[1] - e0[1]) - ey * (cur[0] - e0[0])
        c_prev = ex * (prev[1] - e0[1]) - ey * (prev[0] - e0[0])
        in_cur = c_cur >= -tol
        in_prev = c_prev >= -tol
        if in_cur:
            if not in_prev:
                t = c_prev / (c_prev - c_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append(cur)
        elif in_prev:
            t = c_prev / (c_prev - c_cur)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
    return out


def quad_intersection_area(a, b):
    """Area of the intersection of two convex quadrilaterals.

    Either winding order is accepted. Degenerate quads give 0.
    """
    pa = [(float(x), float(y)) for x, y in a]
    pb = [(float(x), float(y)) for x, y in b]
    sa = _signed_area(pa)
    sb = _signed_area(pb)
    if abs(sa) < AREA_EPS or abs(sb) < AREA_EPS:
        return 0.0
    if sa < 0:
        pa.reverse()
    if sb < 0:
        pb.reverse()
    poly = pa
    for i in range(4):
        poly = _clip(poly, pb[i], pb[(i + 1) % 4])
        if len(poly) < 3:
            return 0.0
    return abs(_signed_area(poly))


def box_corners(x, y, l, w, yaw):
    c = math.cos(yaw)
    s = math.sin(yaw)
    hl = 0.5 * l
    hw = 0.5 * w
    out = []
    for u, v in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        out.append((x + u * c - v * s, y + u * s + v * c))
    return out


def bev_intersection_matrix(boxes_a, boxes_b):
    """Pairwise BEV footprint intersection areas for (N, 7) and (M, 7) box arrays."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    n, m = len(boxes_a), len(boxes_b)
    out = np.zeros((n, m))
    if n == 0 or m == 0:
        return out
    ra = 0.5 * np.hypot(boxes_a[:, 3], boxes_a[:, 4])
    rb = 0.5 * np.hypot(boxes_b[:, 3], boxes_b[:, 4])
    dist = np.hypot(boxes_a[:, None, 0] - boxes_b[None, :, 0],
                    boxes_a[:, None, 1] - boxes_b[None, :, 1])
    ii, jj = np.nonzero(dist < ra[:, None] + rb[None, :])
    corners_a = {}
    corners_b = {}
    for i, j in zip(ii.tolist(), jj.tolist()):
        ca = corners_a.get(i)
        if ca is None:
            ba = boxes_a[i]
            ca = corners_a[i] = box_corners(ba[0], ba[1], ba[3], ba[4], ba[6])
        cb = corners_b.get(j)
        if cb is None:
            bb = boxes_b[j]
            cb = corners_b[j] = box_corners(bb[0], bb[1], bb[3], bb[4], bb[6])
        out[i, j] = quad_intersection_area(ca, cb)
    return out
