# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same arithmetic as ``_kernels_py``."""

import numpy as np
from libc.math cimport sqrt, pow

from .errors import GeometryError

cdef double DEGENERATE_EAR = 2e-14


cdef inline double _orient(double ax, double ay, double bx, double by,
                           double cx, double cy) nogil:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


cdef inline bint _on_box(double ax, double ay, double bx, double by,
                         double px, double py) nogil:
    return (min(ax, bx) <= px and px <= max(ax, bx)
            and min(ay, by) <= py and py <= max(ay, by))


def nonlocal_matrix(xy, mass, minlen, double s, double eta):
    cdef const double[:, ::1] p = np.ascontiguousarray(xy, dtype=float)
    cdef const double[::1] m = np.ascontiguousarray(mass, dtype=float)
    cdef const double[::1] ml = np.ascontiguousarray(minlen, dtype=float)
    cdef Py_ssize_t nb = p.shape[0]
    out_arr = np.zeros((nb, nb))
    cdef double[:, ::1] out = out_arr
    cdef double expo = -(1.0 + 2.0 * s)
    cdef Py_ssize_t i, j
    cdef double dx, dy, r, cut, c, acc
    for i in range(nb - 1):
        for j in range(i + 1, nb):
            dx = p[j, 0] - p[i, 0]
            dy = p[j, 1] - p[i, 1]
            r = sqrt(dx * dx + dy * dy)
            if r == 0.0:
                raise GeometryError(f"coincident boundary nodes {i} and {j}")
            cut = eta * min(ml[i], ml[j])
            if r < cut:
                continue
            c = 2.0 * m[i] * m[j] * pow(r, expo)
            out[i, j] = -c
            out[j, i] = -c
    for i in range(nb):
        acc = 0.0
        for j in range(nb):
            acc += out[i, j]
        out[i, i] = -acc
    return out_arr


def first_crossing(xy):
    cdef const double[:, ::1] p = np.ascontiguousarray(xy, dtype=float)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, j, k, hi
    cdef double ax, ay, bx, by, cx, cy, dx, dy, o, o1, o2, o3, o4, dot
    for i in range(n):
        k = (i + 1) % n
        ax, ay = p[i, 0], p[i, 1]
        bx, by = p[k, 0], p[k, 1]
        cx, cy = p[(k + 1) % n, 0], p[(k + 1) % n, 1]
        o = _orient(ax, ay, bx, by, cx, cy)
        if o == 0.0:
            dot = (bx - ax) * (cx - bx) + (by - ay) * (cy - by)
            if dot < 0.0:
                return (i, k) if i < k else (k, i)
        hi = n - 1 if i == 0 else n
        for j in range(i + 2, hi):
            cx, cy = p[j, 0], p[j, 1]
            dx, dy = p[(j + 1) % n, 0], p[(j + 1) % n, 1]
            o1 = _orient(ax, ay, bx, by, cx, cy)
            o2 = _orient(ax, ay, bx, by, dx, dy)
            o3 = _orient(cx, cy, dx, dy, ax, ay)
            o4 = _orient(cx, cy, dx, dy, bx, by)
            if o1 * o2 < 0.0 and o3 * o4 < 0.0:
                return i, j
            if ((o1 == 0.0 and _on_box(ax, ay, bx, by, cx, cy))
                    or (o2 == 0.0 and _on_box(ax, ay, bx, by, dx, dy))
                    or (o3 == 0.0 and _on_box(cx, cy, dx, dy, ax, ay))
                    or (o4 == 0.0 and _on_box(cx, cy, dx, dy, bx, by))):
                return i, j
    return -1, -1


cdef double _ear_quality(const double[:, ::1] p, long[::1] prev, long[::1] nxt,
                         double tol, long v) nogil:
    cdef long a = prev[v], c = nxt[v], w
    cdef double ax = p[a, 0], ay = p[a, 1]
    cdef double vx = p[v, 0], vy = p[v, 1]
    cdef double cx = p[c, 0], cy = p[c, 1]
    cdef double cross = _orient(ax, ay, vx, vy, cx, cy)
    cdef double l1 = (vx - ax) * (vx - ax) + (vy - ay) * (vy - ay)
    cdef double l2 = (cx - vx) * (cx - vx) + (cy - vy) * (cy - vy)
    cdef double l3 = (ax - cx) * (ax - cx) + (ay - cy) * (ay - cy)
    cdef double h2 = max(l1, max(l2, l3))
    cdef double px, py
    if cross <= tol * h2:
        return -1.0
    w = nxt[c]
    while w != a:
        px, py = p[w, 0], p[w, 1]
        if (_orient(ax, ay, vx, vy, px, py) >= 0.0
                and _orient(vx, vy, cx, cy, px, py) >= 0.0
                and _orient(cx, cy, ax, ay, px, py) >= 0.0):
            return -1.0
        w = nxt[w]
    return cross / (l1 + l2 + l3)


def ear_clip(xy):
    cdef const double[:, ::1] p = np.ascontiguousarray(xy, dtype=float)
    cdef long n = p.shape[0]
    prev_arr = np.roll(np.arange(n, dtype=np.int_), 1)
    nxt_arr = np.roll(np.arange(n, dtype=np.int_), -1)
    cdef long[::1] prev = prev_arr
    cdef long[::1] nxt = nxt_arr
    qual_arr = np.empty(n)
    cdef double[::1] quality = qual_arr
    tris_arr = np.empty((max(n - 2, 0), 3), dtype=np.int64)
    cdef long long[:, ::1] tris = tris_arr
    cdef long v, w, a, c, best, remaining = n, k = 0, start = 0
    cdef double q
    cdef int rescans = 0
    cdef double tol
    for v in range(n):
        quality[v] = _ear_quality(p, prev, nxt, DEGENERATE_EAR, v)
    while remaining > 3:
        best = 0
        q = quality[0]
        for w in range(1, n):
            if quality[w] > q:
                q = quality[w]
                best = w
        v = best
        if q <= 0.0:
            if rescans == 2:
                raise GeometryError("ear clipping stalled: polygon not simple or degenerate")
            tol = DEGENERATE_EAR if rescans == 0 else 0.0
            w = start
            while True:
                quality[w] = _ear_quality(p, prev, nxt, tol, w)
                w = nxt[w]
                if w == start:
                    break
            rescans += 1
            continue
        rescans = 0
        a = prev[v]
        c = nxt[v]
        tris[k, 0] = a
        tris[k, 1] = v
        tris[k, 2] = c
        k += 1
        quality[v] = -np.inf
        nxt[a] = c
        prev[c] = a
        start = a
        remaining -= 1
        quality[a] = _ear_quality(p, prev, nxt, DEGENERATE_EAR, a)
        quality[c] = _ear_quality(p, prev, nxt, DEGENERATE_EAR, c)
    v = start
    # lowest active index, to match the reference ordering
    w = nxt[start]
    while w != start:
        if w < v:
            v = w
        w = nxt[w]
    tris[k, 0] = prev[v]
    tris[k, 1] = v
    tris[k, 2] = nxt[v]
    return tris_arr
