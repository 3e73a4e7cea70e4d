"""Pure-Python/numpy versions of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends
produce the same triangulations and (up to summation order) the same
nonlocal matrices.
"""

import numpy as np

from .errors import GeometryError

DEGENERATE_EAR = 2e-14


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def nonlocal_matrix(xy, mass, minlen, s, eta):
    """Dense pair-sum matrix of the boundary kernel |x - y|^-(1+2s).

    Row i, column j (i != j) holds ``-2 m_i m_j K(r_ij)`` for pairs beyond the
    near-diagonal cutoff ``eta * min(minlen_i, minlen_j)``; the diagonal
    holds the negated off-diagonal row sum.
    """
    xy = np.ascontiguousarray(xy, dtype=float)
    mass = np.asarray(mass, dtype=float)
    minlen = np.asarray(minlen, dtype=float)
    nb = xy.shape[0]
    out = np.zeros((nb, nb))
    expo = -(1.0 + 2.0 * s)
    for i in range(nb - 1):
        dx = xy[i + 1:, 0] - xy[i, 0]
        dy = xy[i + 1:, 1] - xy[i, 1]
        r = np.sqrt(dx * dx + dy * dy)
        if np.any(r == 0.0):
            j = i + 1 + int(np.flatnonzero(r == 0.0)[0])
            raise GeometryError(f"coincident boundary nodes {i} and {j}")
        cut = eta * np.minimum(minlen[i], minlen[i + 1:])
        c = 2.0 * mass[i] * mass[i + 1:] * r ** expo
        c[r < cut] = 0.0
        out[i, i + 1:] = -c
        out[i + 1:, i] = -c
    out[np.diag_indices(nb)] = -out.sum(axis=1)
    return out


def first_crossing(xy):
    """Return the first pair of intersecting non-adjacent edges of a closed
    polygon, or (-1, -1). Adjacent edges count only when they fold back."""
    xy = np.asarray(xy, dtype=float)
    n = xy.shape[0]
    ax, ay = xy[:, 0], xy[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    for i in range(n):
        # fold-back of edge i onto edge i+1
        k = (i + 1) % n
        o = _orient(ax[i], ay[i], bx[i], by[i], bx[k], by[k])
        if o == 0.0:
            dot = (bx[i] - ax[i]) * (bx[k] - ax[k]) + (by[i] - ay[i]) * (by[k] - ay[k])
            if dot < 0.0:
                return (i, k) if i < k else (k, i)
        lo = i + 2
        hi = n - 1 if i == 0 else n
        if lo >= hi:
            continue
        cx, cy, dx, dy = ax[lo:hi], ay[lo:hi], bx[lo:hi], by[lo:hi]
        o1 = _orient(ax[i], ay[i], bx[i], by[i], cx, cy)
        o2 = _orient(ax[i], ay[i], bx[i], by[i], dx, dy)
        o3 = _orient(cx, cy, dx, dy, ax[i], ay[i])
        o4 = _orient(cx, cy, dx, dy, bx[i], by[i])
        proper = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
        touch = (
            ((o1 == 0.0) & _on_box(ax[i], ay[i], bx[i], by[i], cx, cy))
            | ((o2 == 0.0) & _on_box(ax[i], ay[i], bx[i], by[i], dx, dy))
            | ((o3 == 0.0) & _on_box(cx, cy, dx, dy, ax[i], ay[i]))
            | ((o4 == 0.0) & _on_box(cx, cy, dx, dy, bx[i], by[i]))
        )
        hit = np.flatnonzero(proper | touch)
        if hit.size:
            return i, lo + int(hit[0])
    return -1, -1


def _on_box(ax, ay, bx, by, px, py):
    return (
        (np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx))
        & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by))
    )


def _ear_quality(xy, prev, nxt, active, v, tol=DEGENERATE_EAR):
    a, c = prev[v], nxt[v]
    ax, ay = xy[a, 0], xy[a, 1]
    vx, vy = xy[v, 0], xy[v, 1]
    cx, cy = xy[c, 0], xy[c, 1]
    cross = _orient(ax, ay, vx, vy, cx, cy)
    l1 = (vx - ax) * (vx - ax) + (vy - ay) * (vy - ay)
    l2 = (cx - vx) * (cx - vx) + (cy - vy) * (cy - vy)
    l3 = (ax - cx) * (ax - cx) + (ay - cy) * (ay - cy)
    h2 = max(l1, l2, l3)
    if cross <= tol * h2:
        return -1.0
    idx = np.flatnonzero(active)
    idx = idx[(idx != a) & (idx != v) & (idx != c)]
    px, py = xy[idx, 0], xy[idx, 1]
    inside = (
        (_orient(ax, ay, vx, vy, px, py) >= 0.0)
        & (_orient(vx, vy, cx, cy, px, py) >= 0.0)
        & (_orient(cx, cy, ax, ay, px, py) >= 0.0)
    )
    if inside.any():
        return -1.0
    return cross / (l1 + l2 + l3)


def ear_clip(xy):
    """Triangulate a simple CCW polygon by greedy best-quality ear removal.

    The ear maximizing twice-area over squared-perimeter is clipped first,
    lowest vertex index on ties. Ears thinner than ``DEGENERATE_EAR`` times
    their squared longest side are skipped unless nothing else is left.
    """
    xy = np.ascontiguousarray(xy, dtype=float)
    n = xy.shape[0]
    prev = np.roll(np.arange(n), 1)
    nxt = np.roll(np.arange(n), -1)
    active = np.ones(n, dtype=bool)
    quality = np.array([_ear_quality(xy, prev, nxt, active, v) for v in range(n)])
    tris = np.empty((max(n - 2, 0), 3), dtype=np.int64)
    remaining = n
    k = 0
    rescans = 0
    while remaining > 3:
        v = int(np.argmax(quality))
        if quality[v] <= 0.0:
            # full rescan, then one accepting thin ears with any positive area
            if rescans == 2:
                raise GeometryError("ear clipping stalled: polygon not simple or degenerate")
            tol = DEGENERATE_EAR if rescans == 0 else 0.0
            for w in np.flatnonzero(active):
                quality[w] = _ear_quality(xy, prev, nxt, active, w, tol)
            rescans += 1
            continue
        rescans = 0
        a, c = prev[v], nxt[v]
        tris[k] = (a, v, c)
        k += 1
        active[v] = False
        quality[v] = -np.inf
        nxt[a] = c
        prev[c] = a
        remaining -= 1
        quality[a] = _ear_quality(xy, prev, nxt, active, a)
        quality[c] = _ear_quality(xy, prev, nxt, active, c)
    v = int(np.flatnonzero(active)[0])
    tris[k] = (prev[v], v, nxt[v])
    return tris
