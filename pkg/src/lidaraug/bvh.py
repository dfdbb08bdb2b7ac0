"""Ray/triangle intersection and a binned-SAH bounding volume hierarchy.

The kernels are numba-compiled (``cache=True`` so the JIT cost is paid once
per machine). Triangles are closed: hits on edges and vertices count. Only
hits with ``t > T_EPS`` are reported.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

T_EPS = 1e-9
LEAF_SIZE = 4
N_BINS = 12
# absolute padding on node boxes so rounding never rejects a face-on hit
BOX_PAD = 1e-9


@nb.njit(cache=True, nogil=True)
def _intersect(ox, oy, oz, dx, dy, dz, tris, k):
    ax, ay, az = tris[k, 0, 0], tris[k, 0, 1], tris[k, 0, 2]
    e1x, e1y, e1z = tris[k, 1, 0] - ax, tris[k, 1, 1] - ay, tris[k, 1, 2] - az
    e2x, e2y, e2z = tris[k, 2, 0] - ax, tris[k, 2, 1] - ay, tris[k, 2, 2] - az

    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    if nx == 0.0 and ny == 0.0 and nz == 0.0:
        return np.inf

    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    scale = math.sqrt((e1x * e1x + e1y * e1y + e1z * e1z) * (e2x * e2x + e2y * e2y + e2z * e2z))
    if abs(det) <= 1e-14 * scale:
        return np.inf
    inv = 1.0 / det

    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > T_EPS:
        return t
    return np.inf


@nb.njit(cache=True, nogil=True)
def _surface_area(lo, hi):
    ex, ey, ez = hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]
    if ex < 0.0:
        return 0.0
    return 2.0 * (ex * ey + ey * ez + ez * ex)


@nb.njit(cache=True, nogil=True)
def _build(tris):
    n = tris.shape[0]
    tri_lo = np.empty((n, 3))
    tri_hi = np.empty((n, 3))
    cent = np.empty((n, 3))
    for i in range(n):
        for a in range(3):
            lo = min(tris[i, 0, a], tris[i, 1, a], tris[i, 2, a])
            hi = max(tris[i, 0, a], tris[i, 1, a], tris[i, 2, a])
            tri_lo[i, a] = lo
            tri_hi[i, a] = hi
            cent[i, a] = 0.5 * (lo + hi)

    order = np.arange(n)
    max_nodes = 2 * n + 1
    node_lo = np.empty((max_nodes, 3))
    node_hi = np.empty((max_nodes, 3))
    node_left = np.full(max_nodes, -1, dtype=np.int64)
    node_right = np.full(max_nodes, -1, dtype=np.int64)
    node_start = np.zeros(max_nodes, dtype=np.int64)
    node_count = np.zeros(max_nodes, dtype=np.int64)

    # work stack of (node, start, end)
    stack = np.empty((max_nodes, 3), dtype=np.int64)
    sp = 0
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    sp = 1
    n_nodes = 1

    bin_lo = np.empty((N_BINS, 3))
    bin_hi = np.empty((N_BINS, 3))
    bin_cnt = np.empty(N_BINS, dtype=np.int64)
    acc_lo = np.empty(3)
    acc_hi = np.empty(3)
    left_area = np.empty(N_BINS - 1)
    left_cnt = np.empty(N_BINS - 1, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node, start, end = stack[sp, 0], stack[sp, 1], stack[sp, 2]
        count = end - start

        for a in range(3):
            lo, hi = np.inf, -np.inf
            for i in range(start, end):
                j = order[i]
                if tri_lo[j, a] < lo:
                    lo = tri_lo[j, a]
                if tri_hi[j, a] > hi:
                    hi = tri_hi[j, a]
            node_lo[node, a] = lo - BOX_PAD
            node_hi[node, a] = hi + BOX_PAD

        if count <= LEAF_SIZE:
            node_start[node] = start
            node_count[node] = count
            continue

        best_cost = np.inf
        best_axis = -1
        best_split = -1
        best_cmin = 0.0
        best_cext = 0.0
        for a in range(3):
            cmin, cmax = np.inf, -np.inf
            for i in range(start, end):
                c = cent[order[i], a]
                if c < cmin:
                    cmin = c
                if c > cmax:
                    cmax = c
            cext = cmax - cmin
            if cext <= 0.0:
                continue
            for b in range(N_BINS):
                bin_cnt[b] = 0
                for q in range(3):
                    bin_lo[b, q] = np.inf
                    bin_hi[b, q] = -np.inf
            for i in range(start, end):
                j = order[i]
                b = int(N_BINS * (cent[j, a] - cmin) / cext)
                if b >= N_BINS:
                    b = N_BINS - 1
                bin_cnt[b] += 1
                for q in range(3):
                    if tri_lo[j, q] < bin_lo[b, q]:
                        bin_lo[b, q] = tri_lo[j, q]
                    if tri_hi[j, q] > bin_hi[b, q]:
                        bin_hi[b, q] = tri_hi[j, q]
            # sweep from the left, then from the right
            for q in range(3):
                acc_lo[q] = np.inf
                acc_hi[q] = -np.inf
            cnt = 0
            for b in range(N_BINS - 1):
                cnt += bin_cnt[b]
                for q in range(3):
                    acc_lo[q] = min(acc_lo[q], bin_lo[b, q])
                    acc_hi[q] = max(acc_hi[q], bin_hi[b, q])
                left_cnt[b] = cnt
                left_area[b] = _surface_area(acc_lo, acc_hi) if cnt > 0 else 0.0
            for q in range(3):
                acc_lo[q] = np.inf
                acc_hi[q] = -np.inf
            cnt = 0
            for b in range(N_BINS - 1, 0, -1):
                cnt += bin_cnt[b]
                for q in range(3):
                    acc_lo[q] = min(acc_lo[q], bin_lo[b, q])
                    acc_hi[q] = max(acc_hi[q], bin_hi[b, q])
                nl = left_cnt[b - 1]
                if nl == 0 or cnt == 0:
                    continue
                cost = left_area[b - 1] * nl + _surface_area(acc_lo, acc_hi) * cnt
                if cost < best_cost:
                    best_cost = cost
                    best_axis = a
                    best_split = b
                    best_cmin = cmin
                    best_cext = cext

        mid = start
        if best_axis >= 0:
            # partition order[start:end] by bin index < best_split
            i, j = start, end - 1
            while i <= j:
                b = int(N_BINS * (cent[order[i], best_axis] - best_cmin) / best_cext)
                if b >= N_BINS:
                    b = N_BINS - 1
                if b < best_split:
                    i += 1
                else:
                    tmp = order[i]
                    order[i] = order[j]
                    order[j] = tmp
                    j -= 1
            mid = i
        if mid == start or mid == end:
            # coincident centroids: an arbitrary even split keeps leaves small
            mid = start + count // 2

        left, right = n_nodes, n_nodes + 1
        n_nodes += 2
        node_left[node] = left
        node_right[node] = right
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = left, start, mid
        sp += 1
        stack[sp, 0], stack[sp, 1], stack[sp, 2] = right, mid, end
        sp += 1

    return (
        node_lo[:n_nodes].copy(),
        node_hi[:n_nodes].copy(),
        node_left[:n_nodes].copy(),
        node_right[:n_nodes].copy(),
        node_start[:n_nodes].copy(),
        node_count[:n_nodes].copy(),
        order,
    )


@nb.njit(cache=True, nogil=True, inline="always")
def _axis_range(lo, hi, o, d, tmin, tmax):
    if d == 0.0:
        if o < lo or o > hi:
            return np.inf, -np.inf
        return tmin, tmax
    inv = 1.0 / d
    t0 = (lo - o) * inv
    t1 = (hi - o) * inv
    if t0 > t1:
        t0, t1 = t1, t0
    return max(tmin, t0), min(tmax, t1)


@nb.njit(cache=True, nogil=True)
def _slab(node_lo, node_hi, node, ox, oy, oz, dx, dy, dz):
    """Entry distance of the ray into a node box, or inf when it misses."""
    tmin, tmax = _axis_range(node_lo[node, 0], node_hi[node, 0], ox, dx, 0.0, np.inf)
    tmin, tmax = _axis_range(node_lo[node, 1], node_hi[node, 1], oy, dy, tmin, tmax)
    tmin, tmax = _axis_range(node_lo[node, 2], node_hi[node, 2], oz, dz, tmin, tmax)
    if tmin > tmax:
        return np.inf
    return tmin


@nb.njit(cache=True, nogil=True)
def _cast(origin, dirs, tris, node_lo, node_hi, node_left, node_right,
          node_start, node_count, order):
    n_rays = dirs.shape[0]
    hit_t = np.full(n_rays, np.inf)
    hit_tri = np.full(n_rays, -1, dtype=np.int64)
    stack = np.empty(node_lo.shape[0] + 1, dtype=np.int64)
    ox, oy, oz = origin[0], origin[1], origin[2]
    for r in range(n_rays):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best = np.inf
        best_tri = -1
        sp = 0
        if _slab(node_lo, node_hi, 0, ox, oy, oz, dx, dy, dz) < np.inf:
            stack[0] = 0
            sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if node_count[node] > 0:
                for i in range(node_start[node], node_start[node] + node_count[node]):
                    k = order[i]
                    t = _intersect(ox, oy, oz, dx, dy, dz, tris, k)
                    if t < best or (t == best and k < best_tri):
                        best = t
                        best_tri = k
                continue
            left, right = node_left[node], node_right[node]
            tl = _slab(node_lo, node_hi, left, ox, oy, oz, dx, dy, dz)
            tr = _slab(node_lo, node_hi, right, ox, oy, oz, dx, dy, dz)
            # push the farther child first so the nearer one is popped next;
            # a missed child has t = inf and must never be pushed
            if tl <= tr:
                if tr < np.inf and tr <= best:
                    stack[sp] = right
                    sp += 1
                if tl < np.inf and tl <= best:
                    stack[sp] = left
                    sp += 1
            else:
                if tl < np.inf and tl <= best:
                    stack[sp] = left
                    sp += 1
                if tr < np.inf and tr <= best:
                    stack[sp] = right
                    sp += 1
        hit_t[r] = best
        hit_tri[r] = best_tri
    return hit_t, hit_tri


@nb.njit(cache=True, nogil=True)
def _cast_brute(origin, dirs, tris):
    n_rays = dirs.shape[0]
    hit_t = np.full(n_rays, np.inf)
    hit_tri = np.full(n_rays, -1, dtype=np.int64)
    for r in range(n_rays):
        for k in range(tris.shape[0]):
            t = _intersect(origin[0], origin[1], origin[2],
                           dirs[r, 0], dirs[r, 1], dirs[r, 2], tris, k)
            if t < hit_t[r]:
                hit_t[r] = t
                hit_tri[r] = k
    return hit_t, hit_tri


@nb.njit(cache=True, nogil=True)
def _intersect_pairs(origins, dirs, tris):
    out = np.empty(dirs.shape[0])
    for i in range(dirs.shape[0]):
        out[i] = _intersect(origins[i, 0], origins[i, 1], origins[i, 2],
                            dirs[i, 0], dirs[i, 1], dirs[i, 2], tris, i)
    return out


def _as_triangles(vertices, triangles) -> np.ndarray:
    verts = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(triangles, dtype=np.int64)
    return np.ascontiguousarray(verts[faces])


def intersect_ray_triangle(origin, direction, triangle):
    """Distance along the ray to a closed triangle, or ``None`` on a miss."""
    tri = np.ascontiguousarray(np.asarray(triangle, dtype=np.float64).reshape(1, 3, 3))
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    t = _intersect(o[0], o[1], o[2], d[0], d[1], d[2], tri, 0)
    return None if math.isinf(t) else float(t)


def intersect_pairs(origins, directions, triangles) -> np.ndarray:
    """Vectorised :func:`intersect_ray_triangle` over ``(N, 3)``, ``(N, 3)``, ``(N, 3, 3)``.

    Misses are ``inf``.
    """
    tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3))
    dirs = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
    o = np.ascontiguousarray(np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape))
    if not tris.shape[0] == dirs.shape[0]:
        raise ValueError("need one triangle per ray")
    return _intersect_pairs(o, dirs, tris)


class TriangleBVH:
    """Bounding volume hierarchy over a triangle soup (leaves hold <= 4 triangles)."""

    def __init__(self, vertices, triangles):
        self.tris = _as_triangles(vertices, triangles)
        if self.tris.shape[0] == 0:
            raise ValueError("cannot build a BVH over zero triangles")
        (self.node_lo, self.node_hi, self.node_left, self.node_right,
         self.node_start, self.node_count, self.order) = _build(self.tris)

    @property
    def n_nodes(self) -> int:
        return int(self.node_lo.shape[0])

    def nearest_hits(self, directions, origin=(0.0, 0.0, 0.0)):
        """Nearest hit distance (``inf`` on miss) and triangle index per ray."""
        dirs = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
        o = np.ascontiguousarray(np.asarray(origin, dtype=np.float64))
        return _cast(o, dirs, self.tris, self.node_lo, self.node_hi, self.node_left,
                     self.node_right, self.node_start, self.node_count, self.order)


def brute_force_hits(vertices, triangles, directions, origin=(0.0, 0.0, 0.0)):
    """Nearest hits by testing every triangle; the reference for :class:`TriangleBVH`."""
    dirs = np.ascontiguousarray(np.asarray(directions, dtype=np.float64).reshape(-1, 3))
    o = np.ascontiguousarray(np.asarray(origin, dtype=np.float64))
    return _cast_brute(o, dirs, _as_triangles(vertices, triangles))
