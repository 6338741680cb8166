# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled hot kernels: hull-vs-voxel SAT, voxel line of sight, Theta*."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sqrt, fabs, INFINITY, round as cround
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

ctypedef pair[double, pair[double, Py_ssize_t]] HeapItem


cdef inline bint _box_hits(double cx, double cy, double cz, double hx, double hy, double hz,
                           const double[:, ::1] axes, const double[::1] hmin,
                           const double[::1] hmax, double tol) noexcept nogil:
    cdef Py_ssize_t k
    cdef double c, r, ax, ay, az
    for k in range(axes.shape[0]):
        ax = axes[k, 0]
        ay = axes[k, 1]
        az = axes[k, 2]
        c = cx * ax + cy * ay + cz * az
        r = hx * fabs(ax) + hy * fabs(ay) + hz * fabs(az)
        if c + r <= hmin[k] + tol or c - r >= hmax[k] - tol:
            return False
    return True


cdef bint _mask_hits(const cnp.uint8_t[:, :, ::1] mask, Py_ssize_t i0, Py_ssize_t j0,
                     Py_ssize_t k0, Py_ssize_t i1, Py_ssize_t j1, Py_ssize_t k1,
                     const double[:, ::1] axes, const double[::1] hmin,
                     const double[::1] hmax, double tol) noexcept nogil:
    cdef Py_ssize_t i, j, k
    for i in range(i0, i1):
        for j in range(j0, j1):
            for k in range(k0, k1):
                if mask[i, j, k] and _box_hits(i + 0.5, j + 0.5, k + 0.5, 0.5, 0.5, 0.5,
                                               axes, hmin, hmax, tol):
                    return True
    return False


def hull_hits_mask(const cnp.uint8_t[:, :, ::1] mask, lo, hi,
                   const double[:, ::1] axes, const double[::1] hmin,
                   const double[::1] hmax, double tol):
    cdef Py_ssize_t i0 = lo[0], j0 = lo[1], k0 = lo[2]
    cdef Py_ssize_t i1 = hi[0], j1 = hi[1], k1 = hi[2]
    cdef bint hit
    with nogil:
        hit = _mask_hits(mask, i0, j0, k0, i1, j1, k1, axes, hmin, hmax, tol)
    return bool(hit)


def hull_hits_boxes(const double[:, ::1] blo, const double[:, ::1] bhi,
                    const double[:, ::1] axes, const double[::1] hmin,
                    const double[::1] hmax, double tol):
    cdef Py_ssize_t m
    cdef bint hit = False
    with nogil:
        for m in range(blo.shape[0]):
            if _box_hits(0.5 * (blo[m, 0] + bhi[m, 0]), 0.5 * (blo[m, 1] + bhi[m, 1]),
                         0.5 * (blo[m, 2] + bhi[m, 2]), 0.5 * (bhi[m, 0] - blo[m, 0]),
                         0.5 * (bhi[m, 1] - blo[m, 1]), 0.5 * (bhi[m, 2] - blo[m, 2]),
                         axes, hmin, hmax, tol):
                hit = True
                break
    return bool(hit)


cdef inline bint _point_free(const cnp.uint8_t[:, :, ::1] occ, double px, double py, double pz,
                             double tol) noexcept nogil:
    cdef double p[3]
    cdef Py_ssize_t lo[3]
    cdef Py_ssize_t hi[3]
    cdef Py_ssize_t k, i, j, l, n
    cdef double r
    p[0] = px
    p[1] = py
    p[2] = pz
    for k in range(3):
        n = occ.shape[k]
        r = cround(p[k])
        if fabs(p[k] - r) <= tol:
            lo[k] = <Py_ssize_t>r - 1
            hi[k] = <Py_ssize_t>r
        else:
            lo[k] = <Py_ssize_t>floor(p[k])
            hi[k] = lo[k]
        if lo[k] < 0:
            lo[k] = 0
        if hi[k] > n - 1:
            hi[k] = n - 1
        if lo[k] > hi[k]:
            return False
    for i in range(lo[0], hi[0] + 1):
        for j in range(lo[1], hi[1] + 1):
            for l in range(lo[2], hi[2] + 1):
                if occ[i, j, l]:
                    return False
    return True


cdef bint _los(const cnp.uint8_t[:, :, ::1] occ, double* a, double* b, double tol) noexcept nogil:
    cdef double d[3]
    cdef double nxt[3]
    cdef int step[3]
    cdef double m[3]
    cdef int k
    cdef double t_prev = 0.0, t_next, tm
    for k in range(3):
        d[k] = b[k] - a[k]
    if not _point_free(occ, a[0], a[1], a[2], tol):
        return False
    for k in range(3):
        nxt[k] = INFINITY
        step[k] = 0
        m[k] = 0
        if d[k] > tol:
            step[k] = 1
            m[k] = floor(a[k] + tol) + 1
        elif d[k] < -tol:
            step[k] = -1
            m[k] = ceil(a[k] - tol) - 1
        if step[k] != 0:
            nxt[k] = (m[k] - a[k]) / d[k]
    while True:
        t_next = nxt[0]
        if nxt[1] < t_next:
            t_next = nxt[1]
        if nxt[2] < t_next:
            t_next = nxt[2]
        if t_next > 1.0:
            t_next = 1.0
        tm = 0.5 * (t_prev + t_next)
        if not _point_free(occ, a[0] + tm * d[0], a[1] + tm * d[1], a[2] + tm * d[2], tol):
            return False
        if t_next >= 1.0:
            return _point_free(occ, b[0], b[1], b[2], tol)
        if not _point_free(occ, a[0] + t_next * d[0], a[1] + t_next * d[1],
                           a[2] + t_next * d[2], tol):
            return False
        for k in range(3):
            if step[k] != 0 and nxt[k] <= t_next + 1e-12:
                m[k] += step[k]
                nxt[k] = (m[k] - a[k]) / d[k]
        t_prev = t_next


def line_of_sight(const cnp.uint8_t[:, :, ::1] occ, a, b, double tol=1e-9):
    cdef double pa[3]
    cdef double pb[3]
    cdef int k
    for k in range(3):
        pa[k] = a[k]
        pb[k] = b[k]
    return bool(_los(occ, pa, pb, tol))


cdef inline double _dist(double* p, double* q) noexcept nogil:
    cdef double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2]
    return sqrt(dx * dx + dy * dy + dz * dz)


cdef inline void _pos(Py_ssize_t n, Py_ssize_t s, Py_ssize_t g, double* sp, double* gp,
                      Py_ssize_t ny, Py_ssize_t nz, double* out) noexcept nogil:
    cdef int k
    if n == s:
        for k in range(3):
            out[k] = sp[k]
    elif n == g:
        for k in range(3):
            out[k] = gp[k]
    else:
        out[0] = (n // (ny * nz)) + 0.5
        out[1] = ((n // nz) % ny) + 0.5
        out[2] = (n % nz) + 0.5


def grid_search(const cnp.uint8_t[:, :, ::1] occ, start_idx, goal_idx, start_pt, goal_pt,
                bint any_angle=True):
    cdef Py_ssize_t nx = occ.shape[0], ny = occ.shape[1], nz = occ.shape[2]
    cdef Py_ssize_t nvox = nx * ny * nz
    cdef Py_ssize_t s0 = (<Py_ssize_t>start_idx[0] * ny + <Py_ssize_t>start_idx[1]) * nz + <Py_ssize_t>start_idx[2]
    cdef Py_ssize_t g0 = (<Py_ssize_t>goal_idx[0] * ny + <Py_ssize_t>goal_idx[1]) * nz + <Py_ssize_t>goal_idx[2]
    cdef double sp[3]
    cdef double gp[3]
    cdef int k
    for k in range(3):
        sp[k] = start_pt[k]
        gp[k] = goal_pt[k]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] g_arr = np.full(nvox, np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] par_arr = np.full(nvox, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] closed_arr = np.zeros(nvox, dtype=np.uint8)
    cdef double[::1] g = g_arr
    cdef cnp.int64_t[::1] parent = par_arr
    cdef cnp.uint8_t[::1] closed = closed_arr

    cdef priority_queue[HeapItem] heap
    cdef HeapItem item
    cdef Py_ssize_t s, n, par, i, j, l, ii, jj, ll
    cdef int dx, dy, dz
    cdef double ps[3]
    cdef double ppar[3]
    cdef double pn[3]
    cdef double cand, gs
    cdef Py_ssize_t via
    cdef long expansions = 0
    cdef bint found = False

    g[s0] = 0.0
    parent[s0] = s0
    item.first = -_dist(sp, gp)
    item.second.first = 0.0
    item.second.second = -s0
    heap.push(item)
    with nogil:
        while not heap.empty():
            item = heap.top()
            heap.pop()
            s = -item.second.second
            gs = item.second.first
            if closed[s] or gs != g[s]:
                continue
            if s == g0:
                found = True
                break
            closed[s] = 1
            expansions += 1
            i = s // (ny * nz)
            j = (s // nz) % ny
            l = s % nz
            _pos(s, s0, g0, sp, gp, ny, nz, ps)
            par = parent[s]
            _pos(par, s0, g0, sp, gp, ny, nz, ppar)
            for dx in range(-1, 2):
                ii = i + dx
                if ii < 0 or ii >= nx:
                    continue
                for dy in range(-1, 2):
                    jj = j + dy
                    if jj < 0 or jj >= ny:
                        continue
                    for dz in range(-1, 2):
                        if dx == 0 and dy == 0 and dz == 0:
                            continue
                        ll = l + dz
                        if ll < 0 or ll >= nz:
                            continue
                        if occ[ii, jj, ll]:
                            continue
                        n = (ii * ny + jj) * nz + ll
                        if closed[n]:
                            continue
                        _pos(n, s0, g0, sp, gp, ny, nz, pn)
                        if any_angle and _los(occ, ppar, pn, 1e-9):
                            cand = g[par] + _dist(ppar, pn)
                            via = par
                        elif _los(occ, ps, pn, 1e-9):
                            cand = g[s] + _dist(ps, pn)
                            via = s
                        else:
                            continue
                        if cand < g[n]:
                            g[n] = cand
                            parent[n] = via
                            item.first = -(cand + _dist(pn, gp))
                            item.second.first = cand
                            item.second.second = -n
                            heap.push(item)
    if not found:
        return np.zeros((0, 3), dtype=np.int64), int(expansions)
    chain = [g0]
    cur = g0
    while cur != s0:
        cur = par_arr[cur]
        chain.append(cur)
    chain.reverse()
    flat = np.array(chain, dtype=np.int64)
    return np.stack(np.unravel_index(flat, (nx, ny, nz)), axis=1).astype(np.int64), int(expansions)
