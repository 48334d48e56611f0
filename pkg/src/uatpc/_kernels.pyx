# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: batched network utility and k-d tree radius queries.

Semantics must match ``_fallback`` exactly; see that module for the
reference formulation.
"""
import numpy as np

from libc.math cimport log

cdef double LN10_OVER_10 = 0.23025850929940458  # ln(10) / 10

DEF MAX_STACK = 512


def batch_log_utility(const double[:, ::1] pl, const double[:, ::1] configs,
                      const unsigned char[:, ::1] overlap, double thr, double eps):
    cdef Py_ssize_t R = pl.shape[0], A = pl.shape[1], C = configs.shape[0]
    cdef Py_ssize_t c, r, a, s
    cdef double best, v, interf, d, total, inv_r
    out = np.zeros(C, dtype=np.float64)
    if R == 0 or A == 0:
        return out
    cdef double[::1] o = out
    srv_buf = np.empty(R, dtype=np.intp)
    cdef Py_ssize_t[::1] srv = srv_buf
    load_buf = np.empty(A, dtype=np.float64)
    cdef double[::1] load = load_buf
    rssi_buf = np.empty((R, A), dtype=np.float64)
    cdef double[:, ::1] rssi = rssi_buf
    inv_r = <double> R
    with nogil:
        for c in range(C):
            for a in range(A):
                load[a] = 0.0
            for r in range(R):
                for a in range(A):
                    rssi[r, a] = configs[c, a] - pl[r, a]
                best = rssi[r, 0]
                s = 0
                for a in range(1, A):
                    if rssi[r, a] > best:
                        best = rssi[r, a]
                        s = a
                srv[r] = s
                load[s] += 1.0
            for a in range(A):
                load[a] = load[a] / inv_r
            total = 0.0
            for r in range(R):
                s = srv[r]
                interf = 0.0
                # branch-free: overlap is 0/1 and so is the threshold test
                for a in range(s):
                    interf += load[a] * (overlap[s, a] * (rssi[r, a] >= thr))
                for a in range(s + 1, A):
                    interf += load[a] * (overlap[s, a] * (rssi[r, a] >= thr))
                d = load[s] + interf
                if d < eps:
                    d = eps
                total += rssi[r, s] * LN10_OVER_10 - log(d)
            o[c] = total
    return out


cdef inline double _sqdist(const double[:, ::1] pts, Py_ssize_t i, const double[::1] q, Py_ssize_t k) nogil:
    cdef double d2 = 0.0, dx
    cdef Py_ssize_t j
    for j in range(k):
        dx = q[j] - pts[i, j]
        d2 += dx * dx
    return d2


cdef Py_ssize_t _ball(const double[:, ::1] pts, const double[::1] q, double r2,
                      Py_ssize_t[::1] hits, bint collect) except -1:
    cdef Py_ssize_t n = pts.shape[0], k = pts.shape[1]
    cdef Py_ssize_t st_lo[MAX_STACK]
    cdef Py_ssize_t st_hi[MAX_STACK]
    cdef Py_ssize_t st_d[MAX_STACK]
    cdef Py_ssize_t top = 0, lo, hi, depth, mid, ax, found = 0
    cdef double diff
    if n == 0:
        return 0
    st_lo[0] = 0
    st_hi[0] = n
    st_d[0] = 0
    top = 1
    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_d[top]
        if hi <= lo:
            continue
        mid = (lo + hi) // 2
        if _sqdist(pts, mid, q, k) <= r2:
            if collect:
                hits[found] = mid
            found += 1
        if hi - lo == 1:
            continue
        ax = depth % k
        diff = q[ax] - pts[mid, ax]
        if top + 2 > MAX_STACK:
            raise RuntimeError("k-d tree too deep")
        if diff <= 0.0 or diff * diff <= r2:
            st_lo[top] = lo
            st_hi[top] = mid
            st_d[top] = depth + 1
            top += 1
        if diff >= 0.0 or diff * diff <= r2:
            st_lo[top] = mid + 1
            st_hi[top] = hi
            st_d[top] = depth + 1
            top += 1
    return found


def ball_query(const double[:, ::1] pts, const double[::1] q, double r):
    """Tree-order positions of points within distance ``r`` of ``q``."""
    cdef Py_ssize_t n = pts.shape[0]
    hits = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] h = hits
    cdef Py_ssize_t found = _ball(pts, q, r * r, h, True)
    return hits[:found]


def ball_count_many(const double[:, ::1] pts, const double[:, ::1] queries, double r):
    cdef Py_ssize_t m = queries.shape[0], i
    counts = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t[::1] cnt = counts
    dummy = np.empty(1, dtype=np.intp)
    cdef Py_ssize_t[::1] dm = dummy
    cdef double r2 = r * r
    for i in range(m):
        cnt[i] = _ball(pts, queries[i], r2, dm, False)
    return counts
