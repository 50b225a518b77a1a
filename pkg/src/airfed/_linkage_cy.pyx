# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled agglomerative kernel: greedy joint distance/importance linkage.

Must stay behaviorally identical to ``_linkage_py.agglomerate`` (same merge
order, same tie-breaking, bit-identical linkage values); the test suite
enforces parity.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")


cdef double _objective(const double[:, ::1] dist, const double[::1] imp, double rho,
                       const cnp.int64_t[:, ::1] members, const cnp.int64_t[::1] sizes,
                       Py_ssize_t sa, Py_ssize_t sb) noexcept nogil:
    cdef Py_ssize_t na = sizes[sa], nb = sizes[sb]
    cdef Py_ssize_t i, j, mi, mj
    cdef double best = INF
    cdef double max_imp = -INF
    cdef double rowmax, dij, vi
    for i in range(na + nb):
        mi = members[sa, i] if i < na else members[sb, i - na]
        rowmax = 0.0
        for j in range(na + nb):
            mj = members[sa, j] if j < na else members[sb, j - na]
            dij = dist[mi, mj]
            if dij > rowmax:
                rowmax = dij
        if rowmax < best:
            best = rowmax
        vi = imp[mi]
        if vi > max_imp:
            max_imp = vi
    return best + rho * max_imp


def agglomerate(const double[:, ::1] dist, const double[::1] imp, double rho,
                int n_clusters):
    """Same contract as the pure-Python kernel: returns (labels, merges)."""
    cdef Py_ssize_t K = dist.shape[0]
    cdef cnp.int64_t[:, ::1] members = np.empty((K, K), dtype=np.int64)
    cdef cnp.int64_t[::1] sizes = np.ones(K, dtype=np.int64)
    cdef cnp.uint8_t[::1] active = np.ones(K, dtype=np.uint8)
    cdef double[:, ::1] link = np.full((K, K), INF)
    cdef cnp.ndarray merges_arr = np.empty((K - n_clusters, 3))
    cdef double[:, ::1] merges = merges_arr

    cdef Py_ssize_t a, b, c, i, step, lo, hi
    cdef Py_ssize_t best_a, best_b
    cdef double best, val

    for a in range(K):
        members[a, 0] = a
    with nogil:
        for a in range(K):
            for b in range(a + 1, K):
                link[a, b] = _objective(dist, imp, rho, members, sizes, a, b)

        for step in range(K - n_clusters):
            best = INF
            best_a = -1
            best_b = -1
            for a in range(K):
                if not active[a]:
                    continue
                for b in range(a + 1, K):
                    if not active[b]:
                        continue
                    val = link[a, b]
                    if val < best:
                        best = val
                        best_a = a
                        best_b = b
            a = best_a
            b = best_b
            merges[step, 0] = <double>a
            merges[step, 1] = <double>b
            merges[step, 2] = best
            for i in range(sizes[b]):
                members[a, sizes[a] + i] = members[b, i]
            sizes[a] = sizes[a] + sizes[b]
            active[b] = 0
            for c in range(K):
                link[b, c] = INF
                link[c, b] = INF
            for c in range(K):
                if not active[c] or c == a:
                    continue
                if a < c:
                    lo = a; hi = c
                else:
                    lo = c; hi = a
                link[lo, hi] = _objective(dist, imp, rho, members, sizes, a, c)

    labels_arr = np.empty(K, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef Py_ssize_t idx = 0
    for a in range(K):
        if active[a]:
            for i in range(sizes[a]):
                labels[members[a, i]] = idx
            idx += 1
    return labels_arr, merges_arr
