# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled kernels; the pure-Python mirror is pwfit._kernels_py.

Both implementations must stay bit-identical: same union rule (larger
size wins, ties to the smaller root), same edge scan order, and the same
floating-point expression order in the merge test and the 3x3 refit.
"""

from cython.operator cimport dereference as deref
from cython.operator cimport preincrement as inc
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline int _find(int* parent, int a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


cdef void _canonical_labels(int* parent, int n_nodes,
                            cnp.int32_t* labels) noexcept nogil:
    cdef int k, r, nxt = 0
    for k in range(n_nodes):
        labels[k] = -1
    for k in range(n_nodes):
        r = _find(parent, k)
        if labels[r] < 0:
            labels[r] = nxt
            nxt += 1
        labels[k] = labels[r]
    # first pass stored component labels on roots; nothing else to fix
    # because every node read its root after the root was labeled


def cc_labels(int m, int n, const unsigned char[::1] x):
    """Component labels of the m x n grid keeping only edges with x == 0."""
    cdef int n_nodes = m * n
    out = np.empty(n_nodes, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = out
    cdef int* parent = <int*> malloc(n_nodes * sizeof(int))
    cdef int* size = <int*> malloc(n_nodes * sizeof(int))
    if parent == NULL or size == NULL:
        free(parent)
        free(size)
        raise MemoryError()
    cdef int i, j, base, e, a, b, ra, rb, tmp
    with nogil:
        for i in range(n_nodes):
            parent[i] = i
            size[i] = 1
        e = 0
        for i in range(m):
            base = i * n
            for j in range(n - 1):
                if x[e] == 0:
                    ra = _find(parent, base + j)
                    rb = _find(parent, base + j + 1)
                    if ra != rb:
                        if size[rb] > size[ra] or (size[rb] == size[ra]
                                                   and rb < ra):
                            tmp = ra
                            ra = rb
                            rb = tmp
                        parent[rb] = ra
                        size[ra] += size[rb]
                e += 1
        for i in range(m - 1):
            base = i * n
            for j in range(n):
                if x[e] == 0:
                    ra = _find(parent, base + j)
                    rb = _find(parent, base + j + n)
                    if ra != rb:
                        if size[rb] > size[ra] or (size[rb] == size[ra]
                                                   and rb < ra):
                            tmp = ra
                            ra = rb
                            rb = tmp
                        parent[rb] = ra
                        size[ra] += size[rb]
                e += 1
        _canonical_labels(parent, n_nodes, &labels[0])
    free(parent)
    free(size)
    return out


cdef struct SegStats:
    double sz1
    double sz2
    double s11
    double s12
    double s22
    double sy
    double sy1
    double sy2
    double a1
    double a2
    double b
    int lo1
    int hi1
    int lo2
    int hi2


cdef inline void _gadd(unordered_map[int, int]* g, int key,
                       int cnt) noexcept nogil:
    cdef unordered_map[int, int].iterator f = g.find(key)
    if f == g.end():
        deref(g)[key] = cnt
    else:
        deref(f).second = deref(f).second + cnt


cdef inline int _gget(unordered_map[int, int]* g, int key) noexcept nogil:
    cdef unordered_map[int, int].iterator f = g.find(key)
    if f == g.end():
        return 0
    return deref(f).second


cdef inline void _refit(SegStats* s, int c) noexcept nogil:
    """Same formula text as _kernels_py._refit."""
    cdef double cbar = s.sy / c
    cdef double det, cc = c
    if c < 3 or s.lo1 == s.hi1 or s.lo2 == s.hi2:
        s.a1 = 0.0
        s.a2 = 0.0
        s.b = cbar
        return
    det = (s.s11 * (s.s22 * cc - s.sz2 * s.sz2)
           - s.s12 * (s.s12 * cc - s.sz2 * s.sz1)
           + s.sz1 * (s.s12 * s.sz2 - s.s22 * s.sz1))
    s.a1 = (s.sy1 * (s.s22 * cc - s.sz2 * s.sz2)
            - s.s12 * (s.sy2 * cc - s.sz2 * s.sy)
            + s.sz1 * (s.sy2 * s.sz2 - s.s22 * s.sy)) / det
    s.a2 = (s.s11 * (s.sy2 * cc - s.sy * s.sz2)
            - s.sy1 * (s.s12 * cc - s.sz2 * s.sz1)
            + s.sz1 * (s.s12 * s.sy - s.sy2 * s.sz1)) / det
    s.b = cbar


def fuse_regions(int m, int n, const double[::1] y, const double[:, ::1] y0,
                 const double[::1] kappas):
    """Region-fusion merge sweep; see the pure-Python mirror for the
    algorithm description."""
    cdef int n_nodes = m * n
    cdef int n_edges = m * (n - 1) + (m - 1) * n
    out = np.empty(n_nodes, dtype=np.int32)
    cdef cnp.int32_t[::1] labels = out

    cdef int* parent = <int*> malloc(n_nodes * sizeof(int))
    cdef int* size = <int*> malloc(n_nodes * sizeof(int))
    cdef SegStats* st = <SegStats*> malloc(n_nodes * sizeof(SegStats))
    cdef int* ends_u = <int*> malloc(n_edges * sizeof(int))
    cdef int* ends_v = <int*> malloc(n_edges * sizeof(int))
    if (parent == NULL or size == NULL or st == NULL
            or ends_u == NULL or ends_v == NULL):
        free(parent)
        free(size)
        free(st)
        free(ends_u)
        free(ends_v)
        raise MemoryError()

    cdef vector[unordered_map[int, int]] gamma
    gamma.resize(n_nodes)

    cdef int k, i, j, e, base, t
    cdef double yk, fi, fj
    for k in range(n_nodes):
        i = k // n
        j = k - i * n
        parent[k] = k
        size[k] = 1
        yk = y[k]
        fi = <double> i
        fj = <double> j
        st[k].a1 = y0[k, 0]
        st[k].a2 = y0[k, 1]
        st[k].b = y0[k, 2]
        st[k].sz1 = fi
        st[k].sz2 = fj
        st[k].s11 = fi * fi
        st[k].s12 = fi * fj
        st[k].s22 = fj * fj
        st[k].sy = yk
        st[k].sy1 = yk * fi
        st[k].sy2 = yk * fj
        st[k].lo1 = i
        st[k].hi1 = i
        st[k].lo2 = j
        st[k].hi2 = j
        if j < n - 1:
            _gadd(&gamma[k], k + 1, 1)
            _gadd(&gamma[k + 1], k, 1)
        if i < m - 1:
            _gadd(&gamma[k], k + n, 1)
            _gadd(&gamma[k + n], k, 1)

    e = 0
    for i in range(m):
        base = i * n
        for j in range(n - 1):
            ends_u[e] = base + j
            ends_v[e] = base + j + 1
            e += 1
    for i in range(m - 1):
        base = i * n
        for j in range(n):
            ends_u[e] = base + j
            ends_v[e] = base + j + n
            e += 1

    cdef int ru, rv, rk, ro, l, cnt
    cdef double kappa, cu, cv, d0, d1, d2, dz1, dz2, dist, lhs, rhs
    cdef unordered_map[int, int]* gk
    cdef unordered_map[int, int]* gl
    cdef unordered_map[int, int]* gn
    cdef unordered_map[int, int].iterator it
    cdef Py_ssize_t ki
    for ki in range(kappas.shape[0]):
        kappa = kappas[ki]
        for e in range(n_edges):
            ru = _find(parent, ends_u[e])
            rv = _find(parent, ends_v[e])
            if ru == rv:
                continue
            cu = <double> size[ru]
            cv = <double> size[rv]
            d0 = st[ru].a1 - st[rv].a1
            d1 = st[ru].a2 - st[rv].a2
            dz1 = st[rv].sz1 / cv - st[ru].sz1 / cu
            dz2 = st[rv].sz2 / cv - st[ru].sz2 / cu
            d2 = (st[ru].b - st[rv].b) + 0.5 * (st[ru].a1 + st[rv].a1) * dz1 \
                + 0.5 * (st[ru].a2 + st[rv].a2) * dz2
            dist = sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            lhs = cu * cv * dist
            rhs = kappa * <double> _gget(&gamma[ru], rv) \
                * <double> (size[ru] + size[rv])
            if lhs <= rhs:
                # merge rv into ru under the shared union rule
                rk = ru
                ro = rv
                if size[ro] > size[rk] or (size[ro] == size[rk] and ro < rk):
                    rk = rv
                    ro = ru
                parent[ro] = rk
                size[rk] += size[ro]
                st[rk].sz1 += st[ro].sz1
                st[rk].sz2 += st[ro].sz2
                st[rk].s11 += st[ro].s11
                st[rk].s12 += st[ro].s12
                st[rk].s22 += st[ro].s22
                st[rk].sy += st[ro].sy
                st[rk].sy1 += st[ro].sy1
                st[rk].sy2 += st[ro].sy2
                if st[ro].lo1 < st[rk].lo1:
                    st[rk].lo1 = st[ro].lo1
                if st[ro].hi1 > st[rk].hi1:
                    st[rk].hi1 = st[ro].hi1
                if st[ro].lo2 < st[rk].lo2:
                    st[rk].lo2 = st[ro].lo2
                if st[ro].hi2 > st[rk].hi2:
                    st[rk].hi2 = st[ro].hi2
                gk = &gamma[rk]
                gk.erase(ro)
                gl = &gamma[ro]
                it = gl.begin()
                while it != gl.end():
                    l = deref(it).first
                    cnt = deref(it).second
                    if l != rk:
                        _gadd(gk, l, cnt)
                        gn = &gamma[l]
                        gn.erase(ro)
                        _gadd(gn, rk, cnt)
                    inc(it)
                gl.clear()
                _refit(&st[rk], size[rk])

    _canonical_labels(parent, n_nodes, &labels[0])
    free(parent)
    free(size)
    free(st)
    free(ends_u)
    free(ends_v)
    return out
