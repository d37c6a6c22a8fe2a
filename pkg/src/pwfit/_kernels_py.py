"""Pure-Python kernels, mirroring pwfit._kernels operation for operation.

Both implementations must stay bit-identical: same union rule (larger
size wins, ties to the smaller root), same edge scan order, and the same
floating-point expression order in the merge test and the 3x3 refit.
"""

from __future__ import annotations

from math import sqrt

import numpy as np


def _find(parent: list, a: int) -> int:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def _canonical_labels(parent: list, n_nodes: int) -> np.ndarray:
    labels = np.empty(n_nodes, dtype=np.int32)
    seen: dict = {}
    nxt = 0
    for k in range(n_nodes):
        r = _find(parent, k)
        lab = seen.get(r)
        if lab is None:
            lab = nxt
            seen[r] = nxt
            nxt += 1
        labels[k] = lab
    return labels


def cc_labels(m: int, n: int, x: np.ndarray) -> np.ndarray:
    """Component labels of the m x n grid keeping only edges with x == 0."""
    n_nodes = m * n
    parent = list(range(n_nodes))
    size = [1] * n_nodes

    def union(a: int, b: int) -> None:
        ra = _find(parent, a)
        rb = _find(parent, b)
        if ra == rb:
            return
        if size[rb] > size[ra] or (size[rb] == size[ra] and rb < ra):
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]

    e = 0
    for i in range(m):
        base = i * n
        for j in range(n - 1):
            if x[e] == 0:
                union(base + j, base + j + 1)
            e += 1
    for i in range(m - 1):
        base = i * n
        for j in range(n):
            if x[e] == 0:
                union(base + j, base + j + n)
            e += 1
    return _canonical_labels(parent, n_nodes)


def _refit(c, sz1, sz2, s11, s12, s22, sy, sy1, sy2, lo1, hi1, lo2, hi2):
    """Least-squares plane through a segment's sufficient statistics.

    Returns (a1, a2, cbar) with cbar the fitted value at the segment
    centroid, which for least squares is exactly sum(y)/count.  Falls
    back to the zero-slope mean fit when the segment has fewer than 3
    nodes or its nodes lie on one grid row or column (a connected grid
    set is coordinate-degenerate exactly in that case).
    """
    cbar = sy / c
    if c < 3 or lo1 == hi1 or lo2 == hi2:
        return 0.0, 0.0, cbar
    det = (s11 * (s22 * c - sz2 * sz2)
           - s12 * (s12 * c - sz2 * sz1)
           + sz1 * (s12 * sz2 - s22 * sz1))
    a1 = (sy1 * (s22 * c - sz2 * sz2)
          - s12 * (sy2 * c - sz2 * sy)
          + sz1 * (sy2 * sz2 - s22 * sy)) / det
    a2 = (s11 * (sy2 * c - sy * sz2)
          - sy1 * (s12 * c - sz2 * sz1)
          + sz1 * (s12 * sy - sy2 * sz1)) / det
    return a1, a2, cbar


def fuse_regions(m: int, n: int, y: np.ndarray, y0: np.ndarray,
                 kappas: np.ndarray) -> np.ndarray:
    """Region-fusion merge sweep over the kappa schedule.

    y is the flat row-major intensity vector, y0 the (N, 3) initial
    per-node parameters as (a1, a2, value-at-node), kappas the ascending
    threshold schedule (one full edge sweep per value).  Returns
    canonical int32 labels.
    """
    n_nodes = m * n
    parent = list(range(n_nodes))
    size = [1] * n_nodes

    a1 = [0.0] * n_nodes
    a2 = [0.0] * n_nodes
    b = [0.0] * n_nodes
    sz1 = [0.0] * n_nodes
    sz2 = [0.0] * n_nodes
    s11 = [0.0] * n_nodes
    s12 = [0.0] * n_nodes
    s22 = [0.0] * n_nodes
    sy = [0.0] * n_nodes
    sy1 = [0.0] * n_nodes
    sy2 = [0.0] * n_nodes
    lo1 = [0] * n_nodes
    hi1 = [0] * n_nodes
    lo2 = [0] * n_nodes
    hi2 = [0] * n_nodes
    for k in range(n_nodes):
        i = k // n
        j = k - i * n
        a1[k] = float(y0[k, 0])
        a2[k] = float(y0[k, 1])
        b[k] = float(y0[k, 2])
        yk = float(y[k])
        fi = float(i)
        fj = float(j)
        sz1[k] = fi
        sz2[k] = fj
        s11[k] = fi * fi
        s12[k] = fi * fj
        s22[k] = fj * fj
        sy[k] = yk
        sy1[k] = yk * fi
        sy2[k] = yk * fj
        lo1[k] = hi1[k] = i
        lo2[k] = hi2[k] = j

    # gamma[r] maps adjacent root -> number of grid edges between them
    gamma: list = [dict() for _ in range(n_nodes)]
    for k in range(n_nodes):
        i = k // n
        j = k - i * n
        if j < n - 1:
            gamma[k][k + 1] = 1
            gamma[k + 1][k] = 1
        if i < m - 1:
            gamma[k][k + n] = 1
            gamma[k + n][k] = 1

    def merge(ru: int, rv: int) -> None:
        if size[rv] > size[ru] or (size[rv] == size[ru] and rv < ru):
            ru, rv = rv, ru
        parent[rv] = ru
        size[ru] += size[rv]
        sz1[ru] += sz1[rv]
        sz2[ru] += sz2[rv]
        s11[ru] += s11[rv]
        s12[ru] += s12[rv]
        s22[ru] += s22[rv]
        sy[ru] += sy[rv]
        sy1[ru] += sy1[rv]
        sy2[ru] += sy2[rv]
        if lo1[rv] < lo1[ru]:
            lo1[ru] = lo1[rv]
        if hi1[rv] > hi1[ru]:
            hi1[ru] = hi1[rv]
        if lo2[rv] < lo2[ru]:
            lo2[ru] = lo2[rv]
        if hi2[rv] > hi2[ru]:
            hi2[ru] = hi2[rv]
        gu = gamma[ru]
        gu.pop(rv, None)
        for l, cnt in gamma[rv].items():
            if l == ru:
                continue
            gu[l] = gu.get(l, 0) + cnt
            gl = gamma[l]
            del gl[rv]
            gl[ru] = gl.get(ru, 0) + cnt
        gamma[rv] = {}
        a1[ru], a2[ru], b[ru] = _refit(
            float(size[ru]), sz1[ru], sz2[ru], s11[ru], s12[ru], s22[ru],
            sy[ru], sy1[ru], sy2[ru], lo1[ru], hi1[ru], lo2[ru], hi2[ru])

    n_edges = m * (n - 1) + (m - 1) * n
    ends_u = [0] * n_edges
    ends_v = [0] * n_edges
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

    for kappa in kappas:
        kappa = float(kappa)
        for e in range(n_edges):
            ru = _find(parent, ends_u[e])
            rv = _find(parent, ends_v[e])
            if ru == rv:
                continue
            # parameter distance as (slope diffs, fitted-value diff at the
            # midpoint of the two segment centroids); zero iff the two
            # fitted planes coincide, and independent of the grid origin
            cu = float(size[ru])
            cv = float(size[rv])
            d0 = a1[ru] - a1[rv]
            d1 = a2[ru] - a2[rv]
            dz1 = sz1[rv] / cv - sz1[ru] / cu
            dz2 = sz2[rv] / cv - sz2[ru] / cu
            d2 = (b[ru] - b[rv]) + 0.5 * (a1[ru] + a1[rv]) * dz1 \
                + 0.5 * (a2[ru] + a2[rv]) * dz2
            dist = sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            lhs = cu * cv * dist
            rhs = kappa * float(gamma[ru][rv]) * float(size[ru] + size[rv])
            if lhs <= rhs:
                merge(ru, rv)

    return _canonical_labels(parent, n_nodes)
