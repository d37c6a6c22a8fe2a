"""Grid-graph topology for chains and 4-connected image grids.

Fixes the canonical edge order used everywhere: all row edges in
row-major order first, then all column edges in row-major order.  Every
edge-indexed vector (edge labelings, edge weights, model binaries, file
formats) follows this layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels


class GridError(ValueError):
    """Invalid grid size or inconsistent edge-indexed data."""


@dataclass(frozen=True)
class GridGraph:
    """4-connected grid with ``rows`` x ``cols`` nodes.

    Node (i, j) has flat index ``i * cols + j``.  Row edge (i, j) joins
    (i, j)-(i, j+1); column edge (i, j) joins (i, j)-(i+1, j).  A chain
    is the degenerate case ``rows == 1``.
    """

    rows: int
    cols: int

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def num_row_edges(self) -> int:
        return self.rows * (self.cols - 1)

    @property
    def num_col_edges(self) -> int:
        return (self.rows - 1) * self.cols

    @property
    def num_edges(self) -> int:
        return self.num_row_edges + self.num_col_edges

    @property
    def is_chain(self) -> bool:
        return self.rows == 1

    def node(self, i: int, j: int) -> int:
        return i * self.cols + j

    def node_ij(self, k: int) -> tuple[int, int]:
        return divmod(k, self.cols)

    def row_edge(self, i: int, j: int) -> int:
        """Edge id of (i, j)-(i, j+1); requires j < cols - 1."""
        return i * (self.cols - 1) + j

    def col_edge(self, i: int, j: int) -> int:
        """Edge id of (i, j)-(i+1, j); requires i < rows - 1."""
        return self.num_row_edges + i * self.cols + j

    @cached_property
    def edge_endpoints(self) -> np.ndarray:
        """(num_edges, 2) int32 array of flat node endpoints."""
        m, n = self.rows, self.cols
        ends = np.empty((self.num_edges, 2), dtype=np.int32)
        e = 0
        for i in range(m):
            base = i * n
            for j in range(n - 1):
                ends[e, 0] = base + j
                ends[e, 1] = base + j + 1
                e += 1
        for i in range(m - 1):
            base = i * n
            for j in range(n):
                ends[e, 0] = base + j
                ends[e, 1] = base + j + n
                e += 1
        return ends

    def edge_between(self, u: int, v: int) -> int:
        """Edge id joining flat nodes u, v, or -1 if not adjacent."""
        if u > v:
            u, v = v, u
        i, j = divmod(u, self.cols)
        if v == u + 1 and j < self.cols - 1:
            return self.row_edge(i, j)
        if v == u + self.cols:
            return self.col_edge(i, j)
        return -1

    def neighbors(self, k: int) -> list[int]:
        """Grid neighbors of flat node k, in up/left/right/down order."""
        i, j = divmod(k, self.cols)
        out = []
        if i > 0:
            out.append(k - self.cols)
        if j > 0:
            out.append(k - 1)
        if j < self.cols - 1:
            out.append(k + 1)
        if i < self.rows - 1:
            out.append(k + self.cols)
        return out

    def are_adjacent(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        d = v - u
        if d == self.cols:
            return True
        return d == 1 and (u % self.cols) != self.cols - 1


@dataclass(frozen=True)
class Cycle:
    """Closed walk given by its node sequence and the edges along it.

    ``nodes[k]``-``nodes[k+1]`` is ``edges[k]``; the last edge closes the
    walk back to ``nodes[0]``.  No node repeats.
    """

    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    chordless: bool

    def __len__(self) -> int:
        return len(self.edges)


def build_grid(m: int, n: int) -> GridGraph:
    """Construct the 4-connected m x n grid (chain when m == 1)."""
    if m < 1 or n < 1 or m * n < 2:
        raise GridError(f"degenerate grid size {m}x{n}; need at least 2 nodes")
    return GridGraph(m, n)


def enumerate_4cycles(g: GridGraph) -> list[Cycle]:
    """All unit-square face cycles, (m-1)(n-1) of them, all chordless."""
    out = []
    for i in range(g.rows - 1):
        for j in range(g.cols - 1):
            nodes = (g.node(i, j), g.node(i, j + 1),
                     g.node(i + 1, j + 1), g.node(i + 1, j))
            edges = (g.row_edge(i, j), g.col_edge(i, j + 1),
                     g.row_edge(i + 1, j), g.col_edge(i, j))
            out.append(Cycle(nodes, edges, chordless=True))
    return out


def enumerate_8cycles(g: GridGraph) -> list[Cycle]:
    """All 8-edge chordless cycles: the 3x3 block rings.

    Every other 8-edge simple cycle of a grid (boundaries of 1x3 face
    strips and of L-trominoes) carries a chord, so the rings around 3x3
    node blocks are the whole family; there are (m-2)(n-2) of them.
    """
    out = []
    for i in range(g.rows - 2):
        for j in range(g.cols - 2):
            nodes = (g.node(i, j), g.node(i, j + 1), g.node(i, j + 2),
                     g.node(i + 1, j + 2), g.node(i + 2, j + 2),
                     g.node(i + 2, j + 1), g.node(i + 2, j),
                     g.node(i + 1, j))
            edges = (g.row_edge(i, j), g.row_edge(i, j + 1),
                     g.col_edge(i, j + 2), g.col_edge(i + 1, j + 2),
                     g.row_edge(i + 2, j + 1), g.row_edge(i + 2, j),
                     g.col_edge(i + 1, j), g.col_edge(i, j))
            out.append(Cycle(nodes, edges, chordless=True))
    return out


def is_chordless(g: GridGraph, nodes: tuple[int, ...]) -> bool:
    """True if no grid edge joins two non-consecutive cycle nodes."""
    L = len(nodes)
    for a in range(L):
        for b in range(a + 2, L):
            if a == 0 and b == L - 1:
                continue  # consecutive via the closing edge
            if g.are_adjacent(nodes[a], nodes[b]):
                return False
    return True


def as_edge_labeling(g: GridGraph, x) -> np.ndarray:
    """Validate and coerce x to a uint8 edge vector in canonical order."""
    arr = np.ascontiguousarray(x, dtype=np.uint8)
    if arr.shape != (g.num_edges,):
        raise GridError(
            f"edge labeling has shape {arr.shape}, expected ({g.num_edges},)")
    if arr.max(initial=0) > 1:
        raise GridError("edge labeling entries must be 0 or 1")
    return arr


def connected_components(g: GridGraph, x) -> np.ndarray:
    """Component labels of the subgraph keeping only dormant edges.

    Labels are dense ints starting at 0; the component of the smallest
    flat node index (row-major) gets the smallest label.
    """
    arr = as_edge_labeling(g, x)
    return kernels.cc_labels(g.rows, g.cols, arr)
