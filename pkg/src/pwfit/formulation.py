"""Solver-agnostic MILP descriptions of the fitting models.

Variable layout (fixed, used by the backend and the LP writer):
columns [0, N) are the fitted values w per node, [N, 2N) the positive
residuals, [2N, 3N) the negative residuals, [3N, 3N+E) the binary edge
variables in canonical edge order.  All absolute values appear only in
linearized form: |w - y| becomes ep + em with w - ep + em = y, and each
second-derivative bound |d| <= M*s becomes the pair d - M*s <= 0,
-d - M*s <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Cycle, GridGraph, build_grid

FEASIBILITY_TOL = 1e-6

TAG_RESIDUAL = "residual-link"
TAG_D2_ROW = "second-derivative-row"
TAG_D2_COL = "second-derivative-col"
TAG_MULTICUT = "multicut"


class ModelError(ValueError):
    """Ill-formed instance, parameters, or constraint data."""


@dataclass(frozen=True)
class GridInstance:
    """Normalized intensities y on an m x n grid (chain when m == 1)."""

    graph: GridGraph
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (self.graph.rows, self.graph.cols):
            raise ModelError(
                f"y shape {y.shape} does not match grid "
                f"{self.graph.rows}x{self.graph.cols}")
        if not np.all(np.isfinite(y)):
            raise ModelError("y contains non-finite values")
        if y.min() < -FEASIBILITY_TOL or y.max() > 1 + FEASIBILITY_TOL:
            raise ModelError("y must be normalized to [0, 1]")
        object.__setattr__(self, "y", y)

    @classmethod
    def from_array(cls, y) -> "GridInstance":
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        return cls(build_grid(y.shape[0], y.shape[1]), y)

    @classmethod
    def chain(cls, y) -> "GridInstance":
        y = np.asarray(y, dtype=np.float64).reshape(1, -1)
        return cls(build_grid(1, y.shape[1]), y)


@dataclass(frozen=True)
class Params:
    """Regularization weights and the big-M constant.

    lambda_row[i] weighs every row edge in grid row i, lambda_col[j]
    every column edge in grid column j.  big_m = 2 is always valid for
    y in [0, 1].
    """

    xi: float
    lambda_row: np.ndarray
    lambda_col: np.ndarray
    big_m: float = 2.0

    def __post_init__(self):
        lr = np.asarray(self.lambda_row, dtype=np.float64)
        lc = np.asarray(self.lambda_col, dtype=np.float64)
        if lr.ndim != 1 or lc.ndim != 1:
            raise ModelError("lambda_row and lambda_col must be vectors")
        if (lr < 0).any() or (lc < 0).any():
            raise ModelError("edge weights must be nonnegative")
        if self.big_m <= 0:
            raise ModelError("big_m must be positive")
        object.__setattr__(self, "lambda_row", lr)
        object.__setattr__(self, "lambda_col", lc)

    def edge_weights(self, g: GridGraph) -> np.ndarray:
        """Per-edge weight vector in canonical edge order."""
        if len(self.lambda_row) != g.rows or len(self.lambda_col) != g.cols:
            raise ModelError("lambda vectors do not match the grid")
        w = np.empty(g.num_edges)
        w[:g.num_row_edges] = np.repeat(self.lambda_row, g.cols - 1)
        w[g.num_row_edges:] = np.tile(self.lambda_col, g.rows - 1)
        return w


def compute_lambda(instance: GridInstance, xi: float) -> Params:
    """Per-row/per-column weights from the user knob xi.

    lambda_row[i] = xi/2 * max_j |y[i,j-1] - 2 y[i,j] + y[i,j+1]| and the
    column analogue, so isolating an outlier pixel as a one-node segment
    costs 2*(lambda_row[i] + lambda_col[j]).  Rows shorter than 3 in the
    scanned direction get weight 0.
    """
    if xi <= 0:
        raise ModelError(f"xi must be positive, got {xi}")
    y = instance.y
    m, n = y.shape
    if n >= 3:
        d2r = np.abs(y[:, :-2] - 2.0 * y[:, 1:-1] + y[:, 2:])
        lam_row = 0.5 * xi * d2r.max(axis=1)
    else:
        lam_row = np.zeros(m)
    if m >= 3:
        d2c = np.abs(y[:-2, :] - 2.0 * y[1:-1, :] + y[2:, :])
        lam_col = 0.5 * xi * d2c.max(axis=0)
    else:
        lam_col = np.zeros(n)
    return Params(xi=xi, lambda_row=lam_row, lambda_col=lam_col)


@dataclass(frozen=True)
class Constraint:
    """One linear row: lower <= sum(coeffs * cols) <= upper."""

    name: str
    tag: str
    indices: np.ndarray
    coeffs: np.ndarray
    lower: float
    upper: float


@dataclass(frozen=True)
class CycleCut:
    """Multicut inequality sum_{e in edges \\ excluded} x_e >= x_excluded.

    Edges are stored sorted, which makes equal cuts compare equal; the
    pair (edges, excluded) is the dedup key used by the cut pool.
    """

    edges: tuple[int, ...]
    excluded: int

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        if self.excluded not in self.edges:
            raise ModelError("excluded edge must belong to the cycle")
        if len(set(self.edges)) != len(self.edges):
            raise ModelError("cycle edges must be distinct")


def cuts_from_cycle(cycle: Cycle) -> list[CycleCut]:
    """All |C| rotations of the cycle inequality, one per excluded edge."""
    return [CycleCut(cycle.edges, e) for e in cycle.edges]


@dataclass(frozen=True)
class ModelDescription:
    """Immutable MILP description consumed by the solver backend."""

    graph: GridGraph
    y: np.ndarray           # flat row-major copy
    params: Params
    constraints: tuple[Constraint, ...]

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges

    @property
    def num_cols(self) -> int:
        return 3 * self.num_nodes + self.num_edges

    def w_col(self, k: int) -> int:
        return k

    def ep_col(self, k: int) -> int:
        return self.num_nodes + k

    def em_col(self, k: int) -> int:
        return 2 * self.num_nodes + k

    def x_col(self, e: int) -> int:
        return 3 * self.num_nodes + e

    @cached_property
    def col_cost(self) -> np.ndarray:
        N = self.num_nodes
        cost = np.zeros(self.num_cols)
        cost[N:3 * N] = 1.0
        cost[3 * N:] = self.params.edge_weights(self.graph)
        return cost

    @cached_property
    def col_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        N, E = self.num_nodes, self.num_edges
        lower = np.concatenate([
            np.full(N, -np.inf), np.zeros(2 * N), np.zeros(E)])
        upper = np.concatenate([
            np.full(N, np.inf), np.full(2 * N, np.inf), np.ones(E)])
        return lower, upper

    @property
    def binary_cols(self) -> range:
        return range(3 * self.num_nodes, self.num_cols)

    def var_name(self, col: int) -> str:
        N = self.num_nodes
        if col < N:
            return f"w_{col}"
        if col < 2 * N:
            return f"ep_{col - N}"
        if col < 3 * N:
            return f"em_{col - 2 * N}"
        return f"x_{col - 3 * N}"

    @property
    def constraint_tags(self) -> dict:
        return {c.name: c.tag for c in self.constraints}

    def cut_constraint(self, cut: CycleCut, name: str) -> Constraint:
        """Materialize one multicut inequality against this layout."""
        E = self.num_edges
        for e in cut.edges:
            if not 0 <= e < E:
                raise ModelError(
                    f"cut references edge {e} outside the grid (E={E})")
        idx = np.fromiter((self.x_col(e) for e in cut.edges),
                          dtype=np.int32, count=len(cut.edges))
        coef = np.ones(len(cut.edges))
        coef[cut.edges.index(cut.excluded)] = -1.0
        return Constraint(name, TAG_MULTICUT, idx, coef, 0.0, np.inf)


def _residual_links(model_y: np.ndarray, g: GridGraph) -> list[Constraint]:
    N = g.num_nodes
    out = []
    for k in range(N):
        idx = np.array([k, N + k, 2 * N + k], dtype=np.int32)
        coef = np.array([1.0, -1.0, 1.0])
        out.append(Constraint(f"link_{k}", TAG_RESIDUAL, idx, coef,
                              float(model_y[k]), float(model_y[k])))
    return out


def _d2_pair(name: str, tag: str, w_idx, x_idx, big_m: float):
    """Two rows linearizing |w_a - 2 w_b + w_c| <= M * (x_p + x_q)."""
    iplus = np.array([*w_idx, *x_idx], dtype=np.int32)
    cplus = np.array([1.0, -2.0, 1.0, -big_m, -big_m])
    cminus = np.array([-1.0, 2.0, -1.0, -big_m, -big_m])
    return (Constraint(name + "p", tag, iplus, cplus, -np.inf, 0.0),
            Constraint(name + "m", tag, iplus, cminus, -np.inf, 0.0))


def build_2d_model(instance: GridInstance, params: Params,
                   initial_cycles: tuple[Cycle, ...] = ()) -> ModelDescription:
    """The grid model: residual links, per-row and per-column
    second-derivative big-M pairs, and one multicut inequality per
    (initial cycle, excluded edge) pair.

    Directions shorter than 3 nodes simply emit no second-derivative
    constraints; the model stays well-formed down to 2 nodes.
    """
    g = instance.graph
    y = instance.y.ravel()
    if len(params.lambda_row) != g.rows or len(params.lambda_col) != g.cols:
        raise ModelError("params do not match instance grid")
    M = params.big_m
    N = g.num_nodes
    cons = _residual_links(y, g)

    for i in range(g.rows):
        for j in range(1, g.cols - 1):
            name = f"d2r_{i}_{j}"
            widx = (g.node(i, j - 1), g.node(i, j), g.node(i, j + 1))
            xidx = (3 * N + g.row_edge(i, j - 1), 3 * N + g.row_edge(i, j))
            cons.extend(_d2_pair(name, TAG_D2_ROW, widx, xidx, M))
    for j in range(g.cols):
        for i in range(1, g.rows - 1):
            name = f"d2c_{i}_{j}"
            widx = (g.node(i - 1, j), g.node(i, j), g.node(i + 1, j))
            xidx = (3 * N + g.col_edge(i - 1, j), 3 * N + g.col_edge(i, j))
            cons.extend(_d2_pair(name, TAG_D2_COL, widx, xidx, M))

    model = ModelDescription(g, y, params, tuple(cons))
    if initial_cycles:
        extra = list(cons)
        t = 0
        for cyc in initial_cycles:
            for cut in cuts_from_cycle(cyc):
                extra.append(model.cut_constraint(cut, f"cyc_{t}"))
                t += 1
        model = ModelDescription(g, y, params, tuple(extra))
    return model


def build_1d_model(instance: GridInstance, params: Params) -> ModelDescription:
    """Chain specialization of the grid model (single row, scalar lambda)."""
    if not instance.graph.is_chain:
        raise ModelError("build_1d_model requires a chain instance (m == 1)")
    if instance.graph.cols < 3:
        raise ModelError(
            "chain model needs n >= 3 (no second-derivative constraint "
            "exists below that)")
    return build_2d_model(instance, params)


@dataclass(frozen=True)
class ModelStatistics:
    num_binary: int
    num_continuous: int
    rows_by_tag: dict


def model_statistics(model: ModelDescription) -> ModelStatistics:
    by_tag: dict = {}
    for c in model.constraints:
        by_tag[c.tag] = by_tag.get(c.tag, 0) + 1
    return ModelStatistics(
        num_binary=model.num_edges,
        num_continuous=3 * model.num_nodes,
        rows_by_tag=by_tag,
    )
