"""Region-fusion heuristic: a fast valid segmentation, used standalone or
as the exact solver's warm start.

Every node starts as its own segment with the affine parameters of its
best-fitting 2x2 neighborhood group; adjacent segments then merge
greedily under a size- and boundary-weighted closeness test whose
threshold doubles every round until it reaches the mean edge weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from . import kernels
from .formulation import GridInstance, Params
from .grid import GridGraph
from .postprocess import Segmentation


class HeuristicError(ValueError):
    pass


@dataclass(frozen=True)
class NodeAffineInit:
    """Initial per-node affine parameters from the winning 2x2 group.

    params[k] = (a1, a2, b) of node k's best group (minimum fitting MSE;
    first group in NW/NE/SW/SE order wins ties), source_group[k] its
    0..3 code, mse[k] the winning mean squared residual.  Interior nodes
    choose among 4 groups, border nodes 2, corner nodes 1.
    """

    params: np.ndarray        # (num_nodes, 3)
    source_group: np.ndarray  # (num_nodes,)
    mse: np.ndarray           # (num_nodes,)


def init_node_params(instance: GridInstance) -> NodeAffineInit:
    """Least-squares plane per candidate 2x2 group, best MSE wins."""
    y = instance.y
    m, n = y.shape
    if m < 2 or n < 2:
        raise HeuristicError("2x2 group fitting needs at least a 2x2 grid")
    # per-face closed-form fit: faces indexed by their top-left node
    fa1 = 0.5 * ((y[1:, :-1] + y[1:, 1:]) - (y[:-1, :-1] + y[:-1, 1:]))
    fa2 = 0.5 * ((y[:-1, 1:] + y[1:, 1:]) - (y[:-1, :-1] + y[1:, :-1]))
    ybar = 0.25 * (y[:-1, :-1] + y[:-1, 1:] + y[1:, :-1] + y[1:, 1:])
    ii = np.arange(m - 1)[:, None] + 0.5
    jj = np.arange(n - 1)[None, :] + 0.5
    fb = ybar - fa1 * ii - fa2 * jj
    d = y[:-1, :-1] - y[:-1, 1:] - y[1:, :-1] + y[1:, 1:]
    fmse = d * d / 16.0

    params = np.zeros((m * n, 3))
    source = np.zeros(m * n, dtype=np.int8)
    mse = np.zeros(m * n)
    for i in range(m):
        for j in range(n):
            best = None
            # groups by top-left face corner: NW, NE, SW, SE of the node
            for code, (fi, fj) in enumerate(
                    ((i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j))):
                if 0 <= fi < m - 1 and 0 <= fj < n - 1:
                    cand = (fmse[fi, fj], code, fi, fj)
                    if best is None or cand[0] < best[0]:
                        best = cand
            gmse, code, fi, fj = best
            k = i * n + j
            params[k, 0] = fa1[fi, fj]
            params[k, 1] = fa2[fi, fj]
            params[k, 2] = fb[fi, fj]
            source[k] = code
            mse[k] = gmse
    return NodeAffineInit(params, source, mse)


def merge_test(tau_i: int, tau_j: int, y_i, y_j, gamma_ij: int,
               kappa: float) -> bool:
    """tau_i*tau_j*||Y_i - Y_j||_2 <= kappa*gamma_ij*(tau_i + tau_j)."""
    if gamma_ij < 1:
        raise HeuristicError("merge test requires adjacent segments")
    d = np.asarray(y_i, dtype=np.float64) - np.asarray(y_j, dtype=np.float64)
    lhs = float(tau_i) * float(tau_j) * sqrt(float(np.dot(d, d)))
    rhs = float(kappa) * float(gamma_ij) * float(tau_i + tau_j)
    return lhs <= rhs


@dataclass(frozen=True)
class KappaSchedule:
    """Geometric threshold schedule kappa_t = kappa0 * growth^t.

    The default doubles from lambda_bar / 2^rounds up to lambda_bar, the
    mean of all row/column edge weights, reconciling the single-lambda
    stopping rule with per-row/column weights.
    """

    kappa0: float
    growth: float = 2.0
    rounds: int = 16

    def values(self) -> np.ndarray:
        return self.kappa0 * self.growth ** np.arange(self.rounds + 1,
                                                      dtype=np.float64)

    @classmethod
    def for_params(cls, params: Params) -> "KappaSchedule":
        lam_bar = float(np.concatenate([params.lambda_row,
                                        params.lambda_col]).mean())
        # floor keeps the schedule positive on constant images (all
        # weights 0), where float-ulp noise in segment means would
        # otherwise block even identical-parameter merges
        return cls(kappa0=max(lam_bar, 1e-8) / 2.0 ** 16)


def region_fusion(instance: GridInstance, params: Params,
                  schedule: KappaSchedule | None = None):
    """Run the merge loop; returns (Segmentation, edge labeling).

    The labeling x_e = 1 iff e's endpoints land in different segments,
    which is multicut-feasible by construction.
    """
    g = instance.graph
    if g.rows < 2 or g.cols < 2:
        raise HeuristicError("region fusion needs a 2D instance (m, n >= 2)")
    if schedule is None:
        schedule = KappaSchedule.for_params(params)
    init = init_node_params(instance)
    # compare (a1, a2, fitted value at the node/segment centroid) rather
    # than the origin intercept, which would make the closeness test
    # depend on how far a segment sits from pixel (0, 0)
    ii = np.repeat(np.arange(g.rows, dtype=np.float64), g.cols)
    jj = np.tile(np.arange(g.cols, dtype=np.float64), g.rows)
    y0 = init.params.copy()
    y0[:, 2] = init.params[:, 0] * ii + init.params[:, 1] * jj \
        + init.params[:, 2]
    labels = kernels.fuse_regions(
        g.rows, g.cols, np.ascontiguousarray(instance.y.ravel()),
        np.ascontiguousarray(y0),
        np.ascontiguousarray(schedule.values()))
    seg = Segmentation.from_labels(g, labels)
    return seg, segmentation_to_edges(seg, g)


def segmentation_to_edges(seg: Segmentation, g: GridGraph) -> np.ndarray:
    """x_e = 1 iff the endpoints of e carry different segment labels."""
    ends = g.edge_endpoints
    labels = seg.labels
    return (labels[ends[:, 0]] != labels[ends[:, 1]]).astype(np.uint8)
