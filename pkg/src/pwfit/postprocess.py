"""From a solved labeling to segments, affine pieces, and quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .formulation import GridInstance
from .grid import GridGraph, as_edge_labeling, connected_components


class PostprocessError(ValueError):
    pass


@dataclass(frozen=True)
class Segmentation:
    """Node labels plus the derived per-segment node sets and boundary."""

    labels: np.ndarray                 # (num_nodes,) dense ints from 0
    segments: tuple[np.ndarray, ...]   # node indices per label
    boundary: np.ndarray               # edge ids with differing end labels

    @classmethod
    def from_labels(cls, g: GridGraph, labels) -> "Segmentation":
        labels = np.asarray(labels, dtype=np.int32).ravel()
        if labels.shape != (g.num_nodes,):
            raise PostprocessError(
                f"labels shape {labels.shape} != ({g.num_nodes},)")
        ids = np.unique(labels)
        if ids[0] != 0 or ids[-1] != len(ids) - 1:
            raise PostprocessError("labels must be dense integers from 0")
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(len(ids) + 1))
        segments = tuple(np.sort(order[bounds[k]:bounds[k + 1]])
                         for k in range(len(ids)))
        ends = g.edge_endpoints
        boundary = np.flatnonzero(labels[ends[:, 0]] != labels[ends[:, 1]])
        return cls(labels, segments, boundary)

    @property
    def num_segments(self) -> int:
        return len(self.segments)


def labels_from_edges(g: GridGraph, x) -> Segmentation:
    """Segmentation induced by a multicut-feasible labeling.

    Rejects labelings whose active edges do not all cross component
    boundaries (the induced boundary would not match the labeling).
    """
    arr = as_edge_labeling(g, x)
    labels = connected_components(g, arr)
    seg = Segmentation.from_labels(g, labels)
    active = np.flatnonzero(arr)
    if (seg.boundary.size != active.size
            or not np.array_equal(seg.boundary, active)):
        raise PostprocessError(
            "labeling is not a valid multicut: active edges do not match "
            "the component boundary")
    return seg


@dataclass(frozen=True)
class AffinePiece:
    """Fitted plane w = a1*z1 + a2*z2 + b over one segment.

    Coordinates are integer pixel indices (z1 = row, z2 = column).  For
    chain instances the position along the chain is reported in a1 and
    a2 is 0.  fit_residual is the sum of absolute residuals regardless
    of the fitting norm.
    """

    segment_id: int
    a1: float
    a2: float
    b: float
    fit_residual: float

    def values(self, z1, z2):
        return self.a1 * np.asarray(z1) + self.a2 * np.asarray(z2) + self.b


def _l1_affine_fit(z1, z2, vals):
    """Least-absolute-deviations plane via a small LP."""
    npts = len(vals)
    ncol = 3 + 2 * npts  # a1, a2, b, r+, r-
    cost = np.concatenate([np.zeros(3), np.ones(2 * npts)])
    a_eq = np.zeros((npts, ncol))
    a_eq[:, 0] = z1
    a_eq[:, 1] = z2
    a_eq[:, 2] = 1.0
    a_eq[:, 3:3 + npts] = -np.eye(npts)
    a_eq[:, 3 + npts:] = np.eye(npts)
    bounds = [(None, None)] * 3 + [(0, None)] * (2 * npts)
    res = linprog(cost, A_eq=a_eq, b_eq=vals, bounds=bounds, method="highs")
    if not res.success:  # pragma: no cover
        raise PostprocessError(f"piece LP failed: {res.message}")
    return float(res.x[0]), float(res.x[1]), float(res.x[2])


def _l2_affine_fit(z1, z2, vals):
    design = np.column_stack([z1, z2, np.ones(len(vals))])
    sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
    return float(sol[0]), float(sol[1]), float(sol[2])


def fit_pieces(instance: GridInstance, seg: Segmentation, norm: str = "l1"):
    """Per-segment affine fit and the assembled piecewise image f.

    norm "l1" matches the model's absolute fitting term (LP per piece);
    "l2" is the closed-form least-squares alternative.  Segments with
    fewer than 3 nodes, or confined to one grid row or column, get a
    constant fit (median for l1, mean for l2).
    """
    if norm not in ("l1", "l2"):
        raise PostprocessError(f"unknown norm {norm!r}")
    g = instance.graph
    y = instance.y.ravel()
    chain = g.is_chain
    pieces = []
    f = np.empty(g.num_nodes)
    for sid, nodes in enumerate(seg.segments):
        z1 = (nodes // g.cols).astype(np.float64)
        z2 = (nodes % g.cols).astype(np.float64)
        vals = y[nodes]
        degenerate = (len(nodes) < 3
                      or z1.min() == z1.max() or z2.min() == z2.max())
        if chain:
            degenerate = len(nodes) < 2
        if degenerate:
            c = float(np.median(vals)) if norm == "l1" else float(vals.mean())
            a1, a2, b = 0.0, 0.0, c
            fitted = np.full(len(nodes), c)
        elif chain:
            # single row: fit along the chain, report slope in a1
            zeros = np.zeros(len(nodes))
            if norm == "l1":
                a1, _, b = _l1_affine_fit(z2, zeros, vals)
            else:
                a1, _, b = _l2_affine_fit(z2, zeros, vals)
            a2 = 0.0
            fitted = a1 * z2 + b
        else:
            if norm == "l1":
                a1, a2, b = _l1_affine_fit(z1, z2, vals)
            else:
                a1, a2, b = _l2_affine_fit(z1, z2, vals)
            fitted = a1 * z1 + a2 * z2 + b
        resid = float(np.abs(fitted - vals).sum())
        pieces.append(AffinePiece(sid, a1, a2, b, resid))
        f[nodes] = fitted
    return pieces, f.reshape(g.rows, g.cols)


def rand_index(labels_a, labels_b) -> float:
    """Pair-counting agreement between two partitions (1.0 = identical)."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise PostprocessError("label maps differ in size")
    npts = a.size
    if npts < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    cont = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(cont, (ai, bi), 1)
    sum_sq = (cont.astype(np.float64) ** 2).sum()
    sum_a = (cont.sum(axis=1).astype(np.float64) ** 2).sum()
    sum_b = (cont.sum(axis=0).astype(np.float64) ** 2).sum()
    total = npts * (npts - 1) / 2.0
    same_same = (sum_sq - npts) / 2.0
    diff_diff = total - (sum_a - npts) / 2.0 - (sum_b - npts) / 2.0 + same_same
    return float((same_same + diff_diff) / total)


def partitions_equal(labels_a, labels_b) -> bool:
    """True when the two label maps induce the same partition."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        return False
    pair = a.astype(np.int64) * (np.int64(b.max()) + 1) + b
    n_pairs = len(np.unique(pair))
    return n_pairs == len(np.unique(a)) == len(np.unique(b))


def reconstruct_image(g: GridGraph, seg: Segmentation, pieces) -> np.ndarray:
    f = np.empty(g.num_nodes)
    for piece, nodes in zip(pieces, seg.segments):
        z1 = nodes // g.cols
        z2 = nodes % g.cols
        f[nodes] = piece.values(z1, z2)
    return f.reshape(g.rows, g.cols)


def evaluate(instance: GridInstance, solution, seg: Segmentation, pieces,
             ground_truth=None) -> dict:
    """Metrics record for one run.

    ground_truth, when given, is a (labels, clean_image) pair; it adds
    the exact-match flag, the Rand index, and mean absolute errors of
    both w and the reconstructed f against the clean image.
    """
    g = instance.graph
    w = np.asarray(solution.w)
    if w.shape != instance.y.shape:
        raise PostprocessError("solution w does not match instance shape")
    x = as_edge_labeling(g, solution.x)
    fit_term = float(np.abs(w - instance.y).sum())
    record = {
        "fit_term": fit_term,
        "reg_term": float(solution.objective) - fit_term,
        "segment_count": seg.num_segments,
        "boundary_length": int(x.sum()),
        "objective": float(solution.objective),
        "best_bound": float(solution.best_bound),
        "gap": float(solution.gap),
        "node_count": int(solution.node_count),
        "cuts_added": int(solution.cuts_added),
        "rounds": len(solution.rounds),
        "wall_time": float(solution.wall_time),
        "status": str(getattr(solution.status, "value", solution.status)),
        "piece_residual_total": float(sum(p.fit_residual for p in pieces)),
    }
    if ground_truth is not None:
        gt_labels, clean = ground_truth
        gt_labels = np.asarray(gt_labels).ravel()
        clean = np.asarray(clean, dtype=np.float64)
        if gt_labels.size != g.num_nodes or clean.shape != instance.y.shape:
            raise PostprocessError("ground truth does not match instance")
        f = reconstruct_image(g, seg, pieces)
        record["exact_match"] = bool(partitions_equal(seg.labels, gt_labels))
        record["rand_index"] = rand_index(seg.labels, gt_labels)
        record["mae_w"] = float(np.abs(w - clean).mean())
        record["mae_f"] = float(np.abs(f - clean).mean())
    return record
