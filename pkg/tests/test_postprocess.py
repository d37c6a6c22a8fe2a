import numpy as np
import pytest

from pwfit.backend import SolveLimits
from pwfit.formulation import GridInstance, Params, compute_lambda
from pwfit.grid import build_grid
from pwfit.heuristic import segmentation_to_edges
from pwfit.postprocess import (PostprocessError, Segmentation, evaluate,
                               fit_pieces, labels_from_edges, rand_index,
                               partitions_equal, reconstruct_image)
from pwfit.separation import cutting_plane_solve


def test_labels_from_edges_trivial():
    g = build_grid(3, 3)
    seg = labels_from_edges(g, np.zeros(g.num_edges, np.uint8))
    assert seg.num_segments == 1
    seg = labels_from_edges(g, np.ones(g.num_edges, np.uint8))
    assert seg.num_segments == 9
    assert all(len(s) == 1 for s in seg.segments)


def test_labels_from_edges_rejects_infeasible():
    g = build_grid(2, 2)
    x = np.zeros(4, np.uint8)
    x[0] = 1
    with pytest.raises(PostprocessError):
        labels_from_edges(g, x)


def test_roundtrip_labels_edges_labels():
    rng = np.random.default_rng(2)
    g = build_grid(4, 5)
    labels = rng.integers(0, 3, g.num_nodes)
    # relabel densely via Segmentation on connected pieces: use edges
    x = (labels[g.edge_endpoints[:, 0]]
         != labels[g.edge_endpoints[:, 1]]).astype(np.uint8)
    seg = labels_from_edges(g, x)
    x2 = segmentation_to_edges(seg, g)
    assert np.array_equal(x, x2)


def _l2_normal_equations(z1, z2, vals):
    a = np.column_stack([z1, z2, np.ones(len(vals))])
    return np.linalg.solve(a.T @ a, a.T @ vals)


def test_fit_pieces_exact_two_planes():
    m, n = 6, 8
    ii = np.arange(m)[:, None] * np.ones((1, n))
    jj = np.ones((m, 1)) * np.arange(n)[None, :]
    left = 0.02 * ii + 0.03 * jj + 0.1
    right = -0.01 * ii + 0.02 * jj + 0.6
    y = np.where(jj < 4, left, right)
    inst = GridInstance.from_array(y)
    labels = (jj >= 4).astype(int).ravel()
    seg = Segmentation.from_labels(inst.graph, labels)
    for norm in ("l1", "l2"):
        pieces, f = fit_pieces(inst, seg, norm=norm)
        assert pieces[0].a1 == pytest.approx(0.02, abs=1e-8)
        assert pieces[0].a2 == pytest.approx(0.03, abs=1e-8)
        assert pieces[0].b == pytest.approx(0.1, abs=1e-8)
        assert pieces[1].a1 == pytest.approx(-0.01, abs=1e-8)
        assert np.allclose(f, y, atol=1e-8)
        assert pieces[0].fit_residual == pytest.approx(0.0, abs=1e-8)


def test_fit_pieces_l2_matches_normal_equations():
    rng = np.random.default_rng(3)
    y = rng.uniform(size=(5, 5))
    inst = GridInstance.from_array(y)
    labels = np.zeros(25, int)
    labels[12:] = 1
    # make both parts connected: split rows 0-1 vs 2-4
    labels = (np.arange(25) // 5 >= 2).astype(int)
    seg = Segmentation.from_labels(inst.graph, labels)
    pieces, _ = fit_pieces(inst, seg, norm="l2")
    for piece, nodes in zip(pieces, seg.segments):
        z1, z2 = nodes // 5, nodes % 5
        want = _l2_normal_equations(z1, z2, y.ravel()[nodes])
        assert piece.a1 == pytest.approx(want[0], abs=1e-8)
        assert piece.a2 == pytest.approx(want[1], abs=1e-8)
        assert piece.b == pytest.approx(want[2], abs=1e-8)


def test_fit_pieces_l1_beats_or_ties_l2_in_l1_norm():
    rng = np.random.default_rng(11)
    y = rng.uniform(size=(4, 6))
    inst = GridInstance.from_array(y)
    seg = Segmentation.from_labels(inst.graph, np.zeros(24, int))
    l1_pieces, _ = fit_pieces(inst, seg, norm="l1")
    l2_pieces, _ = fit_pieces(inst, seg, norm="l2")
    assert l1_pieces[0].fit_residual <= l2_pieces[0].fit_residual + 1e-9


def test_fit_pieces_single_node_and_degenerate_segments():
    y = np.array([[0.1, 0.9, 0.9],
                  [0.1, 0.9, 0.2]])
    inst = GridInstance.from_array(y)
    labels = np.array([0, 1, 1, 0, 1, 2])
    seg = Segmentation.from_labels(inst.graph, labels)
    pieces, f = fit_pieces(inst, seg, norm="l1")
    # segment 2 is the single node (1, 2)
    assert pieces[2].a1 == 0 and pieces[2].a2 == 0
    assert pieces[2].b == pytest.approx(0.2)
    # segment 0 is a single column -> constant fit at the median
    assert pieces[0].a1 == 0 and pieces[0].b == pytest.approx(0.1)


def test_fit_pieces_chain_reports_slope_in_a1():
    inst = GridInstance.chain([0.0, 0.25, 0.5, 0.75, 1.0])
    seg = Segmentation.from_labels(inst.graph, np.zeros(5, int))
    pieces, f = fit_pieces(inst, seg, norm="l1")
    assert pieces[0].a1 == pytest.approx(0.25, abs=1e-9)
    assert pieces[0].a2 == 0.0
    assert np.allclose(f, inst.y)


def test_rand_index_and_partitions():
    a = np.array([0, 0, 1, 1])
    assert rand_index(a, np.array([1, 1, 0, 0])) == 1.0
    assert partitions_equal(a, np.array([5, 5, 2, 2]))
    assert not partitions_equal(a, np.array([0, 0, 0, 1]))
    assert rand_index(a, np.array([0, 1, 2, 3])) < 1.0


def test_evaluate_on_solved_instance():
    rng = np.random.default_rng(1)
    from pwfit.instance_io import builtin_synthetic
    inst, gt = builtin_synthetic("quad", 8, 10, 0.0, 0)
    params = compute_lambda(inst, 0.5)
    sol = cutting_plane_solve(inst, params, variant="mph-4",
                              limits=SolveLimits(120))
    seg = labels_from_edges(inst.graph, sol.x)
    pieces, f = fit_pieces(inst, seg)
    rec = evaluate(inst, sol, seg, pieces, ground_truth=(gt.labels, gt.clean))
    assert rec["rand_index"] == 1.0
    assert rec["exact_match"] is True
    assert rec["fit_term"] == pytest.approx(0.0, abs=1e-7)
    assert rec["reg_term"] == pytest.approx(sol.objective, abs=1e-7)
    assert rec["segment_count"] == 4
    assert rec["boundary_length"] == int(sol.x.sum())
    assert rec["mae_w"] == pytest.approx(0.0, abs=1e-8)
    assert rec["mae_f"] == pytest.approx(0.0, abs=1e-8)


def test_evaluate_chain_segment_count_identity():
    # in 1D the number of segments is the number of active edges plus 1
    rng = np.random.default_rng(4)
    y = rng.uniform(size=8)
    inst = GridInstance.chain(y)
    params = Params(1.0, np.array([0.1]), np.zeros(8))
    sol = cutting_plane_solve(inst, params, variant="mp",
                              limits=SolveLimits(60))
    seg = labels_from_edges(inst.graph, sol.x)
    assert seg.num_segments == int(sol.x.sum()) + 1


def test_reconstruct_image_roundtrip():
    y = np.linspace(0, 1, 12).reshape(3, 4)
    inst = GridInstance.from_array(y)
    seg = Segmentation.from_labels(inst.graph, np.zeros(12, int))
    pieces, f = fit_pieces(inst, seg, norm="l2")
    f2 = reconstruct_image(inst.graph, seg, pieces)
    assert np.allclose(f, f2)


def test_f_equals_w_on_exactly_affine_segments():
    from pwfit.instance_io import builtin_synthetic
    inst, gt = builtin_synthetic("quad", 8, 10, 0.0, 0)
    from pwfit.formulation import compute_lambda
    sol = cutting_plane_solve(inst, compute_lambda(inst, 0.5),
                              variant="mph-4", limits=SolveLimits(60))
    seg = labels_from_edges(inst.graph, sol.x)
    pieces, f = fit_pieces(inst, seg, norm="l1")
    # w is exactly piecewise affine on a clean instance, so the
    # reconstruction must coincide with it
    assert np.allclose(f, sol.w, atol=1e-6)
