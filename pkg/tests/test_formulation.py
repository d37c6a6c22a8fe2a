import numpy as np
import pytest

from pwfit.formulation import (CycleCut, GridInstance, ModelError, Params,
                               TAG_D2_COL, TAG_D2_ROW, TAG_MULTICUT,
                               TAG_RESIDUAL, build_1d_model, build_2d_model,
                               compute_lambda, cuts_from_cycle,
                               model_statistics)
from pwfit.grid import Cycle, build_grid, enumerate_4cycles


def test_instance_validation():
    with pytest.raises(ModelError):
        GridInstance.from_array([[0.0, 2.0], [0.0, 0.5]])
    with pytest.raises(ModelError):
        GridInstance(build_grid(2, 2), np.zeros((3, 2)))
    inst = GridInstance.chain([0.0, 0.5, 1.0])
    assert inst.graph.is_chain and inst.graph.cols == 3


def test_compute_lambda_row_formula():
    inst = GridInstance.chain([0.0, 0.2, 0.8])
    p = compute_lambda(inst, 0.5)
    # second difference 0.0 - 0.4 + 0.8 = 0.4 -> 0.5 * 0.5 * 0.4
    assert p.lambda_row[0] == pytest.approx(0.1)
    assert p.lambda_col.tolist() == [0.0, 0.0, 0.0]
    assert p.big_m == 2.0


def test_compute_lambda_constant_row_is_zero():
    inst = GridInstance.from_array(np.full((3, 5), 0.7))
    p = compute_lambda(inst, 3.0)
    assert np.all(p.lambda_row == 0)
    assert np.all(p.lambda_col == 0)


def test_compute_lambda_outlier_penalty():
    # isolating pixel (i, j) activates its 4 edges, costing
    # 2 * (lambda_row[i] + lambda_col[j])
    y = np.full((5, 5), 0.4)
    y[2, 2] = 1.0
    inst = GridInstance.from_array(y)
    p = compute_lambda(inst, 1.0)
    cost = 2 * (p.lambda_row[2] + p.lambda_col[2])
    # each direction sees max |d2| = 1.2 right at the outlier
    assert p.lambda_row[2] == pytest.approx(0.5 * 1.0 * 1.2)
    assert p.lambda_col[2] == pytest.approx(0.6)
    assert cost == pytest.approx(2.4)


def test_compute_lambda_rejects_nonpositive_xi():
    inst = GridInstance.chain([0.0, 0.5, 1.0])
    with pytest.raises(ModelError):
        compute_lambda(inst, 0.0)
    with pytest.raises(ModelError):
        compute_lambda(inst, -1.0)


def _chain_params(n, lam):
    return Params(xi=1.0, lambda_row=np.array([lam]), lambda_col=np.zeros(n))


def test_build_1d_model_shapes():
    inst = GridInstance.chain([0.0, 0.25, 0.5, 0.75])
    model = build_1d_model(inst, _chain_params(4, 0.2))
    stats = model_statistics(model)
    assert stats.num_binary == 3
    assert stats.num_continuous == 12  # 4 w + 8 residuals
    assert stats.rows_by_tag[TAG_RESIDUAL] == 4
    assert stats.rows_by_tag[TAG_D2_ROW] == 4  # 2 interior positions x 2 sides
    assert TAG_D2_COL not in stats.rows_by_tag


def test_build_1d_model_rejects_short_chain():
    inst = GridInstance.chain([0.0, 1.0])
    with pytest.raises(ModelError):
        build_1d_model(inst, _chain_params(2, 0.1))


def test_build_1d_model_rejects_grid():
    inst = GridInstance.from_array(np.zeros((2, 3)))
    with pytest.raises(ModelError):
        build_1d_model(inst, Params(1.0, np.zeros(2), np.zeros(3)))


def test_build_2d_model_statistics():
    inst = GridInstance.from_array(np.zeros((3, 4)))
    params = Params(1.0, np.full(3, 0.1), np.full(4, 0.1))
    model = build_2d_model(inst, params)
    stats = model_statistics(model)
    assert stats.num_binary == 17
    assert stats.rows_by_tag[TAG_D2_ROW] == 3 * 2 * 2
    assert stats.rows_by_tag[TAG_D2_COL] == 4 * 1 * 2
    assert TAG_MULTICUT not in stats.rows_by_tag

    cycles = tuple(enumerate_4cycles(inst.graph))
    model4 = build_2d_model(inst, params, cycles)
    stats4 = model_statistics(model4)
    assert stats4.rows_by_tag[TAG_MULTICUT] == 6 * 4


def test_build_2d_model_2x2_has_no_d2_rows():
    inst = GridInstance.from_array(np.zeros((2, 2)))
    params = Params(1.0, np.zeros(2), np.zeros(2))
    model = build_2d_model(inst, params)
    tags = set(c.tag for c in model.constraints)
    assert tags == {TAG_RESIDUAL}


def test_build_2d_model_rejects_foreign_cycle():
    inst = GridInstance.from_array(np.zeros((2, 2)))
    params = Params(1.0, np.zeros(2), np.zeros(2))
    bogus = Cycle((0, 1, 3, 2), (0, 3, 1, 99), chordless=True)
    with pytest.raises(ModelError):
        build_2d_model(inst, params, (bogus,))


def test_objective_weights_follow_rows_and_cols():
    inst = GridInstance.from_array(np.zeros((2, 3)))
    params = Params(1.0, np.array([0.1, 0.3]), np.array([0.5, 0.7, 0.9]))
    model = build_2d_model(inst, params)
    g = inst.graph
    cost = model.col_cost
    assert cost[model.x_col(g.row_edge(0, 0))] == 0.1
    assert cost[model.x_col(g.row_edge(1, 1))] == 0.3
    assert cost[model.x_col(g.col_edge(0, 2))] == 0.9
    # residuals weigh 1, w weighs 0
    assert cost[model.w_col(0)] == 0.0
    assert cost[model.ep_col(0)] == 1.0
    assert cost[model.em_col(5)] == 1.0


def test_cycle_cut_canonicalization():
    c1 = CycleCut((3, 1, 2, 0), excluded=2)
    c2 = CycleCut((0, 1, 2, 3), excluded=2)
    assert c1 == c2
    assert c1.edges == (0, 1, 2, 3)
    with pytest.raises(ModelError):
        CycleCut((0, 1, 2), excluded=5)


def test_cuts_from_cycle_rotations():
    g = build_grid(2, 2)
    (cyc,) = enumerate_4cycles(g)
    cuts = cuts_from_cycle(cyc)
    assert len(cuts) == 4
    assert {c.excluded for c in cuts} == set(cyc.edges)


def test_theorem1_witness_satisfies_d2_rows_but_is_not_affine():
    # 9-node construction: rows affine with slopes a1=0 and a2=1, third
    # row extrapolated by the column constraints; every emitted
    # second-derivative constraint holds with all x = 0, yet the
    # diagonal second difference is 2, so no affine plane matches w.
    inst = GridInstance.from_array(np.zeros((3, 3)))
    params = Params(1.0, np.zeros(3), np.zeros(3))
    model = build_2d_model(inst, params)
    a1, a2 = 0.0, 1.0
    w = np.empty((3, 3))
    w[0] = [a1 * z for z in range(3)]
    w[1] = [a2 * z for z in range(3)]
    w[2] = 2 * w[1] - w[0]
    col = np.zeros(model.num_cols)
    col[:9] = w.ravel()
    for con in model.constraints:
        if con.tag in (TAG_D2_ROW, TAG_D2_COL):
            val = float(col[con.indices] @ con.coeffs)
            assert con.lower - 1e-9 <= val <= con.upper + 1e-9
    assert w[0, 0] - 2 * w[1, 1] + w[2, 2] == pytest.approx(2 * (a2 - a1))
    assert w[0, 0] - 2 * w[1, 1] + w[2, 2] == 2.0


def test_objective_scaling_preserves_argmin_set():
    # multiplying the edge weights and the residual weights by one
    # positive constant scales every labeling's value uniformly, so the
    # optimal labelings are unchanged (checked against the brute-force
    # enumeration used as the 1D oracle)
    import itertools

    import oracles

    rng = np.random.default_rng(6)
    y = rng.uniform(size=5)
    lam = 0.11

    def values(scale):
        out = {}
        for bits in itertools.product((0, 1), repeat=4):
            cost = scale * lam * sum(bits)
            start = 0
            for e, b in enumerate(bits):
                if b:
                    cost += scale * oracles.l1_line_fit_value(
                        np.arange(start, e + 1), y[start:e + 1])
                    start = e + 1
            cost += scale * oracles.l1_line_fit_value(
                np.arange(start, 5), y[start:5])
            out[bits] = cost
        return out

    for scale in (1.0, 3.7, 0.02):
        vals = values(scale)
        best = min(vals.values())
        argmin = {b for b, v in vals.items() if v <= best + 1e-12}
        if scale == 1.0:
            base = argmin
        else:
            assert argmin == base


def test_2x2_model_with_supplied_cycles():
    inst = GridInstance.from_array(np.zeros((2, 2)))
    params = Params(1.0, np.zeros(2), np.zeros(2))
    model = build_2d_model(inst, params,
                           tuple(enumerate_4cycles(inst.graph)))
    stats = model_statistics(model)
    assert stats.rows_by_tag == {TAG_RESIDUAL: 4, TAG_MULTICUT: 4}
