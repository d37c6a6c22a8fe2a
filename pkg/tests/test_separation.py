import numpy as np
import pytest

import oracles
from pwfit.backend import SolveLimits, SolveStatus, create_backend
from pwfit.formulation import (CycleCut, GridInstance, Params,
                               build_2d_model)
from pwfit.grid import build_grid
from pwfit.heuristic import region_fusion
from pwfit.separation import (VARIANTS, CutPool, SeparationError,
                              check_feasibility, cutting_plane_solve,
                              find_cycles, get_variant, separate)


def test_check_feasibility_single_active_edge():
    g = build_grid(2, 2)
    x = np.zeros(4, np.uint8)
    x[0] = 1
    out = check_feasibility(g, x)
    assert not out.feasible
    assert out.violated_edges == (0,)


def test_check_feasibility_two_incident_edges():
    g = build_grid(2, 2)
    x = np.array([1, 0, 0, 1], np.uint8)  # top and right
    assert check_feasibility(g, x).feasible


def test_check_feasibility_matches_oracle_exhaustively():
    g = build_grid(2, 3)
    for bits in range(2 ** g.num_edges):
        x = np.array([(bits >> e) & 1 for e in range(g.num_edges)], np.uint8)
        got = check_feasibility(g, x).feasible
        assert got == oracles.labeling_is_valid_multicut(2, 3, x)


def test_heuristic_labelings_always_feasible():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m, n = rng.integers(2, 7, size=2)
        inst = GridInstance.from_array(rng.uniform(size=(m, n)))
        params = Params(1.0, rng.uniform(0, 0.2, m), rng.uniform(0, 0.2, n))
        _, x = region_fusion(inst, params)
        assert check_feasibility(inst.graph, x).feasible


def test_find_cycles_unique_path_on_2x2():
    g = build_grid(2, 2)
    x = np.zeros(4, np.uint8)
    x[0] = 1  # a-b active, dormant path a-c-d-b
    (cyc,) = find_cycles(g, x, 0)
    assert sorted(cyc.edges) == [0, 1, 2, 3]
    assert cyc.chordless
    cut = CycleCut(cyc.edges, 0)
    assert cut.excluded == 0


def test_find_cycles_requires_active_edge():
    g = build_grid(2, 2)
    with pytest.raises(SeparationError):
        find_cycles(g, np.zeros(4, np.uint8), 0)


def test_find_cycles_respects_max_depth():
    g = build_grid(2, 8)
    x = np.zeros(g.num_edges, np.uint8)
    x[g.row_edge(0, 3)] = 1
    cycles = find_cycles(g, x, g.row_edge(0, 3), max_depth=5)
    assert cycles
    assert all(len(c.edges) <= 6 for c in cycles)


def test_find_cycles_bfs_fallback_below_shortest_path():
    # shortest dormant path between the endpoints has 3 edges; DFS at
    # depth 2 finds nothing, BFS returns exactly one 4-edge cycle
    g = build_grid(2, 8)
    x = np.zeros(g.num_edges, np.uint8)
    x[g.row_edge(0, 3)] = 1
    cycles = find_cycles(g, x, g.row_edge(0, 3), max_depth=2)
    assert len(cycles) == 1
    assert len(cycles[0].edges) == 4


def test_find_cycles_facet_mode_is_chordless_everywhere():
    rng = np.random.default_rng(4)
    g = build_grid(3, 3)
    for _ in range(200):
        x = rng.integers(0, 2, g.num_edges).astype(np.uint8)
        out = check_feasibility(g, x)
        for e in out.violated_edges:
            for cyc in find_cycles(g, x, e, mode="facet_defining"):
                if cyc.chordless:
                    assert oracles.cycle_is_chordless(3, 3, list(cyc.nodes))


def test_separate_dedups_cuts():
    g = build_grid(2, 2)
    x = np.zeros(4, np.uint8)
    x[0] = 1
    pool = CutPool()
    out = check_feasibility(g, x)
    cuts1 = separate(g, x, out, facet=False, pool=pool)
    assert len(cuts1) == 1
    with pytest.raises(SeparationError):
        # same labeling again: the only cut is already pooled
        separate(g, x, out, facet=False, pool=pool)


def test_cut_pool_dedup():
    pool = CutPool()
    assert pool.add(CycleCut((0, 1, 2, 3), 0))
    assert not pool.add(CycleCut((3, 2, 1, 0), 0))
    assert len(pool) == 1


def test_separation_soundness_on_2x3():
    """No multicut-feasible labeling is ever cut off."""
    g = build_grid(2, 3)
    feasible = oracles.enumerate_feasible_labelings(2, 3)
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = rng.integers(0, 2, g.num_edges).astype(np.uint8)
        out = check_feasibility(g, x)
        if out.feasible:
            continue
        pool = CutPool()
        cuts = separate(g, x, out, facet=False, pool=pool)
        for cut in cuts:
            # violated by the current labeling
            lhs = sum(int(x[e]) for e in cut.edges if e != cut.excluded)
            assert lhs < x[cut.excluded]
            for xf in feasible:
                lhs = sum(xf[e] for e in cut.edges if e != cut.excluded)
                assert lhs >= xf[cut.excluded]


def test_get_variant():
    assert get_variant("mp").warm_start is False
    assert get_variant("mph-4-8").initial_cycles == "c4c8"
    assert get_variant(VARIANTS["mph-f"]).facet_search
    with pytest.raises(Exception):
        get_variant("nope")


def test_cutting_plane_zero_rounds_when_feasible():
    # collinear chain: unconstrained optimum is already a valid multicut
    inst = GridInstance.chain([0.0, 0.25, 0.5, 0.75])
    params = Params(1.0, np.array([0.2]), np.zeros(4))
    sol = cutting_plane_solve(inst, params, variant="mp",
                              limits=SolveLimits(30))
    assert sol.status == SolveStatus.OPTIMAL
    assert sol.cuts_added == 0
    assert sol.multicut_feasible
    assert len(sol.rounds) == 1


def test_cutting_plane_objectives_nondecreasing():
    y = np.tile(np.array([4, 3, 2, 3, 4]) / 4.0, (3, 1))
    inst = GridInstance.from_array(y)
    params = Params(0.5, np.full(3, 0.125), np.zeros(5))
    xhat = np.zeros(inst.graph.num_edges, np.uint8)
    xhat[inst.graph.row_edge(0, 1)] = 1
    xhat[inst.graph.row_edge(1, 2)] = 1
    xhat[inst.graph.row_edge(2, 1)] = 1
    sol = cutting_plane_solve(inst, params, variant="mp",
                              limits=SolveLimits(60),
                              initial_labeling=xhat)
    objs = [r.objective for r in sol.rounds if r.objective is not None]
    assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
    assert sol.multicut_feasible


def test_cutting_plane_warm_start_bounds_first_solve():
    inst, _ = _clean_instance()
    params = Params(0.5, np.full(6, 0.05), np.full(8, 0.05))
    sol = cutting_plane_solve(inst, params, variant="mph",
                              limits=SolveLimits(60))
    assert sol.warm_start_value is not None
    first = next(r for r in sol.rounds if r.objective is not None)
    assert first.objective <= sol.warm_start_value + 1e-9


def _clean_instance():
    from pwfit.instance_io import builtin_synthetic
    return builtin_synthetic("quad", 6, 8, 0.0, 0)


def test_cutting_plane_small_2d_matches_bruteforce():
    rng = np.random.default_rng(21)
    y = rng.uniform(size=(3, 3))
    inst = GridInstance.from_array(y)
    lam_r = rng.uniform(0.02, 0.2, 3)
    lam_c = rng.uniform(0.02, 0.2, 3)
    params = Params(1.0, lam_r, lam_c)
    want, _ = oracles.brute_force_2d_optimum(y, lam_r, lam_c)
    for variant in ("mp", "mph-4", "mph-f"):
        sol = cutting_plane_solve(inst, params, variant=variant,
                                  limits=SolveLimits(120))
        assert sol.status == SolveStatus.OPTIMAL, variant
        assert sol.objective == pytest.approx(want, abs=1e-5), variant
        assert check_feasibility(inst.graph, sol.x).feasible


def test_deepest_dfs_cycle_cut_accepted_by_backend():
    # a walled corridor forces the deepest path DFS can return under the
    # default depth cap (9 dormant edges, closing to a 10-edge cycle);
    # the backend accepts the corresponding inequality
    g = build_grid(2, 5)
    x = np.zeros(g.num_edges, np.uint8)
    x[g.row_edge(0, 0)] = 1
    for j in range(1, 4):
        x[g.col_edge(0, j)] = 1  # wall off the short crossings
    cycles = find_cycles(g, x, g.row_edge(0, 0), max_depth=10)
    assert cycles
    longest = max(cycles, key=len)
    assert len(longest.edges) == 10
    inst = GridInstance.from_array(np.zeros((2, 5)))
    params = Params(1.0, np.zeros(2), np.zeros(5))
    model = build_2d_model(inst, params)
    handle = create_backend().load_model(model)
    assert handle.add_constraints(
        [CycleCut(longest.edges, g.row_edge(0, 0))]) == 1
