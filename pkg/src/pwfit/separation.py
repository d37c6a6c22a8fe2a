"""Cutting-plane driver: feasibility checking of integer labelings against
the multicut constraints, violated-cycle search, and the outer solve loop.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .backend import SolveLimits, SolveReport, SolveStatus, create_backend
from .formulation import (CycleCut, GridInstance, ModelError, Params,
                          build_2d_model, cuts_from_cycle)
from .grid import (Cycle, GridGraph, as_edge_labeling, connected_components,
                   enumerate_4cycles, enumerate_8cycles, is_chordless)


class SeparationError(RuntimeError):
    """Separation invariant broken (e.g. no path for a violated edge)."""


class CutPool:
    """Canonicalized (cycle, excluded-edge) pairs already in the model."""

    def __init__(self):
        self._seen: set[CycleCut] = set()

    def add(self, cut: CycleCut) -> bool:
        """True if the cut is new; False if it was already pooled."""
        if cut in self._seen:
            return False
        self._seen.add(cut)
        return True

    def __contains__(self, cut: CycleCut) -> bool:
        return cut in self._seen

    def __len__(self) -> int:
        return len(self._seen)


@dataclass(frozen=True)
class SeparationOutcome:
    feasible: bool
    violated_edges: tuple[int, ...]
    new_cuts: tuple[CycleCut, ...] = ()
    facet_only: bool = False


def check_feasibility(g: GridGraph, x) -> SeparationOutcome:
    """Phase 1: an integer labeling is a valid multicut iff every active
    edge joins two different components of the dormant subgraph."""
    arr = as_edge_labeling(g, x)
    labels = connected_components(g, arr)
    ends = g.edge_endpoints
    active = np.flatnonzero(arr)
    bad = active[labels[ends[active, 0]] == labels[ends[active, 1]]]
    return SeparationOutcome(feasible=bad.size == 0,
                             violated_edges=tuple(int(e) for e in bad))


def _dormant_neighbors(g: GridGraph, x, k: int):
    """(neighbor, edge id) pairs over dormant edges, up/left/right/down."""
    n = g.cols
    i, j = divmod(k, n)
    out = []
    if i > 0:
        e = g.col_edge(i - 1, j)
        if x[e] == 0:
            out.append((k - n, e))
    if j > 0:
        e = g.row_edge(i, j - 1)
        if x[e] == 0:
            out.append((k - 1, e))
    if j < n - 1:
        e = g.row_edge(i, j)
        if x[e] == 0:
            out.append((k + 1, e))
    if i < g.rows - 1:
        e = g.col_edge(i, j)
        if x[e] == 0:
            out.append((k + n, e))
    return out


def _chord_free(g: GridGraph, path: list, q: int, closing: bool) -> bool:
    # q may touch its parent path[-1]; adjacency to any earlier path node
    # would become a chord.  When q closes the cycle, path[0] is
    # consecutive via the closing edge and is exempt.
    first = 1 if closing else 0
    for idx in range(first, len(path) - 1):
        if g.are_adjacent(q, path[idx]):
            return False
    return True


def _dfs_paths(g, x, u, v, max_depth, max_paths, facet):
    """Simple dormant paths u -> v with at most max_depth - 1 interior
    edges (so the closed cycle has at most max_depth + 1 edges)."""
    paths = []
    path = [u]
    edges: list[int] = []
    on_path = bytearray(g.num_nodes)
    on_path[u] = 1
    stack = [iter(_dormant_neighbors(g, x, u))]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            on_path[path.pop()] = 0
            if edges:
                edges.pop()
            continue
        q, eid = nxt
        if q == v:
            if len(path) <= max_depth and (not facet or
                                           _chord_free(g, path, q, True)):
                paths.append((path + [v], edges + [eid]))
                if len(paths) >= max_paths:
                    break
            continue
        if on_path[q] or len(path) >= max_depth:
            continue
        if facet and not _chord_free(g, path, q, False):
            continue
        path.append(q)
        edges.append(eid)
        on_path[q] = 1
        stack.append(iter(_dormant_neighbors(g, x, q)))
    return paths


def _bfs_path(g, x, u, v):
    parent = np.full(g.num_nodes, -1, dtype=np.int64)
    parent_edge = np.full(g.num_nodes, -1, dtype=np.int64)
    parent[u] = u
    queue = deque([u])
    while queue:
        k = queue.popleft()
        if k == v:
            break
        for q, eid in _dormant_neighbors(g, x, k):
            if parent[q] < 0:
                parent[q] = k
                parent_edge[q] = eid
                queue.append(q)
    if parent[v] < 0:
        return None
    nodes = [v]
    edges = []
    k = v
    while k != u:
        edges.append(int(parent_edge[k]))
        k = int(parent[k])
        nodes.append(k)
    nodes.reverse()
    edges.reverse()
    return nodes, edges


def find_cycles(g: GridGraph, x, violated: int, mode: str = "plain",
                max_depth: int = 10, max_paths: int = 16) -> list[Cycle]:
    """Cycles closing a violated active edge through dormant paths.

    Depth-first search collects up to max_paths paths of at most
    max_depth edges; if it finds none, breadth-first search returns the
    single shortest path.  In facet_defining mode the search refuses any
    next node adjacent (in the full grid) to a non-parental ancestor of
    the current node, which makes every DFS cycle chordless.
    """
    if mode not in ("plain", "facet_defining"):
        raise ValueError(f"unknown search mode {mode!r}")
    arr = as_edge_labeling(g, x)
    if arr[violated] != 1:
        raise SeparationError(f"edge {violated} is not active")
    facet = mode == "facet_defining"
    u, v = (int(a) for a in g.edge_endpoints[violated])
    found = _dfs_paths(g, arr, u, v, max_depth, max_paths, facet)
    if not found:
        hit = _bfs_path(g, arr, u, v)
        if hit is None:
            raise SeparationError(
                f"no dormant path closes violated edge {violated}")
        found = [hit]
        facet = False  # BFS result is not chord-guarded
    out = []
    for nodes, edges in found:
        nodes_t = tuple(nodes)
        chordless = True if facet else is_chordless(g, nodes_t)
        out.append(Cycle(nodes_t, tuple(edges) + (violated,), chordless))
    return out


def separate(g: GridGraph, x, outcome: SeparationOutcome, *, facet: bool,
             pool: CutPool, max_depth: int = 10, max_paths: int = 16,
             budget: int = 1000) -> list[CycleCut]:
    """Phase 2+3 for every violated edge: collect new, deduplicated cuts.

    In facet mode only chordless cycles are emitted; the violated edge
    with the shortest dormant path always yields one, so a round never
    comes back empty-handed.
    """
    mode = "facet_defining" if facet else "plain"
    cuts: list[CycleCut] = []
    for e in outcome.violated_edges:
        for cyc in find_cycles(g, x, e, mode=mode, max_depth=max_depth,
                               max_paths=max_paths):
            if facet and not cyc.chordless:
                continue
            cut = CycleCut(cyc.edges, e)
            if pool.add(cut):
                cuts.append(cut)
                if len(cuts) >= budget:
                    return cuts
    if not cuts and outcome.violated_edges:
        raise SeparationError(
            "no new cut found for an infeasible labeling; pool "
            f"size {len(pool)}, violated edges {outcome.violated_edges}")
    return cuts


@dataclass(frozen=True)
class VariantConfig:
    """One of the paper-style solver variants."""

    name: str
    warm_start: bool
    initial_cycles: str = "none"   # none | c4 | c4c8
    facet_search: bool = False


VARIANTS = {
    "mp": VariantConfig("mp", warm_start=False),
    "mph": VariantConfig("mph", warm_start=True),
    "mph-4": VariantConfig("mph-4", warm_start=True, initial_cycles="c4"),
    "mph-4-8": VariantConfig("mph-4-8", warm_start=True, initial_cycles="c4c8"),
    "mph-f": VariantConfig("mph-f", warm_start=True, facet_search=True),
    "mph-4-f": VariantConfig("mph-4-f", warm_start=True, initial_cycles="c4",
                             facet_search=True),
}


def get_variant(variant) -> VariantConfig:
    if isinstance(variant, VariantConfig):
        return variant
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ModelError(
            f"unknown variant {variant!r}; available: "
            f"{sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class RoundTrace:
    round: int
    cuts_added: int
    objective: float | None
    best_bound: float | None
    gap: float | None
    node_count: int
    wall_time: float


@dataclass(frozen=True)
class FitSolution:
    """Final incumbent of a cutting-plane run plus its full history."""

    w: np.ndarray
    x: np.ndarray
    objective: float
    best_bound: float
    gap: float
    status: SolveStatus
    node_count: int
    wall_time: float
    rounds: tuple[RoundTrace, ...]
    cuts: tuple[CycleCut, ...]
    cuts_added: int
    warm_start_value: float | None
    multicut_feasible: bool
    variant: str
    backend_name: str

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_LIMIT)


def _initial_cycles(g: GridGraph, which: str):
    if which == "none":
        return ()
    if which == "c4":
        return tuple(enumerate_4cycles(g))
    if which == "c4c8":
        return tuple(enumerate_4cycles(g)) + tuple(enumerate_8cycles(g))
    raise ModelError(f"unknown initial cycle family {which!r}")


def cutting_plane_solve(instance: GridInstance, params: Params,
                        variant="mph-4", limits: SolveLimits | None = None,
                        *, initial_labeling=None, backend=None,
                        max_rounds: int = 100, cuts_per_round: int = 1000,
                        paths_per_edge: int = 16, max_depth: int = 10,
                        schedule=None, on_round=None) -> FitSolution:
    """Solve the fitting MILP, lazily adding violated cycle inequalities.

    Each round re-solves the full MILP, phase-1 checks the incumbent,
    and adds the violated cycle cuts until the incumbent is a valid
    multicut or a limit is hit.  An explicit initial_labeling (or the
    region-fusion heuristic, for warm-start variants) is separated
    before the first solve; if it is multicut-feasible it is handed to
    the backend as the starting incumbent.
    """
    variant = get_variant(variant)
    limits = limits or SolveLimits()
    g = instance.graph
    t_start = time.perf_counter()

    seed_cycles = _initial_cycles(g, variant.initial_cycles)
    model = build_2d_model(instance, params, seed_cycles)
    pool = CutPool()
    for cyc in seed_cycles:
        for cut in cuts_from_cycle(cyc):
            pool.add(cut)

    backend = backend or create_backend()
    handle = backend.load_model(model)

    x0 = initial_labeling
    if x0 is None and variant.warm_start and g.rows >= 2 and g.cols >= 2:
        from .heuristic import region_fusion  # local: heavier module
        _, x0 = region_fusion(instance, params, schedule)

    rounds: list[RoundTrace] = []
    all_cuts: list[CycleCut] = []
    warm_value = None
    if x0 is not None:
        x0 = as_edge_labeling(g, x0)
        outcome = check_feasibility(g, x0)
        if outcome.feasible:
            warm_value = handle.warm_start(x0)
        else:
            t0 = time.perf_counter()
            cuts = separate(g, x0, outcome, facet=variant.facet_search,
                            pool=pool, max_depth=max_depth,
                            max_paths=paths_per_edge, budget=cuts_per_round)
            handle.add_constraints(cuts)
            all_cuts.extend(cuts)
            rounds.append(RoundTrace(0, len(cuts), None, None, None, 0,
                                     time.perf_counter() - t0))
            if on_round:
                on_round(rounds[-1])

    report: SolveReport | None = None
    feasible = False
    status = SolveStatus.NO_SOLUTION
    for rnd in range(1, max_rounds + 1):
        remaining = limits.time_limit - (time.perf_counter() - t_start)
        if remaining <= 0:
            status = (SolveStatus.FEASIBLE_LIMIT if report is not None
                      and report.incumbent is not None
                      else SolveStatus.NO_SOLUTION)
            break
        report = handle.solve(SolveLimits(remaining, limits.gap_target,
                                          limits.emphasis))
        status = report.status
        if report.incumbent is None:
            break
        x_int = np.asarray(report.incumbent.x > 0.5, dtype=np.uint8)
        t0 = time.perf_counter()
        outcome = check_feasibility(g, x_int)
        if outcome.feasible:
            feasible = True
            rounds.append(RoundTrace(rnd, 0, report.objective,
                                     report.best_bound, report.gap,
                                     report.node_count, report.wall_time))
            if on_round:
                on_round(rounds[-1])
            break
        if report.status != SolveStatus.OPTIMAL:
            # out of time with an invalid multicut; report it as-is
            rounds.append(RoundTrace(rnd, 0, report.objective,
                                     report.best_bound, report.gap,
                                     report.node_count, report.wall_time))
            if on_round:
                on_round(rounds[-1])
            break
        cuts = separate(g, x_int, outcome, facet=variant.facet_search,
                        pool=pool, max_depth=max_depth,
                        max_paths=paths_per_edge, budget=cuts_per_round)
        handle.add_constraints(cuts)
        all_cuts.extend(cuts)
        rounds.append(RoundTrace(rnd, len(cuts), report.objective,
                                 report.best_bound, report.gap,
                                 report.node_count,
                                 report.wall_time
                                 + time.perf_counter() - t0))
        if on_round:
            on_round(rounds[-1])
    else:
        # separation budget exhausted; the incumbent is not a valid multicut
        if report is not None and report.incumbent is not None:
            status = SolveStatus.FEASIBLE_LIMIT

    wall = time.perf_counter() - t_start
    if report is None or report.incumbent is None:
        return FitSolution(
            w=np.full((g.rows, g.cols), np.nan), x=np.zeros(g.num_edges,
                                                            dtype=np.uint8),
            objective=np.inf, best_bound=-np.inf, gap=np.inf,
            status=SolveStatus.NO_SOLUTION, node_count=0, wall_time=wall,
            rounds=tuple(rounds), cuts=tuple(all_cuts),
            cuts_added=sum(r.cuts_added for r in rounds),
            warm_start_value=warm_value, multicut_feasible=False,
            variant=variant.name, backend_name=getattr(backend, "name", "?"))
    if status == SolveStatus.OPTIMAL and not feasible:
        status = SolveStatus.FEASIBLE_LIMIT
    return FitSolution(
        w=report.incumbent.w.reshape(g.rows, g.cols).copy(),
        x=np.asarray(report.incumbent.x > 0.5, dtype=np.uint8),
        objective=report.objective,
        best_bound=report.best_bound,
        gap=report.gap,
        status=status,
        node_count=report.node_count,
        wall_time=wall,
        rounds=tuple(rounds),
        cuts=tuple(all_cuts),
        cuts_added=sum(r.cuts_added for r in rounds),
        warm_start_value=warm_value,
        multicut_feasible=feasible,
        variant=variant.name,
        backend_name=getattr(backend, "name", "?"),
    )
