"""MILP solver backend behind a small handle interface.

Exactly one backend ships: HiGHS, through the bindings vendored with
SciPy (scipy.optimize's public ``milp`` wrapper exposes neither warm
starts nor incremental rows, which the cutting-plane loop needs).  The
environment variable ``PWFIT_SOLVER`` selects the backend by name;
"highs" is the default and currently the only entry.

Determinism: every handle runs single-threaded with a fixed random seed,
so repeated solves of the same model sequence return the same incumbent.
"""

from __future__ import annotations

import enum
import os
import time
from dataclasses import dataclass

import numpy as np

from .formulation import (FEASIBILITY_TOL, CycleCut, ModelDescription,
                          ModelError, TAG_MULTICUT)

try:
    from scipy.optimize._highspy import _core as _hs
except ImportError as exc:  # pragma: no cover
    _hs = None
    _HIGHS_IMPORT_ERROR = exc


class BackendError(RuntimeError):
    """Backend unavailable or a solver call failed."""


@dataclass(frozen=True)
class SolveLimits:
    """Per-solve limits; gap_target 0.0 demands a proof of optimality."""

    time_limit: float = 600.0
    gap_target: float = 0.0
    emphasis: str = "default"

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ModelError("time_limit must be positive")
        if self.gap_target < 0:
            raise ModelError("gap_target must be nonnegative")


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE_LIMIT = "feasible_limit"
    INFEASIBLE = "infeasible"
    NO_SOLUTION = "no_solution"


@dataclass(frozen=True)
class Incumbent:
    w: np.ndarray          # fitted values, one per node
    x: np.ndarray          # raw binary values, one per edge
    col_value: np.ndarray  # full column vector


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one (re-)solve, recorded verbatim from the backend."""

    status: SolveStatus
    objective: float
    best_bound: float
    gap: float
    node_count: int
    wall_time: float
    incumbent: Incumbent | None


def _require_highs():
    if _hs is None:  # pragma: no cover
        raise BackendError(
            f"backend-unavailable: HiGHS bindings not importable "
            f"({_HIGHS_IMPORT_ERROR})")


def _check(status, what: str):
    if status == _hs.HighsStatus.kError:
        raise BackendError(f"HiGHS rejected {what}")


def _assemble_rows(constraints):
    if not constraints:
        z = np.zeros(0)
        return z, z, np.zeros(1, dtype=np.int64), z.astype(np.int32), z
    lower = np.array([c.lower for c in constraints])
    upper = np.array([c.upper for c in constraints])
    starts = np.zeros(len(constraints) + 1, dtype=np.int64)
    starts[1:] = np.cumsum([len(c.indices) for c in constraints])
    index = np.concatenate([c.indices for c in constraints]).astype(np.int32)
    value = np.concatenate([c.coeffs for c in constraints])
    return lower, upper, starts, index, value


def _new_solver(seed: int, time_limit: float | None = None):
    h = _hs._Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", seed)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    return h


def _pass_lp(h, model: ModelDescription, *, fixed_x=None, drop_multicut=False):
    cons = model.constraints
    if drop_multicut:
        cons = tuple(c for c in cons if c.tag != TAG_MULTICUT)
    lower, upper = model.col_bounds
    if fixed_x is not None:
        lower = lower.copy()
        upper = upper.copy()
        xs = np.asarray(fixed_x, dtype=np.float64)
        lower[3 * model.num_nodes:] = xs
        upper[3 * model.num_nodes:] = xs
    lp = _hs.HighsLp()
    lp.num_col_ = model.num_cols
    lp.num_row_ = len(cons)
    lp.col_cost_ = model.col_cost
    lp.col_lower_ = lower
    lp.col_upper_ = upper
    rl, ru, starts, index, value = _assemble_rows(cons)
    if len(index) and index.max() >= model.num_cols:
        raise ModelError("constraint references an unknown variable")
    lp.row_lower_ = rl
    lp.row_upper_ = ru
    lp.a_matrix_.format_ = _hs.MatrixFormat.kRowwise
    lp.a_matrix_.start_ = starts
    lp.a_matrix_.index_ = index
    lp.a_matrix_.value_ = value
    if fixed_x is None:
        integ = ([_hs.HighsVarType.kContinuous] * (3 * model.num_nodes)
                 + [_hs.HighsVarType.kInteger] * model.num_edges)
        lp.integrality_ = integ
    _check(h.passModel(lp), "the model")


def labeling_lp_value(model: ModelDescription, x0, *, seed: int = 0):
    """Solve the LP with the binaries fixed to x0; returns (value, w).

    This is how a warm-start labeling is completed into a full solution
    ("the backend derives w by LP").  The value is the full objective of
    the completed solution, fitting cost plus the fixed edge penalties.
    Multicut rows are dropped: with x fixed they are constant and would
    only reject labelings the caller already knows to be infeasible.
    """
    _require_highs()
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if x0.shape != (model.num_edges,):
        raise ModelError(
            f"labeling has {x0.size} entries, model has {model.num_edges} edges")
    h = _new_solver(seed)
    _pass_lp(h, model, fixed_x=x0, drop_multicut=True)
    _check(h.run(), "the warm-start LP")
    status = h.getModelStatus()
    if status != _hs.HighsModelStatus.kOptimal:
        raise BackendError(
            f"warm-start LP did not solve: {h.modelStatusToString(status)}")
    col = np.array(h.getSolution().col_value)
    return float(h.getInfo().objective_function_value), col[:model.num_nodes]


class HighsHandle:
    """One loaded model with exclusive solver state.

    Not reentrant; confine each handle to a single worker.
    """

    def __init__(self, model: ModelDescription, seed: int):
        _require_highs()
        self.model = model
        self.seed = seed
        self._h = _new_solver(seed)
        _pass_lp(self._h, model)
        self._num_user_rows = len(model.constraints)
        self._cuts: list[CycleCut] = []
        self._start_value: np.ndarray | None = None
        self.warm_start_value: float | None = None

    @property
    def num_binaries(self) -> int:
        return self.model.num_edges

    @property
    def num_rows(self) -> int:
        return self._num_user_rows

    def warm_start(self, x0) -> float:
        """Register x0 as the initial integer assignment; returns the LP
        value of the completed (w, x0) solution."""
        value, w = labeling_lp_value(self.model, x0, seed=self.seed)
        N = self.model.num_nodes
        col = np.empty(self.model.num_cols)
        col[:N] = w
        resid = w - self.model.y
        col[N:2 * N] = np.maximum(resid, 0.0)
        col[2 * N:3 * N] = np.maximum(-resid, 0.0)
        col[3 * N:] = np.asarray(x0, dtype=np.float64).ravel()
        self._start_value = col
        self.warm_start_value = value
        self._apply_start()
        return value

    def _start_satisfies_cuts(self) -> bool:
        if self._start_value is None:
            return False
        x = self._start_value[3 * self.model.num_nodes:]
        for cut in self._cuts:
            lhs = sum(x[e] for e in cut.edges if e != cut.excluded)
            if lhs < x[cut.excluded] - FEASIBILITY_TOL:
                return False
        return True

    def _apply_start(self):
        sol = _hs.HighsSolution()
        sol.col_value = list(self._start_value)
        _check(self._h.setSolution(sol), "the warm-start solution")

    def add_constraints(self, cuts) -> int:
        """Append multicut inequalities; incumbents that violate them are
        discarded (the next solve revalidates any stored start)."""
        cuts = list(cuts)
        if not cuts:
            return 0
        rows = [self.model.cut_constraint(c, f"cut_{self._num_user_rows + t}")
                for t, c in enumerate(cuts)]
        lower, upper, starts, index, value = _assemble_rows(rows)
        _check(self._h.addRows(len(rows), lower, upper, len(index),
                               starts[:-1], index, value), "added cuts")
        self._cuts.extend(cuts)
        self._num_user_rows += len(rows)
        # model edits clear solver state; re-offer the start if still valid
        if self._start_value is not None and self._start_satisfies_cuts():
            self._apply_start()
        else:
            self._start_value = None
        return len(rows)

    def solve(self, limits: SolveLimits) -> SolveReport:
        h = self._h
        h.setOptionValue("time_limit", float(limits.time_limit))
        h.setOptionValue("mip_rel_gap", float(limits.gap_target))
        h.setOptionValue("mip_abs_gap", 0.0)
        t0 = time.perf_counter()
        _check(h.run(), "the solve")
        wall = time.perf_counter() - t0
        status = h.getModelStatus()
        info = h.getInfo()
        has_sol = info.primal_solution_status == _hs.kSolutionStatusFeasible
        if status == _hs.HighsModelStatus.kOptimal:
            st = SolveStatus.OPTIMAL
        elif status == _hs.HighsModelStatus.kTimeLimit:
            st = SolveStatus.FEASIBLE_LIMIT if has_sol else SolveStatus.NO_SOLUTION
        elif status == _hs.HighsModelStatus.kInfeasible:
            st = SolveStatus.INFEASIBLE
        else:
            raise BackendError(
                f"solver stopped with status "
                f"{h.modelStatusToString(status)!r}")
        incumbent = None
        objective = np.inf
        if has_sol:
            col = np.array(h.getSolution().col_value)
            N = self.model.num_nodes
            incumbent = Incumbent(w=col[:N], x=col[3 * N:], col_value=col)
            objective = float(info.objective_function_value)
        return SolveReport(
            status=st,
            objective=objective,
            best_bound=float(info.mip_dual_bound),
            gap=float(info.mip_gap),
            node_count=int(info.mip_node_count),
            wall_time=wall,
            incumbent=incumbent,
        )


class HighsBackend:
    """Factory for HiGHS handles; `seed` fixes solver randomization."""

    name = "highs"

    def __init__(self, seed: int = 0):
        _require_highs()
        self.seed = seed

    def load_model(self, model: ModelDescription) -> HighsHandle:
        return HighsHandle(model, self.seed)


_BACKENDS = {"highs": HighsBackend}


def create_backend(name: str | None = None, **kwargs):
    """Backend registry lookup; PWFIT_SOLVER overrides the default."""
    name = name or os.environ.get("PWFIT_SOLVER", "highs")
    try:
        cls = _BACKENDS[name]
    except KeyError:
        raise BackendError(
            f"unknown solver backend {name!r}; available: "
            f"{sorted(_BACKENDS)}") from None
    return cls(**kwargs)
