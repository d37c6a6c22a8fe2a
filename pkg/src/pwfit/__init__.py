"""pwfit: discontinuous piecewise-affine fitting of 1D signals and 2D
images by mixed-integer programming with lazy multicut constraints.

Solving an instance returns a denoised fit w, a valid segmentation, and
the reconstructed per-segment affine pieces.
"""

from .backend import (BackendError, SolveLimits, SolveReport, SolveStatus,
                      create_backend, labeling_lp_value)
from .formulation import (CycleCut, GridInstance, ModelDescription,
                          ModelError, Params, build_1d_model, build_2d_model,
                          compute_lambda, model_statistics)
from .grid import (Cycle, GridError, GridGraph, build_grid,
                   connected_components, enumerate_4cycles, enumerate_8cycles)
from .heuristic import (HeuristicError, KappaSchedule, NodeAffineInit,
                        init_node_params, merge_test, region_fusion,
                        segmentation_to_edges)
from .instance_io import (BUILTIN_GENERATORS, GroundTruth, ParseError,
                          RunReport, SyntheticSpec, builtin_synthetic,
                          generate_synthetic, load_image, read_report,
                          write_lp_model, write_report)
from .postprocess import (AffinePiece, Segmentation, evaluate, fit_pieces,
                          labels_from_edges, rand_index)
from .separation import (VARIANTS, CutPool, FitSolution, SeparationOutcome,
                         VariantConfig, check_feasibility,
                         cutting_plane_solve, find_cycles)

__version__ = "0.1.0"

__all__ = [
    "AffinePiece", "BackendError", "BUILTIN_GENERATORS", "CutPool", "Cycle",
    "CycleCut", "FitSolution", "GridError", "GridGraph", "GridInstance",
    "GroundTruth", "HeuristicError", "KappaSchedule", "ModelDescription",
    "ModelError", "NodeAffineInit", "Params", "ParseError", "RunReport",
    "Segmentation", "SeparationOutcome", "SolveLimits", "SolveReport",
    "SolveStatus", "SyntheticSpec", "VARIANTS", "VariantConfig",
    "build_1d_model", "build_2d_model", "build_grid", "builtin_synthetic",
    "check_feasibility", "compute_lambda", "connected_components",
    "create_backend", "cutting_plane_solve", "enumerate_4cycles",
    "enumerate_8cycles", "evaluate", "find_cycles", "fit_pieces",
    "generate_synthetic", "init_node_params", "labeling_lp_value",
    "labels_from_edges", "load_image", "merge_test", "model_statistics",
    "rand_index", "read_report", "region_fusion", "segmentation_to_edges",
    "write_lp_model", "write_report",
]
