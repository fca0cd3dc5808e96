"""Iterative minimum-variance estimation on graphs.

Agents on a connected graph each hold an unbiased estimate of a common
unknown.  Every round each agent replaces its estimate with the
minimum-variance unbiased combination of its closed neighborhood (the
maximum-likelihood update for Gaussian signals).  This package simulates
that process exactly through coefficient matrices, alongside the plain
averaging baseline and a variant where agents also remember their own past
estimates, and ships the closed-form limits for stars and the 4-path.
"""

from . import analysis, graphs, linalg, plots, process
from .errors import (
    DegenerateDenominator,
    DisconnectedGraph,
    FitFailed,
    GenerationFailed,
    InsufficientData,
    NetmleError,
    NonMonotoneVariance,
    NotPSD,
    NotStochastic,
    NotSymmetric,
    RecursionDiverged,
    Undetermined,
    VertexOutOfRange,
)
from .graphs import (
    Graph,
    averaging_matrix,
    complete_graph,
    cycle_graph,
    from_edge_list,
    path_graph,
    random_connected_graph,
    read_edge_list,
)
from .linalg import (
    fusion_weights,
    min_norm_affine_point,
    min_variance_weights,
    pinv_psd,
    second_eigenvalue_magnitude,
)
from .process import (
    EstimatorState,
    MemoryState,
    SignalModel,
    StopCriteria,
    Trace,
    averaging_step,
    diagnostics_check,
    global_mle_weights,
    init_memory_state,
    init_state,
    ml_step,
    ml_step_with_memory,
    run,
    sample_realization,
)
from .analysis import (
    XI,
    IntervalRecursion,
    ProfileFit,
    StarReport,
    estimate_rate,
    gaussian_profile_fit,
    interval4_coordinates,
    interval4_limit,
    interval4_recursion,
    price_of_anarchy,
    star_closed_forms,
    variance_gap_factor,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
