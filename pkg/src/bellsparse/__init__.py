"""Bell nonlocality via quasi-probability negativity and sparse recovery."""

__version__ = "0.1.0"

from .behavior import (  # noqa: E402
    Behavior,
    Family,
    NoSignallingReport,
    Party,
    Scenario,
    behavior_new,
    check_no_signalling,
    make_family,
    marginal,
    mix,
    pr_box,
)
from .corrbasis import (  # noqa: E402
    CorrVector,
    FixedCoords,
    behavior_from_z,
    chsh_correlation,
    fixed_coordinate_indices,
    from_correlation_basis,
    kron_apply,
    min_l2_quasiprob,
    to_correlation_basis,
    z0_from_behavior,
)
from .detcomp import (  # noqa: E402
    QuasiProb,
    SvdFactors,
    apply_deterministic,
    controlled_rotation,
    decompose_signed,
    decompose_stochastic,
    rotation_matrix,
    svd_factors,
)
from .lp_baseline import (  # noqa: E402
    LinearProgram,
    LpSolution,
    LpStatus,
    is_local,
    local_vertices,
    lp_solve,
    min_l1_quasiprob_lp,
    ns_distance,
)
from .quantify import (  # noqa: E402
    AnalysisRecord,
    ExpFit,
    Method,
    benchmark_scaling,
    compare_neg_ns,
    critical_visibility,
    fit_exp,
    neg_of_behavior,
)
from .sparse_solver import (  # noqa: E402
    SolverConfig,
    SolverResult,
    negativity,
    nesta_solve,
    project_fixed,
    smoothed_l1_grad,
    solve_behavior,
)
