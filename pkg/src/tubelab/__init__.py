"""tubelab: desk-scale numerical verification of tube-incidence geometry.

Geometric primitives for lines and delta-tubes in R^n, a direction-spread
dichotomy with exhaustive verification oracles, grid evaluation of
multilinear tube functionals, non-concentration checks and random thinning
on line space, extremal tube-family generators, box-counting dimension
estimation, and a CLI experiment runner with golden-value regression.
"""

__version__ = "0.1.0"

from .config import TOL, Tolerances
from .linegeom import (
    CapCover,
    Direction,
    GeometryError,
    Line,
    Subspace,
    Tube,
    build_cap_cover,
    line_metric,
    line_of_tube,
    point_in_tube,
    subspace_wedge,
    unit_ball_volume,
    wedge_volume,
)

from .concentration import (
    BallNet,
    ThinningError,
    WeightedLineSet,
    ball_condition_worst_ratio,
    dyadic_pigeonhole,
    frostman_constant,
    random_thin,
    separated_subset,
)
from .dichotomy import (
    DichotomyResult,
    DirectionMultiset,
    cap_partition_counts,
    control_card_ratio,
    count_spread_tuples,
    decide_dichotomy,
    verify_option_a,
    verify_option_b,
)
from .dimension import (
    ExponentFit,
    Region,
    box_counting_dim,
    build_E_delta,
    exponent_fit_norms,
    holder_comparison,
)
from .functionals import (
    Grid,
    RhoCoarsening,
    TubeFamily,
    UnderResolvedGridError,
    calculation_chain,
    coarsen_to_rho_tubes,
    decompose_lp,
    induction_step_terms,
    lp_norm_tube_sum,
    multilinear_kakeya_lhs,
    multilinear_kakeya_rhs,
    rescale_into_ball,
)
from .generators import (
    GeneratorSpec,
    gen_axes,
    gen_bush,
    gen_lines_in_planes,
    gen_random_nonconcentrated,
    generate,
)

__all__ = [
    "TOL",
    "Tolerances",
    "BallNet",
    "CapCover",
    "DichotomyResult",
    "Direction",
    "DirectionMultiset",
    "ExponentFit",
    "GeneratorSpec",
    "GeometryError",
    "Grid",
    "Line",
    "Region",
    "RhoCoarsening",
    "Subspace",
    "ThinningError",
    "Tube",
    "TubeFamily",
    "UnderResolvedGridError",
    "WeightedLineSet",
    "ball_condition_worst_ratio",
    "box_counting_dim",
    "build_E_delta",
    "build_cap_cover",
    "calculation_chain",
    "cap_partition_counts",
    "coarsen_to_rho_tubes",
    "control_card_ratio",
    "count_spread_tuples",
    "decide_dichotomy",
    "decompose_lp",
    "dyadic_pigeonhole",
    "exponent_fit_norms",
    "frostman_constant",
    "gen_axes",
    "gen_bush",
    "gen_lines_in_planes",
    "gen_random_nonconcentrated",
    "generate",
    "holder_comparison",
    "induction_step_terms",
    "line_metric",
    "line_of_tube",
    "lp_norm_tube_sum",
    "multilinear_kakeya_lhs",
    "multilinear_kakeya_rhs",
    "point_in_tube",
    "random_thin",
    "rescale_into_ball",
    "separated_subset",
    "subspace_wedge",
    "unit_ball_volume",
    "verify_option_a",
    "verify_option_b",
    "wedge_volume",
    "__version__",
]
