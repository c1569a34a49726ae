"""Robust shape-restricted density estimation on the real line.

The package provides piecewise density representations with exact or
quadrature Hellinger geometry, a pairwise-test selection criterion over
finite candidate sets, shape-model candidate generators, constructive
approximation operators with certified error bounds, combinatorial
level-set/shattering checkers, split-sample model selection, and a
reproducible Monte Carlo bench.
"""

from .approx import (
    Affine,
    CurvedPiece,
    FunctionalReport,
    MonotonePiece,
    ShapeFn,
    affine_approx,
    allocate_pieces,
    chord_approx,
    debase_approx,
    functional,
    histogram_approx,
    variation,
)
from .bench import ExperimentResult, ExperimentSpec, run_experiment
from .density import (
    Constant,
    ExpAffine,
    Partition,
    PiecewiseDensity,
    PiecewiseSqrt,
    Sample,
    SqrtAffine,
    hellinger2,
    inverse_cdf,
    mixture_half,
    normalize_sqrt,
    sample,
)
from .errors import (
    BudgetError,
    DegenerateInputError,
    InputError,
    QuadratureError,
    RhoestError,
    ShapeViolationError,
)
from .models import (
    CandidateSet,
    ShapeModel,
    build_candidates,
    extremal_degree,
    rate_bound,
    validate_candidate,
)
from .rho import RhoConfig, RhoDiagnostics, psi, rho_estimate, sqrt_ratio, t_statistic, upsilon
from .select import SelectionPlan, split_select, untruncated_weight_sum
from .vc import (
    PiecewiseMonotoneSpec,
    SetClassOracle,
    brute_shatter,
    level_set_intervals,
)

__version__ = "0.1.0"
