"""Operator-valued Nevanlinna-Pick interpolation over finite-dimensional W*-correspondences."""

from .correspondence import (
    CommutantElement,
    Context,
    DualPoint,
    build_context,
    cauchy_kernel,
    free_context,
    point_power,
)
from .errors import (
    CommutantError,
    IndefiniteError,
    InfeasibleError,
    LevelCapError,
    NCPickError,
    NonCentralError,
    NotContractiveError,
    NotHermitianError,
    ResidualError,
    ShapeError,
)
from .linalg import DEFAULT_TOL, ToleranceConfig, psd_check
from .pick import make_problem, pick_matrix, pick_matrix_series, feasibility
from .realization import synthesize, simulate_system, transfer_eval
from .ncfunc import NCPolynomial, coefficients_from_colligation, eval_point, schur_truncate_and_norm
from .cpcheck import example_cj_vs_ms

__version__ = "0.1.0"
