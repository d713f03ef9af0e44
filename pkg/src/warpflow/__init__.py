"""warpflow: structure-preserving coupled metric/form flows on periodic grids.

The package integrates two parabolic systems: a Ricci-type flow of a grid
metric coupled to a closed form, and its warped-product dimensional
reduction to a tuple (metric, warp scalar, two flux forms) over an abstract
Einstein fiber factor.  Discrete exterior calculus with exactly commuting
difference operators makes closedness of the flux forms a machine-precision
invariant of the integration; diagnostics certify stationary points against
the underlying field equations and monitor Shi-type smoothing quantities and
blow-up criteria.
"""

from .errors import (
    BlowUpDetected,
    CflViolationError,
    ConfigError,
    DegenerateMetricError,
    DegreeMismatchError,
    GridMismatchError,
    NoConvergenceError,
    PositivityLostError,
    PotentialMismatchError,
    SingularJacobianError,
    WarpflowError,
)
from .forms import (
    DifferentialForm,
    codifferential,
    exterior_derivative,
    form_square,
    hodge_laplacian,
    hodge_star,
    inner_product,
    interior_product,
    lie_derivative,
    wedge,
)
from .geometry import (
    CurvatureBundle,
    EinsteinFactor,
    curvature_suite,
    hessian_and_laplacian,
    warped_ricci_blocks,
)
from .grids import GridSpec, MetricField, ScalarField
from .flow import (
    EuclideanState,
    ReducedState,
    deturck_vector,
    rhs_euclidean,
    rhs_reduced,
    step,
)
from .homogeneous import (
    HomogeneousState,
    certify_stationary,
    homogeneous_rhs,
    integrate_ode,
    newton_stationary,
)
from .lorentz import AlgebraForm, conformal_square_verdict
from .reductions import (
    BlockState,
    lift_consistency_check,
    lift_state,
    specialization_check,
    warped_star_identity_report,
)
from .runner import FlowConfig, RunResult, run_flow

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
