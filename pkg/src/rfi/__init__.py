"""Random function iterations for stochastic feasibility problems."""
from .chain import Ensemble, Problem, Trajectory, hitting_stats, rfi_step, run_ensemble, run_trajectory
from .diagnostics import (
    Convergence,
    classify_finite_infinite,
    empirical_rate,
    feasibility_probability,
    limit_distance_curve,
    wasserstein_1d,
    wasserstein_curve,
)
from .errors import (
    ConfigError,
    DegenerateError,
    DimensionError,
    InconsistencyError,
    NumericError,
    RFIError,
    RowSkippedError,
    ShapeError,
    SolverError,
    UnsupportedOperatorError,
)
from .merit import (
    epsilon_fixed_point_budget,
    grad_R,
    kl_check,
    merit_closed_intervals,
    merit_closed_lines,
    merit_mc,
    rate_bound,
    regularity_constant,
)
from .operators import (
    AffineHyperplaneProjector,
    AffineSubspace,
    Ball,
    BallProjector,
    Box,
    DiskOnCircle,
    ExpQuasiconvexProx,
    HalfspaceIntersection,
    HalfspaceProjector,
    Huber,
    Identity,
    IntervalProjector,
    LineProjector,
    Operator,
    PointProjector,
    Rotation,
    SinglePoint,
    fixed_point_residual,
    verify_averaged_sampled,
    verify_paracontraction_sampled,
)
from .sampling import ContinuousUniform, Dirac, FiniteDiscrete, Gaussian, RngStream, UniformBox, sample_index, sample_initial

__version__ = "0.1.0"
