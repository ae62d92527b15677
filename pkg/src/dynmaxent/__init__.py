"""Degenerate 1D Fokker-Planck solver and dynamic maximum-entropy closures."""

from .errors import (
    DivergentIntegral,
    DynMaxEntError,
    EmptyOverlap,
    InsufficientDecay,
    InvalidParams,
    MissingArtifacts,
    NonConvergentIntegral,
    NotApplicable,
    NotBoundedBelow,
    OutOfRange,
    SingularCovariance,
    StabilityViolated,
    StepRejected,
    UndefinedEntropy,
)
from .model import (
    LN_XI_OBS,
    OBS_A_SCALAR,
    OBS_A_VECTOR,
    OBS_B_SCALAR,
    OBS_B_VECTOR,
    XI_OBS,
    XI_PRIME_OBS,
    XI_SQUARED_OBS,
    ModelMode,
    ModelParams,
    Observable,
    ObservableSet,
    ObsKind,
    log_unnormalized_density,
    partition_function,
    stationary_density,
    xi,
    xi_prime,
)
from .quadrature import (
    DEFAULT_SPEC,
    MomentVector,
    QuadratureSpec,
    covariance,
    integrate,
    log_partition,
    mobility,
    moments,
)

__version__ = "0.1.0"
