"""Exception types shared across the package."""


class DynMaxEntError(Exception):
    """Base class for all library errors."""


class InvalidParams(DynMaxEntError):
    """Model parameters outside the admissible region."""


class DivergentIntegral(DynMaxEntError):
    """The requested integral does not exist (non-integrable singularity)."""


class NonConvergentIntegral(DynMaxEntError):
    """Quadrature refinement levels failed to agree within tolerance."""


class StabilityViolated(DynMaxEntError):
    """A time step produced a negative cell value; dt exceeds the explicit bound."""


class NotApplicable(DynMaxEntError):
    """Closure method requested outside its applicability region."""


class SingularCovariance(DynMaxEntError):
    """Covariance matrix of the closure ODE is singular beyond the condition cap."""


class StepRejected(DynMaxEntError):
    """Closure step left the admissible region even after repeated halving."""


class NotBoundedBelow(DynMaxEntError):
    """Transformed potential is unbounded below; spectral solve refused."""


class InsufficientDecay(DynMaxEntError):
    """Trajectory did not decay far enough to fit a rate."""


class UndefinedEntropy(DynMaxEntError):
    """Relative entropy undefined: mass where the reference density vanishes."""


class OutOfRange(DynMaxEntError):
    """Moment target outside the attainable range."""


class EmptyOverlap(DynMaxEntError):
    """Trajectories share no common time interval."""


class MissingArtifacts(DynMaxEntError):
    """Expected run outputs are absent from the given directory."""
