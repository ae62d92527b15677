"""Single-locus model: heterozygosity factor, observables, stationary density.

The stationary densities handled here all have log-density

    ln rho(x) = (sigma - 1) * ln(xi) + c1 * xi' + c2 * xi - ln Z,

with xi = x(1-x), xi' = 1-2x.  The scalar toy model is (sigma, 0, 0) with
sigma the exponent parameter; the vector model maps (gamma, eta, mu) to
(4*N*mu, -2*N*gamma, 4*N*eta).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams


def xi(x):
    """Heterozygosity factor x(1-x); symmetric about 1/2, maximum 1/4."""
    return x * (1.0 - x)


def xi_prime(x):
    """Derivative of xi: 1 - 2x."""
    return 1.0 - 2.0 * x


class ObsKind(enum.Enum):
    XI_PRIME = "xiprime"
    XI = "xi"
    LN_XI = "lnxi"
    XI_SQUARED = "xisq"


# Endpoint behaviour as a power of xi, used to decide integrability of
# moments against xi**(sigma-1):  integral finite  iff  sigma + power > 0.
_VALUE_POWER = {
    ObsKind.XI_PRIME: 0,
    ObsKind.XI: 1,
    ObsKind.LN_XI: 0,  # log factor; does not shift the threshold
    ObsKind.XI_SQUARED: 2,
}
_DERIV_POWER = {
    ObsKind.XI_PRIME: 0,  # d/dx xi' = -2
    ObsKind.XI: 0,  # d/dx xi = xi'
    ObsKind.LN_XI: -1,  # d/dx ln xi = xi'/xi
    ObsKind.XI_SQUARED: 1,  # d/dx xi^2 = 2 xi xi'
}

_LABEL = {
    ObsKind.XI_PRIME: "xiprime",
    ObsKind.XI: "xi",
    ObsKind.LN_XI: "lnxi",
    ObsKind.XI_SQUARED: "xisq",
}


@dataclass(frozen=True)
class Observable:
    """One member of the observable basis {xi', xi, ln xi, xi^2}.

    ``value_from_parts`` / ``derivative_from_parts`` take the distances
    (d0, d1) = (x, 1-x) to the interval endpoints so that quadrature nodes
    exponentially close to 0 or 1 lose no precision.
    """

    kind: ObsKind

    @property
    def label(self) -> str:
        return _LABEL[self.kind]

    @property
    def value_xi_power(self) -> int:
        return _VALUE_POWER[self.kind]

    @property
    def deriv_xi_power(self) -> int:
        return _DERIV_POWER[self.kind]

    def value_from_parts(self, d0, d1):
        k = self.kind
        if k is ObsKind.XI_PRIME:
            return d1 - d0
        if k is ObsKind.XI:
            return d0 * d1
        if k is ObsKind.LN_XI:
            return np.log(d0) + np.log(d1)
        if k is ObsKind.XI_SQUARED:
            return (d0 * d1) ** 2
        raise AssertionError(k)

    def derivative_from_parts(self, d0, d1):
        k = self.kind
        if k is ObsKind.XI_PRIME:
            return np.full_like(np.asarray(d0, dtype=float), -2.0)
        if k is ObsKind.XI:
            return d1 - d0
        if k is ObsKind.LN_XI:
            return (d1 - d0) / (d0 * d1)
        if k is ObsKind.XI_SQUARED:
            return 2.0 * d0 * d1 * (d1 - d0)
        raise AssertionError(k)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.value_from_parts(x, 1.0 - x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.derivative_from_parts(x, 1.0 - x)


XI_PRIME_OBS = Observable(ObsKind.XI_PRIME)
XI_OBS = Observable(ObsKind.XI)
LN_XI_OBS = Observable(ObsKind.LN_XI)
XI_SQUARED_OBS = Observable(ObsKind.XI_SQUARED)

_BY_LABEL = {o.label: o for o in (XI_PRIME_OBS, XI_OBS, LN_XI_OBS, XI_SQUARED_OBS)}


class ObservableSet:
    """Ordered basis of pairwise-distinct observables."""

    def __init__(self, members):
        members = tuple(
            _BY_LABEL[m] if isinstance(m, str) else m for m in members
        )
        kinds = [m.kind for m in members]
        if len(set(kinds)) != len(kinds):
            raise ValueError("observable kinds must be pairwise distinct")
        self.members = members

    @property
    def dimension(self) -> int:
        return len(self.members)

    @property
    def labels(self):
        return tuple(m.label for m in self.members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def __repr__(self):
        return f"ObservableSet({', '.join(self.labels)})"


# Standard bases: A is conjugate to the model parameters, B is the test
# basis whose mobility moments stay finite for all admissible exponents.
OBS_A_VECTOR = ObservableSet(["xiprime", "xi", "lnxi"])
OBS_B_VECTOR = ObservableSet(["xiprime", "xi", "xisq"])
OBS_A_SCALAR = ObservableSet(["lnxi"])
OBS_B_SCALAR = ObservableSet(["xi"])


class ModelMode(enum.Enum):
    SCALAR_TOY = "scalar"
    VECTOR = "vector"


@dataclass(frozen=True)
class DensityCoeffs:
    """Exponent-space coefficients of the log unnormalized density."""

    sigma: float  # coefficient of ln xi is sigma - 1
    c_xiprime: float = 0.0
    c_xi: float = 0.0

    def log_unnormalized(self, d0, d1):
        lognu = (self.sigma - 1.0) * (np.log(d0) + np.log(d1))
        if self.c_xiprime != 0.0:
            lognu = lognu + self.c_xiprime * (d1 - d0)
        if self.c_xi != 0.0:
            lognu = lognu + self.c_xi * (d0 * d1)
        return lognu


@dataclass(frozen=True)
class ModelParams:
    """Population size and drift parameters defining the stationary density.

    ``gamma_sign`` selects the sign convention of the directional-selection
    term in the log stationary density (-1 is the default convention; +1
    flips it).
    """

    N: float
    mode: ModelMode
    alpha: float | None = None
    gamma: float | None = None
    eta: float | None = None
    mu: float | None = None
    gamma_sign: float = -1.0

    def __post_init__(self):
        if not (self.N > 0.0 and math.isfinite(self.N)):
            raise InvalidParams(f"population size N must be positive, got {self.N}")
        if self.gamma_sign not in (-1.0, 1.0):
            raise InvalidParams("gamma_sign must be -1 or +1")
        if self.mode is ModelMode.SCALAR_TOY:
            if self.alpha is None or not (self.alpha > 0.0 and math.isfinite(self.alpha)):
                raise InvalidParams(
                    f"scalar toy model requires exponent alpha > 0, got {self.alpha}"
                )
        else:
            if self.mu is None or not (self.mu > 0.0 and math.isfinite(self.mu)):
                raise InvalidParams(
                    f"vector model requires mutation rate mu > 0, got {self.mu}"
                )
            for name in ("gamma", "eta"):
                v = getattr(self, name)
                if v is None or not math.isfinite(v):
                    raise InvalidParams(f"vector model requires finite {name}, got {v}")

    @classmethod
    def scalar_toy(cls, alpha: float, N: float = 1.0) -> "ModelParams":
        return cls(N=N, mode=ModelMode.SCALAR_TOY, alpha=alpha)

    @classmethod
    def vector(
        cls,
        gamma: float,
        eta: float,
        mu: float,
        N: float = 1.0,
        gamma_sign: float = -1.0,
    ) -> "ModelParams":
        return cls(
            N=N,
            mode=ModelMode.VECTOR,
            gamma=gamma,
            eta=eta,
            mu=mu,
            gamma_sign=gamma_sign,
        )

    @property
    def exponent(self) -> float:
        """sigma such that the density behaves like xi**(sigma-1) at 0 and 1."""
        if self.mode is ModelMode.SCALAR_TOY:
            return self.alpha
        return 4.0 * self.N * self.mu

    @property
    def coeffs(self) -> DensityCoeffs:
        if self.mode is ModelMode.SCALAR_TOY:
            return DensityCoeffs(sigma=self.alpha)
        return DensityCoeffs(
            sigma=4.0 * self.N * self.mu,
            c_xiprime=self.gamma_sign * 2.0 * self.N * self.gamma,
            c_xi=4.0 * self.N * self.eta,
        )


def log_unnormalized_density(params: ModelParams, x) -> np.ndarray | float:
    """Log of the unnormalized stationary density at interior points.

    Rejects x in {0, 1}, where ln(xi) is singular.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("x must lie strictly inside (0, 1)")
    out = params.coeffs.log_unnormalized(x, 1.0 - x)
    return float(out) if out.ndim == 0 else out


def log_partition_function(params: ModelParams, spec=None) -> float:
    from . import quadrature

    return quadrature.log_partition(params.coeffs, spec)


def partition_function(params: ModelParams, spec=None) -> float:
    """Normalization integral of exp(log unnormalized density) over (0, 1).

    For the scalar toy model this equals the Beta integral B(alpha, alpha).
    """
    return math.exp(log_partition_function(params, spec))


def stationary_density(params: ModelParams, spec=None):
    """Normalized stationary density as a callable on (0, 1)."""
    log_z = log_partition_function(params, spec)
    coeffs = params.coeffs

    def density(x):
        x = np.asarray(x, dtype=float)
        out = np.exp(coeffs.log_unnormalized(x, 1.0 - x) - log_z)
        return float(out) if out.ndim == 0 else out

    return density
