"""Moment-closure ODEs driving the stationary-family parameters in time.

The closure replaces the Fokker-Planck solution u(t) by the stationary
density with time-dependent exponent-space parameters theta*(t) and evolves

    d theta*/dt = (1/(4N)) * Cov^{-1} * Mob * (theta_target - theta*),

where Cov is the covariance of the test observables against the conjugate
basis A and Mob the mobility matrix <xi dB : dA>.  The original variant
tests with B = A; the modified variant uses a basis B whose mobility stays
finite for every admissible exponent.  The 1/(4N) factor puts the closure
on the same clock as the solver's diffusion coefficient, so trajectories
are directly comparable in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import quadrature
from .errors import InvalidParams, NotApplicable, SingularCovariance, StepRejected
from .model import (
    DensityCoeffs,
    ModelMode,
    ModelParams,
    ObservableSet,
    ObsKind,
)

# Density coordinate conjugate to each observable kind: d(log rho)/d theta = A.
_THETA_FIELD = {
    ObsKind.XI_PRIME: "c_xiprime",
    ObsKind.XI: "c_xi",
    ObsKind.LN_XI: "sigma",
}

_FAST_QUAD = quadrature.QuadratureSpec(
    start_level=5, max_level=9, abs_tol=1e-12, rel_tol=1e-9
)


@dataclass(frozen=True)
class ClosureSpec:
    """Variant, observable bases and numerical guards of a closure run."""

    variant: str  # "original" | "modified"
    obs_a: ObservableSet
    obs_b: ObservableSet | None = None
    scalar_rhs_convention: str = "cross-ab"  # or "literal-bb"
    cond_cap: float = 1e12
    quad: quadrature.QuadratureSpec = field(default=_FAST_QUAD)

    def __post_init__(self):
        if self.variant not in ("original", "modified"):
            raise ValueError(f"unknown closure variant {self.variant!r}")
        if self.scalar_rhs_convention not in ("cross-ab", "literal-bb"):
            raise ValueError(
                f"unknown rhs convention {self.scalar_rhs_convention!r}"
            )
        for obs in self.obs_a:
            if obs.kind not in _THETA_FIELD:
                raise ValueError(
                    f"{obs.label} is not conjugate to a density parameter"
                )
        if self.variant == "modified" and self.obs_b is None:
            raise ValueError("modified variant requires a test basis obs_b")

    @property
    def test_basis(self) -> ObservableSet:
        return self.obs_a if self.variant == "original" else self.obs_b

    @property
    def mobility_cols(self) -> ObservableSet:
        if self.scalar_rhs_convention == "cross-ab":
            return self.obs_a
        return self.test_basis


def theta_from_params(params: ModelParams, obs_a: ObservableSet) -> np.ndarray:
    coeffs = params.coeffs
    return np.array([getattr(coeffs, _THETA_FIELD[o.kind]) for o in obs_a])


def coeffs_from_theta(
    theta: np.ndarray, obs_a: ObservableSet, base: DensityCoeffs
) -> DensityCoeffs:
    updates = {
        _THETA_FIELD[o.kind]: float(v) for o, v in zip(obs_a, theta)
    }
    return replace(base, **updates)


def params_from_theta(
    theta: np.ndarray, obs_a: ObservableSet, template: ModelParams
) -> ModelParams:
    """Rebuild user-facing parameters from closure coordinates."""
    coeffs = coeffs_from_theta(theta, obs_a, template.coeffs)
    if template.mode is ModelMode.SCALAR_TOY:
        return ModelParams.scalar_toy(coeffs.sigma, N=template.N)
    n2 = 2.0 * template.N
    return ModelParams.vector(
        gamma=template.gamma_sign * coeffs.c_xiprime / n2,
        eta=coeffs.c_xi / (2.0 * n2),
        mu=coeffs.sigma / (2.0 * n2),
        N=template.N,
        gamma_sign=template.gamma_sign,
    )


def _covariance_scale(cov: np.ndarray, rows_mean, cols_mean) -> float:
    raw = cov + np.outer(rows_mean, cols_mean)
    return max(float(np.abs(raw).max()), 1e-300)


def closure_matrices(coeffs: DensityCoeffs, spec: ClosureSpec):
    """Covariance and mobility matrices of the closure at one state."""
    tables = _tables(coeffs, spec)
    return tables.cov, tables.mob


def _tables(coeffs: DensityCoeffs, spec: ClosureSpec) -> quadrature.ClosureTables:
    rows = spec.test_basis
    tables = quadrature.closure_tables(
        coeffs, rows, spec.obs_a, spec.mobility_cols, spec.quad
    )
    if not bool(np.all(tables.mob_finite)):
        bad = [
            f"<xi d{rows[i].label} d{spec.mobility_cols[k].label}>"
            for i in range(tables.mob_finite.shape[0])
            for k in range(tables.mob_finite.shape[1])
            if not tables.mob_finite[i, k]
        ]
        raise NotApplicable(
            f"mobility moments diverge at exponent sigma={coeffs.sigma}: "
            + ", ".join(bad)
        )
    return tables


def closure_rhs(
    theta: np.ndarray,
    theta_target: np.ndarray,
    spec: ClosureSpec,
    base: DensityCoeffs,
    N: float,
) -> np.ndarray:
    """Time derivative of the closure parameters at one state."""
    coeffs = coeffs_from_theta(theta, obs_a=spec.obs_a, base=base)
    tables = _tables(coeffs, spec)
    cov, mob = tables.cov, tables.mob
    scale = _covariance_scale(cov, tables.mean_rows, tables.mean_cols)
    smin = np.linalg.svd(cov, compute_uv=False).min()
    if smin < scale / spec.cond_cap:
        raise SingularCovariance(
            f"covariance singular beyond cap {spec.cond_cap:g} "
            f"(smallest singular value {smin:g}, scale {scale:g})"
        )
    drive = mob @ (np.asarray(theta_target) - np.asarray(theta))
    return np.linalg.solve(cov, drive) / (4.0 * N)


def rhs_original(params_state: ModelParams, params_target: ModelParams, spec=None):
    """Original-variant derivative at a state, in exponent coordinates."""
    spec = spec or ClosureSpec("original", obs_a=_default_obs_a(params_state))
    theta = theta_from_params(params_state, spec.obs_a)
    theta_t = theta_from_params(params_target, spec.obs_a)
    return closure_rhs(theta, theta_t, spec, params_state.coeffs, params_state.N)


def rhs_modified(params_state: ModelParams, params_target: ModelParams, spec=None):
    """Modified-variant derivative at a state, in exponent coordinates."""
    if spec is None:
        spec = ClosureSpec(
            "modified",
            obs_a=_default_obs_a(params_state),
            obs_b=_default_obs_b(params_state),
        )
    theta = theta_from_params(params_state, spec.obs_a)
    theta_t = theta_from_params(params_target, spec.obs_a)
    return closure_rhs(theta, theta_t, spec, params_state.coeffs, params_state.N)


def _default_obs_a(params: ModelParams) -> ObservableSet:
    from .model import OBS_A_SCALAR, OBS_A_VECTOR

    return OBS_A_SCALAR if params.mode is ModelMode.SCALAR_TOY else OBS_A_VECTOR


def _default_obs_b(params: ModelParams) -> ObservableSet:
    from .model import OBS_B_SCALAR, OBS_B_VECTOR

    return OBS_B_SCALAR if params.mode is ModelMode.SCALAR_TOY else OBS_B_VECTOR


@dataclass
class ClosureTrajectory:
    """Sampled closure path: parameters and reported moments over time."""

    times: np.ndarray
    theta: np.ndarray  # (n_samples, d) exponent-space coordinates
    moments: np.ndarray  # (n_samples, m)
    moment_labels: tuple
    obs_a: ObservableSet
    template: ModelParams
    halvings: int = 0

    def moment(self, label: str) -> np.ndarray:
        return self.moments[:, self.moment_labels.index(label)]

    @property
    def final_params(self) -> ModelParams:
        return params_from_theta(self.theta[-1], self.obs_a, self.template)

    def params_at(self, i: int) -> ModelParams:
        return params_from_theta(self.theta[i], self.obs_a, self.template)


def _spectral_rate(theta, theta_target, spec, base, N) -> float:
    coeffs = coeffs_from_theta(theta, spec.obs_a, base)
    cov, mob = closure_matrices(coeffs, spec)
    rate = np.linalg.solve(cov, mob) / (4.0 * N)
    return float(np.abs(np.linalg.eigvals(rate)).max())


def default_time_step(
    spec: ClosureSpec, params0: ModelParams, params_target: ModelParams, frac=0.01
) -> float:
    """dt sized against the stiffest relaxation rate at both endpoints."""
    th0 = theta_from_params(params0, spec.obs_a)
    tht = theta_from_params(params_target, spec.obs_a)
    base = params0.coeffs
    rate = max(
        _spectral_rate(th0, tht, spec, base, params0.N),
        _spectral_rate(tht, tht, spec, base, params0.N),
    )
    return frac / rate


def integrate(
    spec: ClosureSpec,
    params0: ModelParams,
    params_target: ModelParams,
    T: float,
    dt: float | None = None,
    sample_every: int = 1,
    report_obs: ObservableSet | None = None,
    max_halvings: int = 20,
) -> ClosureTrajectory:
    """Forward-Euler trajectory of the closure parameters on [0, T].

    A step that would leave the admissible region is retried with a halved
    increment (at most ``max_halvings`` times, counted on the trajectory);
    the global step size is never changed.
    """
    if params0.mode is not params_target.mode or params0.N != params_target.N:
        raise InvalidParams("initial and target parameters must share mode and N")
    obs_a = spec.obs_a
    theta = theta_from_params(params0, obs_a)
    theta_t = theta_from_params(params_target, obs_a)
    base = params0.coeffs
    base_t = coeffs_from_theta(theta_t, obs_a, base)
    frozen_fields = set(_THETA_FIELD.values()) - {
        _THETA_FIELD[o.kind] for o in obs_a
    }
    for name in frozen_fields:
        if getattr(base, name) != getattr(params_target.coeffs, name):
            raise InvalidParams(
                f"coefficient {name} is not evolved by the chosen basis but "
                f"differs between initial and target parameters"
            )
    if spec.variant == "original":
        # both endpoints must sit strictly inside the applicability region
        closure_matrices(base, spec)
        closure_matrices(base_t, spec)

    if dt is None:
        dt = default_time_step(spec, params0, params_target)
    n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
    dt = T / n_steps

    report_obs = report_obs or obs_a
    N = params0.N
    quad = spec.quad

    rhs_cache: dict = {}

    def rhs_at(th):
        key = tuple(np.round(th, 12))
        if key not in rhs_cache:
            rhs_cache[key] = closure_rhs(th, theta_t, spec, base, N)
        return rhs_cache[key]

    def admissible(th):
        coeffs = coeffs_from_theta(th, obs_a, base)
        if coeffs.sigma <= 0.0:
            return False
        if spec.variant == "original" and not np.all(
            quadrature.mobility_flags(coeffs, spec.test_basis, spec.mobility_cols)
        ):
            return False
        return True

    times, thetas, moms = [], [], []
    halvings = 0

    def record(t, th):
        times.append(t)
        thetas.append(np.array(th))
        coeffs = coeffs_from_theta(th, obs_a, base)
        moms.append(quadrature.moments(coeffs, report_obs, quad).values)

    record(0.0, theta)
    for step in range(1, n_steps + 1):
        increment = dt * rhs_at(theta)
        trial = theta + increment
        k = 0
        while not admissible(trial):
            k += 1
            if k > max_halvings:
                raise StepRejected(
                    f"step at t={step * dt:g} left the admissible region "
                    f"after {max_halvings} halvings"
                )
            increment = 0.5 * increment
            trial = theta + increment
        halvings += k
        theta = trial
        if step % sample_every == 0 or step == n_steps:
            record(step * dt, theta)

    return ClosureTrajectory(
        times=np.asarray(times),
        theta=np.asarray(thetas),
        moments=np.asarray(moms),
        moment_labels=report_obs.labels,
        obs_a=obs_a,
        template=params0,
        halvings=halvings,
    )
