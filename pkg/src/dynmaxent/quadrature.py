"""Quadrature against densities with integrable endpoint singularities.

The backbone is a tanh-sinh (double exponential) rule on (0, 1).  Nodes carry
their exact distances to both endpoints, so integrands built from ln(xi) and
1/xi keep full precision at abscissas exponentially close to the boundary.
Refinement doubles the node density until two consecutive levels agree.

Moments that do not exist are detected analytically from the endpoint
xi-powers of the integrand (finite iff sigma + power > 0) and reported as
flags, never as floating-point infinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DivergentIntegral, NonConvergentIntegral
from .model import DensityCoeffs, Observable, ObservableSet, ObsKind

# Trapezoid half-width in the transformed variable: at |t| = T_MAX the node
# distance to the endpoint is ~1e-304, still a normal double.
_T_MAX = 6.1


@dataclass(frozen=True)
class QuadratureSpec:
    """Refinement schedule and tolerances for the tanh-sinh rule."""

    method: str = "tanh-sinh"
    start_level: int = 5
    max_level: int = 9
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.method != "tanh-sinh":
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.start_level < 2 or self.max_level < self.start_level:
            raise ValueError("need max_level >= start_level >= 2")


DEFAULT_SPEC = QuadratureSpec()


class _NodeSet:
    """tanh-sinh abscissas on (0, 1) at one refinement level."""

    def __init__(self, level: int):
        h = 0.5**level
        k = np.arange(-math.floor(_T_MAX / h), math.floor(_T_MAX / h) + 1)
        t = h * k
        q = 0.5 * np.pi * np.sinh(t)
        near = 1.0 / (1.0 + np.exp(2.0 * np.abs(q)))  # distance to near endpoint
        self.d0 = np.where(t < 0, near, 1.0 - near)
        self.d1 = np.where(t > 0, near, 1.0 - near)
        self.x = self.d0
        self.w = h * np.pi * np.cosh(t) * self.d0 * self.d1
        self.log_w = np.log(self.w)
        self.xi = self.d0 * self.d1
        self.xiprime = self.d1 - self.d0
        self.lnxi = np.log(self.d0) + np.log(self.d1)
        self._cache: dict = {}

    def obs_values(self, obs: Observable) -> np.ndarray:
        key = ("v", obs.kind)
        if key not in self._cache:
            if obs.kind is ObsKind.XI:
                v = self.xi
            elif obs.kind is ObsKind.XI_PRIME:
                v = self.xiprime
            elif obs.kind is ObsKind.LN_XI:
                v = self.lnxi
            else:
                v = self.xi * self.xi
            self._cache[key] = v
        return self._cache[key]

    def obs_derivs(self, obs: Observable) -> np.ndarray:
        key = ("d", obs.kind)
        if key not in self._cache:
            if obs.kind is ObsKind.XI:
                v = self.xiprime
            elif obs.kind is ObsKind.XI_PRIME:
                v = np.full_like(self.x, -2.0)
            elif obs.kind is ObsKind.LN_XI:
                v = self.xiprime / self.xi
            else:
                v = 2.0 * self.xi * self.xiprime
            self._cache[key] = v
        return self._cache[key]


_NODE_CACHE: dict[int, _NodeSet] = {}


def _nodes(level: int) -> _NodeSet:
    if level not in _NODE_CACHE:
        _NODE_CACHE[level] = _NodeSet(level)
    return _NODE_CACHE[level]


def _coeffs_of(params) -> DensityCoeffs:
    return params if isinstance(params, DensityCoeffs) else params.coeffs


class _Weights:
    """Normalized density weights on one node set."""

    def __init__(self, coeffs: DensityCoeffs, level: int):
        self.nodes = _nodes(level)
        log_c = self.nodes.log_w + coeffs.log_unnormalized(
            self.nodes.d0, self.nodes.d1
        )
        shift = log_c.max()
        raw = np.exp(log_c - shift)
        total = raw.sum()
        self.log_z = shift + math.log(total)
        self.p = raw / total  # sums to one

    def mean(self, values: np.ndarray) -> float:
        return float(self.p @ values)


@lru_cache(maxsize=32)
def _weights(coeffs: DensityCoeffs, level: int) -> _Weights:
    return _Weights(coeffs, level)


def _check_admissible(coeffs: DensityCoeffs):
    if not (coeffs.sigma > 0.0):
        raise DivergentIntegral(
            f"partition integral diverges for exponent sigma={coeffs.sigma}"
        )


def _refine(eval_at_level, spec: QuadratureSpec, what: str) -> np.ndarray:
    """Evaluate a vector of integrals at successive levels until agreement."""
    prev = None
    for level in range(spec.start_level, spec.max_level + 1):
        cur = np.asarray(eval_at_level(level), dtype=float)
        if prev is not None:
            tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(cur))
            if np.all(np.abs(cur - prev) <= tol):
                return cur
        prev = cur
    raise NonConvergentIntegral(
        f"{what}: levels {spec.max_level - 1} and {spec.max_level} "
        f"disagree beyond tolerance"
    )


def log_partition(params, spec: QuadratureSpec | None = None) -> float:
    """Log of the partition integral of the unnormalized density."""
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)
    out = _refine(lambda lv: [_weights(coeffs, lv).log_z], spec, "log_partition")
    return float(out[0])


def integrate(
    f,
    params,
    spec: QuadratureSpec | None = None,
    *,
    assume_integrable: bool = False,
    parts: bool = False,
) -> float:
    """Integral of f against the normalized stationary density.

    ``f`` is evaluated at the node abscissas; it may be vectorized or scalar.
    With ``parts=True`` it is called as ``f(d0, d1)`` with the exact node
    distances to 0 and 1, which keeps singular integrands like ln(xi)
    accurate at abscissas exponentially close to the boundary.

    Raises ``DivergentIntegral`` when the weighted tail contributions do not
    decay (non-integrable singularity), ``NonConvergentIntegral`` when
    refinement levels keep disagreeing.  ``assume_integrable`` skips the tail
    heuristic for callers that know f is bounded; near-threshold exponents
    are otherwise indistinguishable from true divergence at finite precision.
    """
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)

    def eval_at_level(level):
        wts = _weights(coeffs, level)
        x = wts.nodes.x
        if parts:
            fx = np.asarray(f(wts.nodes.d0, wts.nodes.d1), dtype=float)
        else:
            try:
                fx = np.asarray(f(x), dtype=float)
                if fx.shape != x.shape:
                    raise TypeError
            except (TypeError, ValueError):
                fx = np.array([f(v) for v in x], dtype=float)
        contrib = wts.p * fx
        if not np.all(np.isfinite(contrib)):
            raise DivergentIntegral(
                "integrand is not finite at quadrature nodes near the boundary"
            )
        if not assume_integrable:
            total_abs = np.abs(contrib).sum()
            tail = max(np.abs(contrib[:5]).max(), np.abs(contrib[-5:]).max())
            if total_abs > 0 and tail > 0.01 * total_abs:
                raise DivergentIntegral(
                    "tail contributions do not decay; integral diverges"
                )
        return [contrib.sum()]

    return float(_refine(eval_at_level, spec, "integrate")[0])


@dataclass(frozen=True)
class MomentVector:
    """Moment values with per-entry finiteness flags."""

    values: np.ndarray
    finite: np.ndarray
    labels: tuple

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def require_finite(self) -> np.ndarray:
        if not bool(np.all(self.finite)):
            bad = [l for l, ok in zip(self.labels, self.finite) if not ok]
            raise DivergentIntegral(f"infinite moments: {', '.join(bad)}")
        return self.values


def _value_finite(sigma: float, obs: Observable) -> bool:
    return sigma + obs.value_xi_power > 0.0


def moments(params, obs: ObservableSet, spec: QuadratureSpec | None = None) -> MomentVector:
    """First moments of each observable against the stationary density."""
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)
    finite = np.array([_value_finite(coeffs.sigma, o) for o in obs])
    live = [o for o, ok in zip(obs, finite) if ok]
    vals = np.full(len(obs), np.nan)
    if live:
        def eval_at_level(level):
            wts = _weights(coeffs, level)
            return [wts.mean(wts.nodes.obs_values(o)) for o in live]

        got = _refine(eval_at_level, spec, "moments")
        vals[finite] = got
    return MomentVector(values=vals, finite=finite, labels=obs.labels)


def covariance(
    params,
    obs_rows: ObservableSet,
    obs_cols: ObservableSet,
    spec: QuadratureSpec | None = None,
) -> np.ndarray:
    """Centered second-moment matrix <B_i A_k> - <B_i><A_k>.

    Symmetric positive semidefinite when ``obs_rows is obs_cols``.  All
    entries are finite for any admissible density, because the observable
    values carry nonnegative xi-powers.
    """
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)

    def eval_at_level(level):
        wts = _weights(coeffs, level)
        rows = [wts.nodes.obs_values(o) for o in obs_rows]
        cols = [wts.nodes.obs_values(o) for o in obs_cols]
        rc = [v - wts.mean(v) for v in rows]
        cc = [v - wts.mean(v) for v in cols]
        return [wts.mean(r * c) for r in rc for c in cc]

    flat = _refine(eval_at_level, spec, "covariance")
    return flat.reshape(len(obs_rows), len(obs_cols))


@dataclass(frozen=True)
class ClosureTables:
    """Covariance, mobility and first moments evaluated in one pass."""

    cov: np.ndarray
    mob: np.ndarray
    mob_finite: np.ndarray
    mean_rows: np.ndarray
    mean_cols: np.ndarray


def closure_tables(
    params,
    obs_rows: ObservableSet,
    obs_cols: ObservableSet,
    mob_cols: ObservableSet,
    spec: QuadratureSpec | None = None,
) -> ClosureTables:
    """Everything the closure right-hand side needs, one refinement loop.

    ``cov`` is <rows x cols> centered, ``mob`` = <xi d(rows) d(mob_cols)>
    with divergent entries NaN and flagged in ``mob_finite``.
    """
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)
    nr, nc = len(obs_rows), len(obs_cols)
    finite = mobility_flags(coeffs, obs_rows, mob_cols)

    def eval_at_level(level):
        wts = _weights(coeffs, level)
        nd = wts.nodes
        rows = np.vstack([nd.obs_values(o) for o in obs_rows])
        cols = np.vstack([nd.obs_values(o) for o in obs_cols])
        m_r = rows @ wts.p
        m_c = cols @ wts.p
        cov = ((rows - m_r[:, None]) * wts.p) @ (cols - m_c[:, None]).T
        db = np.vstack([nd.obs_derivs(o) for o in obs_rows])
        da = np.vstack([nd.obs_derivs(o) for o in mob_cols])
        # xi multiplied in first keeps the 1/xi derivative rows bounded;
        # entries flagged divergent may overflow and are masked afterwards
        with np.errstate(over="ignore", invalid="ignore"):
            mob = (db * (wts.p * nd.xi)) @ da.T
        return np.concatenate([m_r, m_c, cov.ravel(), np.where(finite, mob, 0.0).ravel()])

    flat = _refine(eval_at_level, spec, "closure_tables")
    mean_rows = flat[:nr]
    mean_cols = flat[nr : nr + nc]
    cov = flat[nr + nc : nr + nc + nr * nc].reshape(nr, nc)
    mob = flat[nr + nc + nr * nc :].reshape(finite.shape)
    mob = np.where(finite, mob, np.nan)
    return ClosureTables(
        cov=cov, mob=mob, mob_finite=finite, mean_rows=mean_rows, mean_cols=mean_cols
    )


def mobility_flags(params, obs_rows: ObservableSet, obs_cols: ObservableSet) -> np.ndarray:
    """Finiteness mask of the mobility matrix entries <xi dB_i dA_k>."""
    sigma = _coeffs_of(params).sigma
    return np.array(
        [
            [sigma + 1 + b.deriv_xi_power + a.deriv_xi_power > 0.0 for a in obs_cols]
            for b in obs_rows
        ]
    )


def mobility(
    params,
    obs_rows: ObservableSet,
    obs_cols: ObservableSet,
    spec: QuadratureSpec | None = None,
):
    """Mobility matrix <xi * dB_i/dx * dA_k/dx> with finiteness flags.

    Returns ``(matrix, finite)``; divergent entries hold NaN and are flagged
    False.  The caller decides whether its method applies.
    """
    coeffs = _coeffs_of(params)
    spec = spec or DEFAULT_SPEC
    _check_admissible(coeffs)
    finite = mobility_flags(coeffs, obs_rows, obs_cols)
    pairs = [
        (i, k)
        for i in range(len(obs_rows))
        for k in range(len(obs_cols))
        if finite[i, k]
    ]
    mat = np.full((len(obs_rows), len(obs_cols)), np.nan)
    if pairs:
        def eval_at_level(level):
            wts = _weights(coeffs, level)
            out = []
            for i, k in pairs:
                db = wts.nodes.obs_derivs(obs_rows[i])
                da = wts.nodes.obs_derivs(obs_cols[k])
                # multiply xi in first: xi*db stays O(1) even when db ~ 1/xi
                out.append(wts.mean((wts.nodes.xi * db) * da))
            return out

        got = _refine(eval_at_level, spec, "mobility")
        for (i, k), v in zip(pairs, got):
            mat[i, k] = v
    return mat, finite
