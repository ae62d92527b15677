"""Spectrum of the transformed generator and time-domain decay rates.

The coordinate change y = 4*sqrt(N)*arcsin(sqrt(x)) maps (0,1) to
(0, 2*pi*sqrt(N)) and turns the generator into -Laplacian + V.  Rather than
discretizing V directly (it is singular at the boundary away from two
special exponents), the operator is assembled in its weighted divergence
form, which makes the ground state exact at eigenvalue zero and leaves the
spectral gap readable without cancellation.  Eigenvalues come from Sturm
bisection on the symmetric tridiagonal matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDecay, NotBoundedBelow
from .fpsolver import FPTrajectory, ChangCooperOperator, DiscreteDensity, l1_distance
from .model import DensityCoeffs, ModelParams

_MIN_EXPONENT = 1.5  # potential bounded below needs sigma >= 3/2


def domain_length(N: float) -> float:
    return 2.0 * math.pi * math.sqrt(N)


def transform_y(x, N: float):
    """y = 4*sqrt(N)*arcsin(sqrt(x)), increasing from 0 to 2*pi*sqrt(N)."""
    return 4.0 * math.sqrt(N) * np.arcsin(np.sqrt(x))


def inverse_transform(y, N: float):
    s = np.sin(np.asarray(y, dtype=float) / (4.0 * math.sqrt(N)))
    return s * s


def _coeffs_of(params):
    return params if isinstance(params, DensityCoeffs) else params.coeffs


def _log_weight(coeffs: DensityCoeffs, x):
    """ln of the transformed stationary weight, up to an additive constant."""
    xi = x * (1.0 - x)
    xip = 1.0 - 2.0 * x
    return (coeffs.sigma - 0.5) * np.log(xi) + coeffs.c_xiprime * xip + coeffs.c_xi * xi


def potential(y, params, *, N: float | None = None):
    """Schrodinger potential of the transformed generator at interior y.

    Assembled from the closed-form y-derivatives of the log weight
    L = (sigma - 1/2) ln xi + c1 xi' + c2 xi:  V = L''/2 + (L')^2 / 4.
    The singular part carries the coefficient
    (sigma - 1/2)(sigma - 3/2) * (xi')^2 / (16 N xi), which vanishes at
    sigma = 1/2 and sigma = 3/2.
    """
    coeffs = _coeffs_of(params)
    if N is None:
        N = params.N
    x = inverse_transform(y, N)
    xi = x * (1.0 - x)
    xip = 1.0 - 2.0 * x
    sq = np.sqrt(xi)
    sig = coeffs.sigma - 0.5
    xi_y = sq * xip / (2.0 * math.sqrt(N))
    xip_y = -sq / math.sqrt(N)
    lnxi_yy = -1.0 / (2.0 * N) - xip * xip / (8.0 * N * xi)
    xip_yy = -xip / (4.0 * N)
    xi_yy = -xi / (2.0 * N) + xip * xip / (8.0 * N)
    l_y = sig * xi_y / xi + coeffs.c_xiprime * xip_y + coeffs.c_xi * xi_y
    l_yy = sig * lnxi_yy + coeffs.c_xiprime * xip_yy + coeffs.c_xi * xi_yy
    return 0.5 * l_yy + 0.25 * l_y * l_y


def _sturm_count(diag, off, lam: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix strictly below lam."""
    count = 0
    q = diag[0] - lam
    if q < 0.0:
        count += 1
    tiny = 1e-300
    for i in range(1, len(diag)):
        if q == 0.0:
            q = tiny
        q = diag[i] - lam - off[i - 1] / q  # off holds the squared couplings
        if q < 0.0:
            count += 1
    return count


def lowest_eigenvalues(diag: np.ndarray, off: np.ndarray, k: int = 2) -> np.ndarray:
    """k smallest eigenvalues of a symmetric tridiagonal matrix by bisection."""
    d = [float(v) for v in diag]
    e2 = [float(v) * float(v) for v in off]
    radius = np.zeros(len(d))
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lo_all = float((diag - radius).min())
    hi_all = float((diag + radius).max())
    out = []
    for j in range(k):
        lo, hi = lo_all, hi_all
        # invariant: count(lo) <= j < count(hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if _sturm_count(d, e2, mid) <= j:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return np.asarray(out)


@dataclass
class SpectralResult:
    """Lowest eigenvalues of the transformed generator and the implied gap."""

    eigenvalues: np.ndarray
    n_grid: int
    ground_state: np.ndarray
    y_centers: np.ndarray
    domain_length: float

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def spectral_gap(params: ModelParams, n_grid: int = 512, k_eigs: int = 2) -> SpectralResult:
    """Lowest eigenvalues of the weighted-divergence discretization.

    Refuses exponents below 3/2 (potential unbounded below there).  The
    discrete ground state is exact: the square root of the transformed
    stationary weight is an eigenvector at zero by construction.
    """
    coeffs = _coeffs_of(params)
    if coeffs.sigma < _MIN_EXPONENT:
        raise NotBoundedBelow(
            f"spectral solve needs exponent >= {_MIN_EXPONENT} "
            f"(4*N*mu for the vector model); got sigma={coeffs.sigma}"
        )
    if n_grid < 64:
        raise ValueError("n_grid must be at least 64")
    N = params.N
    length = domain_length(N)
    k = length / n_grid
    y_centers = (np.arange(n_grid) + 0.5) * k
    y_faces = np.arange(1, n_grid) * k
    l_c = _log_weight(coeffs, inverse_transform(y_centers, N))
    l_f = _log_weight(coeffs, inverse_transform(y_faces, N))
    inv_k2 = 1.0 / (k * k)
    off = -inv_k2 * np.exp(l_f - 0.5 * (l_c[:-1] + l_c[1:]))
    diag = np.zeros(n_grid)
    diag[:-1] += inv_k2 * np.exp(l_f - l_c[:-1])
    diag[1:] += inv_k2 * np.exp(l_f - l_c[1:])
    eigs = lowest_eigenvalues(diag, off, k=k_eigs)
    ground = np.exp(0.5 * (l_c - l_c.max()))
    ground /= math.sqrt(float(ground @ ground))
    return SpectralResult(
        eigenvalues=eigs,
        n_grid=n_grid,
        ground_state=ground,
        y_centers=y_centers,
        domain_length=length,
    )


def decay_rate(
    traj: FPTrajectory,
    params_target: ModelParams,
    *,
    target: DiscreteDensity | None = None,
) -> float:
    """Fitted exponential rate of the L1 distance to the stationary state.

    Uses the solver's own discrete stationary profile as the reference so
    the distance can decay to rounding level instead of saturating at the
    projection error.  Fits the final decade of clean decay.
    """
    if traj.snapshots is None:
        raise ValueError("trajectory was recorded without density snapshots")
    if target is None:
        target = ChangCooperOperator(params_target, traj.grid).stationary()
    d = np.array(
        [
            l1_distance(DiscreteDensity(traj.grid, snap), target)
            for snap in traj.snapshots
        ]
    )
    if d.min() > 1e-3:
        raise InsufficientDecay(
            f"distance only reached {d.min():.3g}; need below 1e-3"
        )
    base = max(float(d.min()), 1e-12 * float(d.max()))
    if d.max() < 100.0 * base:
        raise InsufficientDecay("distance spans fewer than two decades")
    window = (d >= 2.0 * base) & (d <= 20.0 * base)
    if window.sum() < 5:
        window = (d >= 1.5 * base) & (d <= 50.0 * base)
    if window.sum() < 2:
        raise InsufficientDecay("too few samples in the final decade")
    slope = np.polyfit(traj.times[window], np.log(d[window]), 1)[0]
    return -float(slope)
