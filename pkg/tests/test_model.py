import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaln

import dynmaxent as dm
from dynmaxent.model import DensityCoeffs


def ln_beta(a, b):
    return gammaln(a) + gammaln(b) - gammaln(a + b)


class TestXi:
    def test_boundary_zero(self):
        assert dm.xi(0.0) == 0.0
        assert dm.xi(1.0) == 0.0

    def test_vertex(self):
        assert dm.xi(0.5) == 0.25

    def test_direct_value(self):
        assert dm.xi(0.25) == pytest.approx(0.1875, abs=0)

    def test_symmetry(self):
        x = np.linspace(0.0, 1.0, 101)
        assert np.allclose(dm.xi(x), dm.xi(1.0 - x))


class TestObservables:
    @pytest.mark.parametrize("label", ["xiprime", "xi", "lnxi", "xisq"])
    def test_derivative_matches_finite_difference(self, label):
        obs = dm.ObservableSet([label])[0]
        x = np.linspace(0.1, 0.9, 17)
        h = 1e-6
        fd = (obs.value(x + h) - obs.value(x - h)) / (2 * h)
        assert np.allclose(obs.derivative(x), fd, rtol=1e-7, atol=1e-7)

    def test_closed_forms(self):
        x = 0.3
        assert dm.XI_PRIME_OBS.value(x) == pytest.approx(0.4)
        assert dm.LN_XI_OBS.value(x) == pytest.approx(math.log(0.21))
        assert dm.LN_XI_OBS.derivative(x) == pytest.approx(0.4 / 0.21)
        assert dm.XI_SQUARED_OBS.derivative(x) == pytest.approx(2 * 0.21 * 0.4)

    def test_duplicate_kinds_rejected(self):
        with pytest.raises(ValueError):
            dm.ObservableSet(["xi", "xi"])

    def test_set_order_preserved(self):
        s = dm.ObservableSet(["lnxi", "xiprime"])
        assert s.labels == ("lnxi", "xiprime")
        assert s.dimension == 2


class TestModelParams:
    def test_scalar_requires_positive_alpha(self):
        with pytest.raises(dm.InvalidParams):
            dm.ModelParams.scalar_toy(0.0)
        with pytest.raises(dm.InvalidParams):
            dm.ModelParams.scalar_toy(-1.0)

    def test_vector_requires_positive_mu(self):
        with pytest.raises(dm.InvalidParams):
            dm.ModelParams.vector(gamma=0.0, eta=0.0, mu=0.0)

    def test_positive_population(self):
        with pytest.raises(dm.InvalidParams):
            dm.ModelParams.scalar_toy(1.0, N=0.0)

    def test_vector_exponent(self):
        p = dm.ModelParams.vector(gamma=1.0, eta=-1.0, mu=0.5, N=2.0)
        assert p.exponent == pytest.approx(4.0)
        c = p.coeffs
        assert c.c_xiprime == pytest.approx(-4.0)  # -2*N*gamma
        assert c.c_xi == pytest.approx(-8.0)  # 4*N*eta


class TestLogUnnormalizedDensity:
    def test_scalar_alpha_one_is_flat(self):
        p = dm.ModelParams.scalar_toy(1.0)
        assert dm.log_unnormalized_density(p, 0.3) == pytest.approx(0.0, abs=1e-15)

    def test_scalar_alpha_three(self):
        p = dm.ModelParams.scalar_toy(3.0)
        assert dm.log_unnormalized_density(p, 0.5) == pytest.approx(2.0 * math.log(0.25))

    def test_vector_exponent_one(self):
        p = dm.ModelParams.vector(gamma=0.0, eta=0.0, mu=0.5, N=1.0)
        # exponent 4*N*mu - 1 = 1, so the log density at 1/2 is ln(1/4)
        assert dm.log_unnormalized_density(p, 0.5) == pytest.approx(math.log(0.25))

    def test_rejects_endpoints(self):
        p = dm.ModelParams.scalar_toy(2.0)
        for x in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                dm.log_unnormalized_density(p, x)

    def test_gamma_sign_mirrors_density(self):
        minus = dm.ModelParams.vector(gamma=1.5, eta=0.3, mu=0.5, gamma_sign=-1.0)
        plus = dm.ModelParams.vector(gamma=1.5, eta=0.3, mu=0.5, gamma_sign=1.0)
        x = np.linspace(0.05, 0.95, 19)
        assert np.allclose(
            dm.log_unnormalized_density(minus, x),
            dm.log_unnormalized_density(plus, 1.0 - x),
        )


class TestPartitionFunction:
    def test_alpha_one(self):
        assert dm.partition_function(dm.ModelParams.scalar_toy(1.0)) == pytest.approx(
            1.0, rel=1e-12
        )

    def test_alpha_two(self):
        assert dm.partition_function(dm.ModelParams.scalar_toy(2.0)) == pytest.approx(
            1.0 / 6.0, rel=1e-12
        )

    def test_alpha_three(self):
        assert dm.partition_function(dm.ModelParams.scalar_toy(3.0)) == pytest.approx(
            1.0 / 30.0, rel=1e-12
        )

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 1.0, 2.0, 3.0, 10.0])
    def test_matches_beta_integral(self, alpha):
        z = dm.partition_function(dm.ModelParams.scalar_toy(alpha))
        assert z == pytest.approx(math.exp(ln_beta(alpha, alpha)), rel=1e-10)

    def test_inadmissible_coeffs_diverge(self):
        with pytest.raises(dm.DivergentIntegral):
            dm.log_partition(DensityCoeffs(sigma=0.0))


class TestStationaryDensity:
    def test_uniform(self):
        dens = dm.stationary_density(dm.ModelParams.scalar_toy(1.0))
        assert dens(0.37) == pytest.approx(1.0, rel=1e-12)

    def test_alpha_two_midpoint(self):
        dens = dm.stationary_density(dm.ModelParams.scalar_toy(2.0))
        assert dens(0.5) == pytest.approx(1.5, rel=1e-12)

    def test_integrable_singularity(self):
        dens = dm.stationary_density(dm.ModelParams.scalar_toy(0.5))
        assert dens(1e-8) > 1e3

    @pytest.mark.parametrize(
        "params",
        [
            dm.ModelParams.scalar_toy(0.5),
            dm.ModelParams.scalar_toy(2.0),
            dm.ModelParams.vector(gamma=1.0, eta=-0.5, mu=0.6),
            dm.ModelParams.vector(gamma=-2.0, eta=1.0, mu=0.3, N=2.0),
        ],
    )
    def test_normalization_against_adaptive_quadrature(self, params):
        dens = dm.stationary_density(params)
        total, err = quad(dens, 0.0, 1.0, points=[0.5], limit=200)
        assert total == pytest.approx(1.0, abs=max(1e-8, 10 * err))

    def test_symmetric_when_gamma_zero(self):
        dens = dm.stationary_density(dm.ModelParams.vector(gamma=0.0, eta=1.3, mu=0.7))
        x = np.linspace(0.01, 0.99, 33)
        assert np.allclose(dens(x), dens(1.0 - x), rtol=1e-12)
