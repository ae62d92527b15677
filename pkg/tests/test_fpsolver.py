import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import polygamma

import dynmaxent as dm
from dynmaxent import fpsolver as fp
from dynmaxent.model import DensityCoeffs

psi = lambda x: polygamma(0, x)


class TestGrid:
    def test_cells_avoid_boundary(self):
        g = fp.Grid1D(8)
        assert g.centers[0] > 0 and g.centers[-1] < 1
        assert len(g.interior_faces) == 7

    def test_too_small(self):
        with pytest.raises(ValueError):
            fp.Grid1D(1)


class TestDrift:
    def test_symmetric_model_vanishes_at_center(self):
        p = dm.ModelParams.vector(gamma=0.0, eta=0.0, mu=0.5)
        assert fp.drift_coefficient(p, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_pure_directional_term(self):
        # gamma=1, eta=0, vanishing mutation: advection is -gamma everywhere
        coeffs = DensityCoeffs(sigma=0.0, c_xiprime=-2.0, c_xi=0.0)
        x = np.linspace(0.05, 0.95, 7)
        assert np.allclose(fp.drift_coefficient(coeffs, x, N=1.0), -1.0)

    def test_face_peclet_matches_advection_integral(self):
        # midpoint-fitted exp(-P) should reproduce exp(-int C/D) to O(h^3)
        p = dm.ModelParams.scalar_toy(2.0)
        for n in (64, 128):
            g = fp.Grid1D(n)
            op = fp.ChangCooperOperator(p, g, fitting="midpoint")
            i = n // 3
            a, b = g.centers[i], g.centers[i + 1]
            exact, _ = quad(lambda x: fp.drift_coefficient(p, x) / op.diffusion, a, b)
            assert op.peclet[i] == pytest.approx(exact, abs=5.0 * g.h**3)


class TestChangCooperWeight:
    def test_central_limit(self):
        assert fp.chang_cooper_weight(1e-12) == pytest.approx(0.5, abs=1e-9)
        assert fp.chang_cooper_weight(0.0) == pytest.approx(0.5, abs=1e-12)

    def test_upwind_limits(self):
        assert fp.chang_cooper_weight(50.0) == pytest.approx(1.0 / 50.0, rel=1e-9)
        assert fp.chang_cooper_weight(-50.0) == pytest.approx(1.0, abs=0.03)

    def test_flux_form_equivalence(self):
        # a-coefficient flux equals the delta-weighted flux
        rng = np.random.default_rng(3)
        p = rng.normal(scale=3.0, size=50)
        d_over_h = 1.7
        c = p * d_over_h  # C = P*D/h
        w_l, w_r = rng.uniform(0.1, 2.0, 50), rng.uniform(0.1, 2.0, 50)
        delta = fp.chang_cooper_weight(p)
        j_delta = c * ((1 - delta) * w_r + delta * w_l) + d_over_h * (w_r - w_l)
        j_bern = d_over_h * (fp._bernoulli(-p) * w_r - fp._bernoulli(p) * w_l)
        assert np.allclose(j_delta, j_bern, rtol=1e-12, atol=1e-12)


class TestStep:
    @pytest.mark.parametrize("fitting", ["projected", "midpoint"])
    @pytest.mark.parametrize(
        "params",
        [
            dm.ModelParams.scalar_toy(3.0),
            dm.ModelParams.scalar_toy(0.3),
            dm.ModelParams.vector(gamma=2.0, eta=-1.0, mu=0.5),
        ],
    )
    def test_discrete_stationary_fixed_point(self, fitting, params):
        g = fp.Grid1D(512)
        op = fp.ChangCooperOperator(params, g, fitting=fitting)
        st = op.stationary()
        out = op.apply(st.u, op.stable_dt())
        assert np.abs(out - st.u).max() < 1e-13 * max(1.0, st.u.max())

    def test_mass_conserved_per_step(self):
        params = dm.ModelParams.scalar_toy(2.0)
        g = fp.Grid1D(256)
        u = fp.project_density(dm.ModelParams.scalar_toy(0.7), g)
        new = fp.chang_cooper_step(u, params, 1e-6)
        assert new.mass == pytest.approx(u.mass, rel=1e-15)

    def test_mass_and_positivity_many_steps(self):
        params = dm.ModelParams.scalar_toy(1.5)
        g = fp.Grid1D(128)
        u = fp.project_density(dm.ModelParams.scalar_toy(3.0), g)
        op = fp.ChangCooperOperator(params, g)
        dt = op.stable_dt()
        cur, buf = u.u.copy(), np.empty_like(u.u)
        for _ in range(10_000):
            op.apply(cur, dt, out=buf)
            cur, buf = buf, cur
        assert cur.min() >= 0.0
        assert g.h * cur.sum() == pytest.approx(1.0, abs=1e-12)

    def test_unstable_dt_raises(self):
        params = dm.ModelParams.scalar_toy(2.0)
        g = fp.Grid1D(128)
        u = fp.project_density(dm.ModelParams.scalar_toy(0.5), g)
        op = fp.ChangCooperOperator(params, g)
        with pytest.raises(dm.StabilityViolated):
            fp.chang_cooper_step(u, params, 50.0 * op.stable_dt())

    def test_midpoint_projected_residual_second_order(self):
        # projected continuum state is an O(h^2)-accurate fixed point of the
        # midpoint-fitted scheme: the residual rate drops ~4x per refinement
        params = dm.ModelParams.scalar_toy(2.5)

        def residual(n):
            g = fp.Grid1D(n)
            op = fp.ChangCooperOperator(params, g, fitting="midpoint")
            u = fp.project_density(params, g)
            dt = op.stable_dt()
            out = op.apply(u.u, dt)
            return g.h * np.abs(out - u.u).sum() / dt

        r1, r2 = residual(128), residual(256)
        assert r1 / r2 == pytest.approx(4.0, rel=0.3)

    def test_projected_fitting_fixes_projected_state(self):
        params = dm.ModelParams.scalar_toy(0.5)
        g = fp.Grid1D(256)
        op = fp.ChangCooperOperator(params, g, fitting="projected")
        u = fp.project_density(params, g)
        out = op.apply(u.u, op.stable_dt())
        assert np.abs(out - u.u).max() < 1e-12 * u.u.max()


class TestProjection:
    def test_uniform(self):
        u = fp.project_density(dm.ModelParams.scalar_toy(1.0), fp.Grid1D(16))
        assert np.allclose(u.u, 1.0, atol=1e-13)

    def test_two_cells_alpha_two(self):
        u = fp.project_density(dm.ModelParams.scalar_toy(2.0), fp.Grid1D(2))
        assert np.allclose(u.u, 1.0, rtol=1e-12)

    def test_singular_boundary_cells_dominate(self):
        u = fp.project_density(dm.ModelParams.scalar_toy(0.5), fp.Grid1D(64))
        assert u.u[0] == u.u.max()
        assert u.u[-1] == pytest.approx(u.u[0], rel=1e-10)

    def test_unit_mass_exact(self):
        u = fp.project_density(dm.ModelParams.vector(gamma=1.0, eta=0.5, mu=0.4), fp.Grid1D(97))
        assert u.mass == pytest.approx(1.0, abs=1e-15)


class TestSolve:
    def test_stationary_initial_data_stays_put(self):
        params = dm.ModelParams.scalar_toy(2.0)
        g = fp.Grid1D(128)
        op = fp.ChangCooperOperator(params, g)
        traj = fp.solve(params, op.stationary(), T=0.05, sample_every=10)
        drift = np.abs(traj.moments - traj.moments[0]).max()
        assert drift < 1e-10

    def test_relaxation_to_digamma_oracle(self):
        p0 = dm.ModelParams.scalar_toy(2.0)
        pt = dm.ModelParams.scalar_toy(3.0)
        g = fp.Grid1D(256)
        traj = fp.solve(pt, fp.project_density(p0, g), T=8.0, sample_every=100)
        want = 2 * (psi(3.0) - psi(6.0))
        assert traj.moments[-1, 0] == pytest.approx(want, abs=2e-6)

    def test_monotone_moment_decay(self):
        p0 = dm.ModelParams.scalar_toy(2.0)
        pt = dm.ModelParams.scalar_toy(1.1)
        g = fp.Grid1D(128)
        traj = fp.solve(pt, fp.project_density(p0, g), T=3.0, sample_every=50)
        m = traj.moment("lnxi")
        assert np.all(np.diff(m) < 1e-12)
        want = 2 * (psi(1.1) - psi(2.2))
        assert m[-1] == pytest.approx(want, abs=5e-3)

    def test_stop_condition_ends_early(self):
        params = dm.ModelParams.scalar_toy(2.0)
        g = fp.Grid1D(64)
        u0 = fp.project_density(dm.ModelParams.scalar_toy(1.0), g)
        traj = fp.solve(params, u0, T=50.0, sample_every=10, stop_condition=lambda t, row: t >= 0.01)
        assert traj.times[-1] < 0.1

    def test_snapshots_recorded(self):
        params = dm.ModelParams.scalar_toy(2.0)
        g = fp.Grid1D(32)
        u0 = fp.project_density(dm.ModelParams.scalar_toy(1.0), g)
        traj = fp.solve(params, u0, T=0.01, sample_every=5, record_snapshots=True)
        assert traj.snapshots is not None
        assert traj.snapshots.shape[1] == 32
        assert traj.final.mass == pytest.approx(1.0, abs=1e-12)

    def test_l1_distance_grid_mismatch(self):
        a = fp.project_density(dm.ModelParams.scalar_toy(1.0), fp.Grid1D(16))
        b = fp.project_density(dm.ModelParams.scalar_toy(1.0), fp.Grid1D(32))
        with pytest.raises(ValueError):
            fp.l1_distance(a, b)


class TestMomentMatrix:
    def test_weighted_equilibrium_moment_is_exact(self):
        # projected fitting + weighted values: the discrete equilibrium
        # moment reproduces the continuum value even for singular exponents
        params = dm.ModelParams.scalar_toy(0.3)
        g = fp.Grid1D(256)
        op = fp.ChangCooperOperator(params, g)
        a = fp.moment_matrix(params, g, dm.ObservableSet(["lnxi"]), "weighted")
        got = g.h * (a @ op.stationary().u)
        want = 2 * (psi(0.3) - psi(0.6))
        assert got[0] == pytest.approx(want, rel=1e-9)

    def test_center_weighting_biased_for_singular_exponent(self):
        params = dm.ModelParams.scalar_toy(0.3)
        g = fp.Grid1D(256)
        op = fp.ChangCooperOperator(params, g)
        a = fp.moment_matrix(params, g, dm.ObservableSet(["lnxi"]), "center")
        got = g.h * (a @ op.stationary().u)
        want = 2 * (psi(0.3) - psi(0.6))
        assert abs(got[0] - want) > 0.05

    def test_unknown_weighting(self):
        with pytest.raises(ValueError):
            fp.moment_matrix(dm.ModelParams.scalar_toy(1.0), fp.Grid1D(8), dm.OBS_A_SCALAR, "huh")
