"""Streamfunction solve by per-mode matrix diagonalization."""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benard_da.elliptic import build_poisson, solve_streamfunction, velocity, velocity_from_vorticity
from benard_da.spectral import ddx1, ddx2, make_grid, to_physical, to_spectral

from conftest import dense_poisson, smooth_random_field


class TestBuild:
    def test_spectrum_negative_and_sorted(self, ps_mid):
        assert np.all(ps_mid.eigvals < 0)
        assert np.all(np.diff(ps_mid.eigvals) >= 0)

    def test_lowest_eigenvalue_near_dirichlet_mode(self, ps_mid):
        # -pi^2 is the first Dirichlet eigenvalue of d2/dx2 on [0, 1]
        assert ps_mid.eigvals[-1] == pytest.approx(-np.pi**2, rel=1e-12)

    def test_immutable(self, ps_mid):
        with pytest.raises(ValueError):
            ps_mid.V[0, 0] = 1.0


class TestSolve:
    def test_manufactured_solution(self):
        g = make_grid(64, 33, 2.0)
        t0 = time.perf_counter()
        ps = build_poisson(g)
        x1, x2 = g.mesh()
        a = 2 * np.pi / g.L
        psi_star = np.sin(a * x1) * np.sin(np.pi * x2)
        omega = -(a**2 + np.pi**2) * psi_star
        psi = to_physical(g, solve_streamfunction(ps, to_spectral(g, omega)))
        assert np.abs(psi - psi_star).max() < 1e-10
        assert time.perf_counter() - t0 < 5.0

    def test_matches_dense_oracle(self, rng):
        g = make_grid(16, 9, 2.0)
        omega = rng.standard_normal(g.shape)
        got = to_physical(g, solve_streamfunction(build_poisson(g), to_spectral(g, omega)))
        np.testing.assert_allclose(got, dense_poisson(g, omega), atol=1e-11)

    def test_wall_values_ignored(self, grid_mid, ps_mid, rng):
        omega = smooth_random_field(grid_mid, rng)
        other = omega.copy()
        other[:, [0, -1]] += rng.standard_normal((grid_mid.nx1, 2))
        a = solve_streamfunction(ps_mid, to_spectral(grid_mid, omega))
        b = solve_streamfunction(ps_mid, to_spectral(grid_mid, other))
        np.testing.assert_allclose(a, b, atol=1e-13)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_interior_residual_and_dirichlet(self, seed):
        g = make_grid(32, 17, 2.0)
        ps = build_poisson(g)
        omega = smooth_random_field(g, np.random.default_rng(seed), kmax=3, mmax=4)
        psi_c = solve_streamfunction(ps, to_spectral(g, omega))
        psi = to_physical(g, psi_c)
        assert np.abs(psi[:, [0, -1]]).max() < 1e-13
        lap = to_physical(g, ddx1(g, ddx1(g, psi_c)) + ddx2(g, ddx2(g, psi_c)))
        assert np.abs(lap - omega)[:, 1:-1].max() < 1e-9 * max(1.0, np.abs(omega).max())

    def test_shape_checked(self, ps_mid):
        with pytest.raises(ValueError):
            solve_streamfunction(ps_mid, np.zeros((8, 9), complex))


class TestVelocity:
    def test_fast_path_matches_spectral(self, grid_mid, ps_mid, rng):
        omega = smooth_random_field(grid_mid, rng)
        u_ref = velocity(grid_mid, solve_streamfunction(ps_mid, to_spectral(grid_mid, omega)))
        u_fast = velocity_from_vorticity(ps_mid, omega)
        for a, b in zip(u_ref, u_fast):
            np.testing.assert_allclose(b, a, atol=1e-11)

    def test_divergence_free_and_impermeable(self, grid_mid, ps_mid, rng):
        omega = smooth_random_field(grid_mid, rng)
        u1, u2 = velocity_from_vorticity(ps_mid, omega)
        div = (to_physical(grid_mid, ddx1(grid_mid, to_spectral(grid_mid, u1)))
               + to_physical(grid_mid, ddx2(grid_mid, to_spectral(grid_mid, u2))))
        assert np.abs(div).max() < 1e-9 * np.abs(u1).max()
        assert np.abs(u2[:, [0, -1]]).max() < 1e-12
