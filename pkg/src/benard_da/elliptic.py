"""Streamfunction solve for Delta psi = omega, psi = 0 on both walls.

The x1 Fourier transform decouples the problem into one Helmholtz problem per
wavenumber, ``(D2 - alpha_k**2) psi_k = omega_k`` on the interior Chebyshev
points. The interior block of D2 is diagonalized once, so a solve costs two
dense products per mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, cheb_backward, cheb_forward, ddx1, ddx2, to_physical


@dataclass(frozen=True, eq=False)
class PoissonSolver:
    grid: Grid
    eigvals: np.ndarray  # eigenvalues of the Dirichlet D2 block, all negative
    V: np.ndarray
    Vinv: np.ndarray


def build_poisson(grid: Grid) -> PoissonSolver:
    if grid.nx2 < 5:
        raise ValueError("grid too small for the Chebyshev Dirichlet solver")
    A = grid.D2[1:-1, 1:-1]
    lam, V = np.linalg.eig(A)
    if np.abs(lam.imag).max() > 1e-8 * np.abs(lam.real).max():
        raise RuntimeError("Dirichlet second-derivative block has complex spectrum")
    lam = lam.real
    V = V.real
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    Vinv = np.linalg.inv(V)
    for a in (lam, V, Vinv):
        a.setflags(write=False)
    return PoissonSolver(grid, lam, V, Vinv)


def solve_mixed(ps: PoissonSolver, omega_hat: np.ndarray, alpha2: np.ndarray) -> np.ndarray:
    """Solve in Fourier(x1) x collocation(x2) space.

    ``omega_hat[..., k, i]``: coefficient of Fourier mode k at point x2_i.
    ``alpha2`` holds the squared wavenumbers for axis -2. Wall values of
    ``omega_hat`` are ignored; the returned psi is zero on both walls.
    """
    rhs = omega_hat[..., 1:-1]
    modal = rhs @ ps.Vinv.T
    modal = modal / (ps.eigvals - alpha2[:, None])
    psi = np.zeros_like(omega_hat)
    psi[..., 1:-1] = modal @ ps.V.T
    return psi


def solve_streamfunction(ps: PoissonSolver, omega: np.ndarray) -> np.ndarray:
    """Streamfunction coefficients from vorticity coefficients (spectral layout)."""
    grid = ps.grid
    if omega.shape != grid.shape:
        raise ValueError("vorticity does not live on the solver's grid")
    mixed = cheb_backward(omega, axis=1)
    psi_mixed = solve_mixed(ps, mixed, grid.alpha**2)
    return cheb_forward(psi_mixed, axis=1)


def velocity(grid: Grid, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Physical velocity (u1, u2) = (-dpsi/dx2, dpsi/dx1) from psi coefficients."""
    u1 = -to_physical(grid, ddx2(grid, psi))
    u2 = to_physical(grid, ddx1(grid, psi))
    return u1, u2


def velocity_from_vorticity(ps: PoissonSolver, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Physical velocity from physical vorticity (wall rows of omega are ignored)."""
    grid = ps.grid
    if omega.shape != grid.shape:
        raise ValueError("vorticity does not live on the solver's grid")
    wh = np.fft.rfft(omega, axis=0) / grid.nx1
    nk = wh.shape[0]
    alpha = 2 * np.pi * np.arange(nk) / grid.L
    psi = solve_mixed(ps, wh, alpha**2)
    ik = 1j * alpha
    if grid.nx1 % 2 == 0:
        ik[-1] = 0.0
    u1 = -np.fft.irfft(psi @ grid.D1.T, n=grid.nx1, axis=0) * grid.nx1
    u2 = np.fft.irfft(ik[:, None] * psi, n=grid.nx1, axis=0) * grid.nx1
    return u1, u2
