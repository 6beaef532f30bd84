"""Fourier x Chebyshev transforms, derivatives and quadrature on [0, L] x [0, 1].

Fields are plain numpy arrays of shape ``(nx1, nx2)``: axis 0 is the periodic
x1 direction, axis 1 the wall-normal x2 direction. Physical arrays hold values
at the collocation points, spectral arrays hold complex coefficients.

Coefficient convention
----------------------
``c[k, n]`` multiplies ``exp(2j*pi*k*x1/L) * T_n(2*x2 - 1)``, with ``k`` in
numpy FFT order. Fourier coefficients are divided by ``nx1`` so that ``c[0, :]``
describes the x1-mean. Chebyshev coefficients come from the type-I cosine
transform with halved first and last terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor collocation grid: uniform in x1, Chebyshev-Gauss-Lobatto in x2."""

    nx1: int
    nx2: int
    L: float
    x1: np.ndarray = field(init=False, repr=False)
    x2: np.ndarray = field(init=False, repr=False)
    w1: np.ndarray = field(init=False, repr=False)
    w2: np.ndarray = field(init=False, repr=False)
    D1: np.ndarray = field(init=False, repr=False)
    D2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.nx2 - 1
        x1 = np.arange(self.nx1) * (self.L / self.nx1)
        x2 = 0.5 * (1.0 - np.cos(np.pi * np.arange(n + 1) / n))
        # pin the walls exactly; cos(pi) rounding is harmless but be explicit
        x2[0], x2[-1] = 0.0, 1.0
        D1 = _cheb_diff_matrix(n)
        set_ = object.__setattr__
        set_(self, "x1", x1)
        set_(self, "x2", x2)
        set_(self, "w1", np.full(self.nx1, self.L / self.nx1))
        set_(self, "w2", 0.5 * clenshaw_curtis_weights(n))
        set_(self, "D1", D1)
        set_(self, "D2", D1 @ D1)
        for name in ("x1", "x2", "w1", "w2", "D1", "D2"):
            getattr(self, name).setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx1, self.nx2)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer Fourier indices in FFT order."""
        return np.fft.fftfreq(self.nx1, 1.0 / self.nx1)

    @property
    def alpha(self) -> np.ndarray:
        """Physical x1 wavenumbers 2*pi*k/L in FFT order."""
        return 2.0 * np.pi * self.wavenumbers / self.L

    @property
    def kmax_dealiased(self) -> int:
        return self.nx1 // 3

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")


def make_grid(nx1: int, nx2: int, L: float) -> Grid:
    if int(nx1) != nx1 or nx1 % 2 or nx1 < 8:
        raise ValueError(f"nx1 must be an even integer >= 8, got {nx1}")
    if int(nx2) != nx2 or nx2 < 9:
        raise ValueError(f"nx2 must be an integer >= 9, got {nx2}")
    if not L > 0 or not np.isfinite(L):
        raise ValueError(f"L must be positive, got {L}")
    return Grid(int(nx1), int(nx2), float(L))


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the n+1 Lobatto points on [-1, 1]."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
        v -= np.cos(n * inner) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k**2 - 1)
    w[1:-1] = 2.0 * v / n
    return w


def _cheb_diff_matrix(n: int) -> np.ndarray:
    """First-derivative matrix d/dx2 on x2_i = (1 - cos(pi i/n))/2."""
    i = np.arange(n + 1)
    t = np.cos(np.pi * i / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** i
    dt = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dt + np.eye(n + 1))
    # negative-sum diagonal keeps D @ const == 0 to rounding
    D -= np.diag(D.sum(axis=1))
    # D acts on t = cos(...); x2 = (1 - t)/2 gives d/dx2 = -2 d/dt
    return -2.0 * D


def _check_shape(grid: Grid, a: np.ndarray) -> None:
    if a.shape != grid.shape:
        raise ValueError(f"array shape {a.shape} does not match grid {grid.shape}")


def cheb_forward(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Chebyshev coefficients in T_n(2 x2 - 1) from Lobatto values along ``axis``."""
    values = np.moveaxis(values, axis, -1)
    n = values.shape[-1] - 1
    b = dct(values, type=1, axis=-1) / n
    b[..., 0] *= 0.5
    b[..., -1] *= 0.5
    # points run from x2=0 upward, i.e. xi = -cos(pi i/n): T_n(-t) = (-1)^n T_n(t)
    b *= (-1.0) ** np.arange(n + 1)
    return np.moveaxis(b, -1, axis)


def cheb_backward(coeffs: np.ndarray, axis: int = -1) -> np.ndarray:
    coeffs = np.moveaxis(coeffs, axis, -1)
    n = coeffs.shape[-1] - 1
    g = coeffs * (-1.0) ** np.arange(n + 1)
    g[..., 0] *= 2.0
    g[..., -1] *= 2.0
    return np.moveaxis(0.5 * dct(g, type=1, axis=-1), -1, axis)


def to_spectral(grid: Grid, f: np.ndarray) -> np.ndarray:
    _check_shape(grid, f)
    return cheb_forward(np.fft.fft(f, axis=0) / grid.nx1, axis=1)


def is_conjugate_symmetric(c: np.ndarray, rtol: float = 1e-10, atol: float = 1e-13) -> bool:
    nx1 = c.shape[0]
    mirror = np.conj(c[(-np.arange(nx1)) % nx1])
    # atol keeps round-off differences of near-equal fields admissible
    return bool(np.abs(c - mirror).max() <= rtol * np.abs(c).max() + atol)


def to_physical(grid: Grid, c: np.ndarray, real: bool = True) -> np.ndarray:
    """Inverse of :func:`to_spectral`.

    With ``real=True`` the coefficients must be conjugate symmetric in the
    Fourier index; a ``ValueError`` is raised otherwise.
    """
    _check_shape(grid, c)
    if real and not is_conjugate_symmetric(c):
        raise ValueError("coefficients are not conjugate symmetric; not a real field")
    f = np.fft.ifft(cheb_backward(c, axis=1), axis=0) * grid.nx1
    return f.real.copy() if real else f


def ddx1(grid: Grid, c: np.ndarray) -> np.ndarray:
    _check_shape(grid, c)
    ik = 1j * grid.alpha
    ik[grid.nx1 // 2] = 0.0
    return c * ik[:, None]


def cheb_derivative_coeffs(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Coefficients of d/dxi via the backward recurrence (xi in [-1, 1])."""
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1] - 1
    b = np.zeros_like(a)
    if n >= 1:
        b[..., n - 1] = 2 * n * a[..., n]
    for m in range(n - 1, 0, -1):
        b[..., m - 1] = (b[..., m + 1] if m + 1 <= n else 0) + 2 * m * a[..., m]
    b[..., 0] *= 0.5
    return np.moveaxis(b, -1, axis)


def ddx2(grid: Grid, c: np.ndarray) -> np.ndarray:
    _check_shape(grid, c)
    # x2 = (1 + xi)/2, so d/dx2 = 2 d/dxi
    return 2.0 * cheb_derivative_coeffs(c, axis=1)


def dealias_mask(grid: Grid) -> np.ndarray:
    return np.abs(grid.wavenumbers) <= grid.kmax_dealiased


def dealias(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Zero Fourier modes with |k| > nx1/3; the Chebyshev direction is untouched."""
    _check_shape(grid, c)
    return c * dealias_mask(grid)[:, None]


def project_low_modes(grid: Grid, c: np.ndarray, nF: int, nC: int) -> np.ndarray:
    """Keep Fourier wavenumbers |k| <= nF and Chebyshev degrees < nC."""
    _check_shape(grid, c)
    if not 1 <= nF <= grid.nx1 // 2:
        raise ValueError(f"nF must lie in [1, {grid.nx1 // 2}], got {nF}")
    if not 1 <= nC <= grid.nx2:
        raise ValueError(f"nC must lie in [1, {grid.nx2}], got {nC}")
    keep_f = np.abs(grid.wavenumbers) <= nF
    keep_c = np.arange(grid.nx2) < nC
    return c * (keep_f[:, None] & keep_c[None, :])


def l2_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Integral of a*b over the domain (trapezoid x Clenshaw-Curtis)."""
    _check_shape(grid, a)
    _check_shape(grid, b)
    return float(grid.w1 @ (a * b) @ grid.w2)


def integrate(grid: Grid, f: np.ndarray) -> float:
    _check_shape(grid, f)
    return float(grid.w1 @ f @ grid.w2)


def cheb_eval_matrix(grid: Grid, x2: np.ndarray) -> np.ndarray:
    """Matrix E with E @ values = Chebyshev interpolant evaluated at ``x2``."""
    xi = 2.0 * np.asarray(x2, dtype=float) - 1.0
    T = np.polynomial.chebyshev.chebvander(xi, grid.nx2 - 1)
    return T @ cheb_forward(np.eye(grid.nx2), axis=0)


def fourier_eval_matrix(grid: Grid, x1: np.ndarray) -> np.ndarray:
    """Matrix F with F @ values = trigonometric interpolant evaluated at ``x1``.

    The Nyquist mode is split symmetrically so the interpolant stays real.
    """
    x1 = np.asarray(x1, dtype=float)
    k = grid.wavenumbers
    phase = np.exp(2j * np.pi * np.outer(x1, k) / grid.L)
    nyq = grid.nx1 // 2
    phase[:, nyq] = np.cos(2 * np.pi * nyq * x1 / grid.L)
    fwd = np.fft.fft(np.eye(grid.nx1), axis=0) / grid.nx1
    return (phase @ fwd).real


def resample(f: np.ndarray, src: Grid, dst: Grid) -> np.ndarray:
    """Spectral interpolation of a real field from ``src`` onto ``dst``.

    Fourier modes beyond the smaller grid's Nyquist limit and Chebyshev
    degrees beyond the smaller degree are dropped; missing ones are zero.
    """
    if abs(src.L - dst.L) > 1e-12 * src.L:
        raise ValueError("grids have different lengths")
    c = to_spectral(src, f)
    out = np.zeros(dst.shape, dtype=complex)
    kmax = min(src.nx1, dst.nx1) // 2 - 1
    ncheb = min(src.nx2, dst.nx2)
    ks = np.r_[0:kmax + 1, -kmax:0]
    out[ks % dst.nx1, :ncheb] = c[ks % src.nx1, :ncheb]
    return to_physical(dst, out)
