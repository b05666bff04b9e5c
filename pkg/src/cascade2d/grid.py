"""Periodic field algebra on the square torus [0, 2pi)^2.

Fields are plain numpy arrays: a scalar field has shape ``(n, n)`` with
``f[i, j] = f(x_i, y_j)``, a vector field has shape ``(2, n, n)`` with the
x-component first.  The grid is fully determined by ``n`` because the domain
side is fixed to 2pi.

Fourier coefficients are normalized so that the zero mode equals the mean of
the field: ``fhat = fft2(f) / n**2``.  Internally the real-to-complex
transform is used; ``fft_forward`` exposes the full Hermitian lattice.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

log = logging.getLogger(__name__)

#: Thread count handed to scipy.fft. pocketfft splits work over independent
#: 1D transforms, so results do not depend on this value.
FFT_WORKERS = int(os.environ.get("CASCADE2D_FFT_WORKERS", os.cpu_count() or 1))

TWO_PI = 2.0 * np.pi


class FieldError(ValueError):
    """Raised for malformed field data (shape, resolution, non-finite samples)."""


@dataclass(frozen=True)
class Grid:
    """Square periodic grid with ``n`` points per axis on [0, 2pi)^2."""

    n: int

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise FieldError(f"grid size must be a power of two >= 8, got {n!r}")

    @classmethod
    def of(cls, n: int) -> "Grid":
        return _grid_cache(int(n))

    @property
    def length(self) -> float:
        return TWO_PI

    @property
    def dx(self) -> float:
        return TWO_PI / self.n

    @property
    def n_max(self) -> int:
        """Index of the last dyadic shell representable on this grid."""
        return int(np.log2(self.n // 2))

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, lattice {-n/2+1, ..., n/2}."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k

    @cached_property
    def kvec(self) -> tuple[np.ndarray, np.ndarray]:
        """Full-lattice wavenumber arrays (kx, ky), each of shape (n, n)."""
        return np.meshgrid(self.k, self.k, indexing="ij")

    @cached_property
    def rk(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers on the half lattice used by the real transform."""
        ky = np.arange(self.n // 2 + 1, dtype=float)
        return np.meshgrid(self.k, ky, indexing="ij")

    @cached_property
    def rk2(self) -> np.ndarray:
        kx, ky = self.rk
        return kx**2 + ky**2

    @cached_property
    def rkmag(self) -> np.ndarray:
        return np.sqrt(self.rk2)

    @cached_property
    def inv_rk2(self) -> np.ndarray:
        k2 = self.rk2.copy()
        k2[0, 0] = 1.0
        out = 1.0 / k2
        out[0, 0] = 0.0
        return out

    @cached_property
    def deriv(self) -> tuple[np.ndarray, np.ndarray]:
        """Spectral multipliers i*kx, i*ky with the Nyquist modes removed."""
        kx, ky = self.rk
        keep = self.not_nyquist
        return 1j * kx * keep, 1j * ky * keep

    @cached_property
    def not_nyquist(self) -> np.ndarray:
        kx, ky = self.rk
        h = self.n // 2
        return (np.abs(kx) != h) & (ky != h)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with |k_i| < n/3 on both axes."""
        kx, ky = self.rk
        cut = self.n / 3.0
        return (np.abs(kx) < cut) & (ky < cut)

    @cached_property
    def rweights(self) -> np.ndarray:
        """Multiplicity of each half-lattice mode in a full-lattice sum."""
        w = np.full((self.n, self.n // 2 + 1), 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    def spectral_l2sq(self, F: np.ndarray) -> float:
        """||f||_2^2 over the torus from half-lattice coefficients (Parseval)."""
        return float(TWO_PI**2 * np.sum(self.rweights * np.abs(F) ** 2))


@lru_cache(maxsize=None)
def _grid_cache(n: int) -> Grid:
    return Grid(n)


def grid_of(f: np.ndarray) -> Grid:
    """Grid of a scalar ``(n, n)`` or vector ``(2, n, n)`` field."""
    f = np.asarray(f)
    if f.ndim == 2 and f.shape[0] == f.shape[1]:
        return Grid.of(f.shape[0])
    if f.ndim == 3 and f.shape[0] == 2 and f.shape[1] == f.shape[2]:
        return Grid.of(f.shape[1])
    raise FieldError(f"expected (n, n) or (2, n, n) field, got shape {f.shape}")


def check_field(f: np.ndarray) -> Grid:
    grid = grid_of(f)
    if not np.all(np.isfinite(f)):
        raise FieldError("field contains non-finite samples")
    return grid


# -- transforms -------------------------------------------------------------

def rfft(f: np.ndarray) -> np.ndarray:
    """Half-lattice coefficients, normalized so that F[0, 0] = mean(f)."""
    n = f.shape[-1]
    return sfft.rfft2(f, workers=FFT_WORKERS) / (n * n)


def irfft(F: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(F * (n * n), s=(n, n), workers=FFT_WORKERS)


def fft_forward(f: np.ndarray) -> np.ndarray:
    """Full-lattice Fourier coefficients of a real field, ``fhat(0) = mean(f)``."""
    check_field(f)
    n = f.shape[-1]
    return sfft.fft2(f, workers=FFT_WORKERS) / (n * n)


def fft_inverse(F: np.ndarray) -> np.ndarray:
    """Real field from full-lattice coefficients (Hermitian part only)."""
    F = np.asarray(F)
    Grid.of(F.shape[-1])
    if not np.all(np.isfinite(F)):
        raise FieldError("spectrum contains non-finite coefficients")
    n = F.shape[-1]
    return sfft.ifft2(F * (n * n), workers=FFT_WORKERS).real


def dealias(F: np.ndarray, grid: Grid) -> np.ndarray:
    return F * grid.dealias_mask


def product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise product with 2/3-rule truncation of inputs and result."""
    grid = grid_of(a)
    n = grid.n
    m = grid.dealias_mask
    a_ = irfft(rfft(a) * m, n)
    b_ = irfft(rfft(b) * m, n)
    return irfft(rfft(a_ * b_) * m, n)


def truncate(f: np.ndarray) -> np.ndarray:
    """Project a field (scalar or vector) onto the 2/3-rule modes."""
    grid = grid_of(f)
    return irfft(rfft(f) * grid.dealias_mask, grid.n)


# -- differential operators -------------------------------------------------

def _d(F: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    return irfft(grid.deriv[axis] * F, grid.n)


def gradient(f: np.ndarray) -> np.ndarray:
    grid = grid_of(f)
    F = rfft(f)
    return np.stack([_d(F, grid, 0), _d(F, grid, 1)])


def perp_gradient(f: np.ndarray) -> np.ndarray:
    """Skew gradient ``(d_y f, -d_x f)``, i.e. components eps_ij d_j f."""
    grid = grid_of(f)
    F = rfft(f)
    return np.stack([_d(F, grid, 1), -_d(F, grid, 0)])


def divergence(v: np.ndarray) -> np.ndarray:
    grid = grid_of(v)
    V = rfft(v)
    ikx, iky = grid.deriv
    return irfft(ikx * V[0] + iky * V[1], grid.n)


def curl2d(v: np.ndarray) -> np.ndarray:
    """Scalar curl ``d_x v_y - d_y v_x``."""
    grid = grid_of(v)
    V = rfft(v)
    ikx, iky = grid.deriv
    return irfft(ikx * V[1] - iky * V[0], grid.n)


def laplacian(f: np.ndarray) -> np.ndarray:
    grid = grid_of(f)
    return irfft(-grid.rk2 * grid.not_nyquist * rfft(f), grid.n)


def velocity_gradient(u: np.ndarray) -> np.ndarray:
    """Tensor ``D[i, j] = d u_i / d x_j`` with shape (2, 2, n, n)."""
    grid = grid_of(u)
    U = rfft(u)
    return np.array([[_d(U[i], grid, j) for j in range(2)] for i in range(2)])


def biot_savart(omega: np.ndarray, diagnostics: dict | None = None) -> np.ndarray:
    """Velocity ``u = K * omega`` on the torus.

    ``u = grad_perp psi`` with ``-lap psi = omega``, so that
    ``curl2d(u) == omega``.  A nonzero mean of ``omega`` cannot be inverted on
    the torus; it is projected out and reported in ``diagnostics``.
    """
    grid = check_field(omega)
    W = rfft(omega)
    mean = float(W[0, 0].real)
    if diagnostics is not None:
        diagnostics["removed_mean"] = mean
    if abs(mean) > 1e-12 * max(1.0, float(np.abs(omega).max())):
        log.debug("biot_savart: removing vorticity mean %.3e", mean)
    return velocity_from_spectrum(W, grid)


def velocity_from_spectrum(W: np.ndarray, grid: Grid) -> np.ndarray:
    psi = W * grid.inv_rk2
    ikx, iky = grid.deriv
    return np.stack([irfft(iky * psi, grid.n), irfft(-ikx * psi, grid.n)])


def stream_function(omega: np.ndarray) -> np.ndarray:
    grid = grid_of(omega)
    return irfft(rfft(omega) * grid.inv_rk2, grid.n)


# -- norms --------------------------------------------------------------------

def lp_norm(f: np.ndarray, p: float) -> float:
    """Discrete L^p(T^2) norm, ``(sum |f|^p dx^2)^(1/p)``; p may be ``inf``.

    Vector fields use the pointwise Euclidean magnitude.
    """
    if not p >= 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    f = np.asarray(f, dtype=float)
    grid = grid_of(f)
    a = np.sqrt(np.sum(f**2, axis=0)) if f.ndim == 3 else np.abs(f)
    if np.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum() * grid.dx**2)
    if p == 2:
        return float(np.sqrt(np.sum(a * a) * grid.dx**2))
    return float((np.sum(a**p) * grid.dx**2) ** (1.0 / p))


def grad_l2(f: np.ndarray) -> float:
    """||grad f||_2, summed over components for vector fields."""
    grid = grid_of(f)
    kmag = np.sqrt(grid.rk2) * grid.not_nyquist
    return float(np.sqrt(grid.spectral_l2sq(kmag * rfft(f))))


def w12_norm(u: np.ndarray) -> float:
    """Sobolev norm ``(||u||_2^2 + ||grad u||_2^2)^(1/2)``."""
    return float(np.hypot(lp_norm(u, 2), grad_l2(u)))


def shift(f: np.ndarray, ell) -> np.ndarray:
    """``f(x + ell)`` by spectral phase shift; ell need not be a lattice vector."""
    grid = grid_of(f)
    kx, ky = grid.rk
    phase = np.exp(1j * (kx * ell[0] + ky * ell[1]))
    return irfft(rfft(f) * phase, grid.n)
