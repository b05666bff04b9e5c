"""Compactly supported mollifiers and coarse-graining operations.

A mollifier is the radial bump ``phi(r) = A exp(-1 / (1 - (r/R)^2))`` for
``r < R``, normalized to unit integral over the plane.  Its scaled version is
``phi_eps(x) = eps^-2 phi(x / eps)``, supported in the disk of radius
``eps * R``.

Filtering samples ``phi_eps`` on the lattice of offsets, renormalizes the
samples to sum to one and multiplies in Fourier space.  The discrete filter
is therefore an exact periodic convolution with nonnegative weights, which
keeps means and constants exactly.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid, grid_of, irfft, product, rfft, shift

#: Largest admissible support radius (see ``make_bump_mollifier``).
MAX_SUPPORT_RADIUS = np.pi
#: Default support radius used by the experiments and the CLI.
DEFAULT_SUPPORT_RADIUS = np.pi / 4

_GL_NODES = 400


class ResolutionError(ValueError):
    """Filter scale is outside the range the grid can represent."""


def _bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _bump_prime(t: np.ndarray) -> np.ndarray:
    """d/dt exp(-1/(1-t^2))."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    q = 1.0 - ti**2
    out[inside] = np.exp(-1.0 / q) * (-2.0 * ti / q**2)
    return out


@dataclass(eq=False)
class Mollifier:
    """Radial bump mollifier; build with :func:`make_bump_mollifier`."""

    support_radius: float
    amplitude: float
    _spectra: dict = field(default_factory=dict, init=False, repr=False)
    _weights: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def profile(self, r) -> np.ndarray:
        """phi(r) at unit scale."""
        return self.amplitude * _bump(np.asarray(r, dtype=float) / self.support_radius)

    def profile_derivative(self, r) -> np.ndarray:
        R = self.support_radius
        return self.amplitude * _bump_prime(np.asarray(r, dtype=float) / R) / R

    def integral(self) -> float:
        """int_{R^2} phi, by Gauss-Legendre in the radial variable."""
        t, w = _gauss_legendre()
        R = self.support_radius
        return float(np.sum(w * self.profile(R * t) * 2 * np.pi * R * t) * R)

    def grad_l1(self) -> float:
        """||grad phi||_{L^1(R^2)} at unit scale.

        phi is radially decreasing, so integrating by parts in r gives
        ``2 pi int_0^R phi(r) dr``.
        """
        t, w = _gauss_legendre()
        R = self.support_radius
        return float(2 * np.pi * R * np.sum(w * self.profile(R * t)))

    def first_moment(self) -> float:
        """int |x| phi(x) dx."""
        t, w = _gauss_legendre()
        R = self.support_radius
        return float(2 * np.pi * R**3 * np.sum(w * t * t * self.profile(R * t)))

    # -- lattice objects ----------------------------------------------------

    def check_scale(self, grid: Grid, eps: float) -> None:
        if not eps > 0:
            raise ResolutionError(f"eps must be positive, got {eps}")
        radius = eps * self.support_radius
        if radius < 2.0 * grid.dx * (1 - 1e-12):
            raise ResolutionError(
                f"filter radius eps*R = {radius:.4g} is below the resolvability floor "
                f"2*dx = {2 * grid.dx:.4g}")
        if radius > np.pi * (1 + 1e-12):
            raise ResolutionError(f"filter radius eps*R = {radius:.4g} exceeds pi")

    def offsets(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Signed lattice offsets (minimum image) in FFT index order."""
        d = np.fft.fftfreq(grid.n, 1.0 / grid.n) * grid.dx
        return np.meshgrid(d, d, indexing="ij")

    def weights(self, grid: Grid, eps: float) -> np.ndarray:
        """Normalized lattice samples of phi_eps, indexed by offset."""
        key = (grid.n, float(eps))
        w = self._weights.get(key)
        if w is None:
            self.check_scale(grid, eps)
            X, Y = self.offsets(grid)
            w = self.profile(np.hypot(X, Y) / eps)
            w /= w.sum()
            w.setflags(write=False)
            with self._lock:
                w = self._weights.setdefault(key, w)
        return w

    def multiplier(self, grid: Grid, eps: float) -> np.ndarray:
        """Real Fourier multiplier of the discrete filter on the half lattice."""
        key = (grid.n, float(eps))
        m = self._spectra.get(key)
        if m is None:
            w = self.weights(grid, eps)
            m = np.fft.rfft2(w).real
            m.setflags(write=False)
            with self._lock:
                m = self._spectra.setdefault(key, m)
        return m

    def gradient_weights(self, grid: Grid, eps: float):
        """Analytic grad phi_eps times dx^2 at lattice offsets inside the support.

        Returns integer offsets ``(i, j)`` and weights ``(gx, gy)``.
        """
        self.check_scale(grid, eps)
        X, Y = self.offsets(grid)
        r = np.hypot(X, Y)
        inside = (r > 0) & (r < eps * self.support_radius)
        dphi = self.profile_derivative(r[inside] / eps) / eps**3 * grid.dx**2
        gx = dphi * X[inside] / r[inside]
        gy = dphi * Y[inside] / r[inside]
        I, J = np.nonzero(inside)
        I = np.where(I > grid.n // 2, I - grid.n, I)
        J = np.where(J > grid.n // 2, J - grid.n, J)
        return I, J, gx, gy

    def to_csv(self, path, n_points: int = 201) -> None:
        r = np.linspace(0.0, self.support_radius, n_points)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "phi"])
            for ri, pi in zip(r, self.profile(r)):
                wr.writerow([repr(float(ri)), repr(float(pi))])


def _gauss_legendre():
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    return 0.5 * (x + 1.0), 0.5 * w


def make_bump_mollifier(support_radius: float = DEFAULT_SUPPORT_RADIUS) -> Mollifier:
    """Smooth, even, nonnegative bump with unit integral and support radius R."""
    R = float(support_radius)
    if not 0.0 < R <= MAX_SUPPORT_RADIUS:
        raise ValueError(f"support_radius must lie in (0, pi], got {support_radius}")
    t, w = _gauss_legendre()
    mass = 2 * np.pi * R * R * np.sum(w * t * _bump(t))
    return Mollifier(support_radius=R, amplitude=float(1.0 / mass))


# -- operations ---------------------------------------------------------------

def filter(f: np.ndarray, m: Mollifier, eps: float) -> np.ndarray:  # noqa: A001
    """phi_eps * f for a scalar or vector field."""
    grid = grid_of(f)
    return irfft(rfft(f) * m.multiplier(grid, eps), grid.n)


def commutator_tau(f: np.ndarray, g: np.ndarray, m: Mollifier, eps: float) -> np.ndarray:
    """tau_eps(f, g) = (f g)_eps - f_eps g_eps; f may be a vector field."""
    gf, gg = grid_of(f), grid_of(g)
    if gf != gg:
        raise ValueError("fields live on different grids")
    if f.ndim == 3 and g.ndim == 2:
        return np.stack([commutator_tau(c, g, m, eps) for c in f])
    if g.ndim == 3 and f.ndim == 2:
        return np.stack([commutator_tau(f, c, m, eps) for c in g])
    return filter(product(f, g), m, eps) - product(filter(f, m, eps), filter(g, m, eps))


def subgrid_stress(u: np.ndarray, omega: np.ndarray, m: Mollifier, eps: float) -> np.ndarray:
    """sigma_eps = (u omega)_eps - u_eps omega_eps."""
    if u.ndim != 3:
        raise ValueError("u must be a vector field of shape (2, n, n)")
    return commutator_tau(u, omega, m, eps)


def increment(f: np.ndarray, ell) -> np.ndarray:
    """Delta_ell f(x) = f(x + ell) - f(x)."""
    if ell[0] == 0 and ell[1] == 0:
        return np.zeros_like(f)
    return shift(f, ell) - f
