"""Dyadic Littlewood-Paley analysis on the periodic grid.

The radial cutoff is the quintic smoothstep

    chi(t) = 1                                for t <= 1
           = 1 - (6x^5 - 15x^4 + 10x^3)       for x = t - 1 in (0, 1)
           = 0                                for t >= 2

and the shells are psi_0 = chi(|k|), psi_N = chi(|k|/2^N) - chi(|k|/2^(N-1)).
On a finite lattice the last shell N_max = log2(n/2) collects every remaining
mode, psi_Nmax = 1 - chi(|k|/2^(N_max-1)), so that the diagonal corners
|k| > n/2 are not dropped and the partition sums to one exactly.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import (
    TWO_PI, Grid, check_field, curl2d, divergence, grid_of, irfft, lp_norm, rfft,
    velocity_gradient,
)


def chi(t) -> np.ndarray:
    x = np.clip(np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _shells(kmag: np.ndarray, n_max: int) -> np.ndarray:
    out = [chi(kmag)]
    for N in range(1, n_max):
        out.append(chi(kmag / 2.0**N) - chi(kmag / 2.0 ** (N - 1)))
    out.append(1.0 - chi(kmag / 2.0 ** (n_max - 1)))
    return np.array(out)


@dataclass(frozen=True, eq=False)
class LPPartition:
    grid: Grid
    n_shells: int
    shell_multipliers: np.ndarray  # (n_shells + 1, n, n//2 + 1), half lattice

    def full_lattice(self) -> np.ndarray:
        """Shell multipliers on the full (n, n) lattice."""
        kx, ky = self.grid.kvec
        return _shells(np.hypot(kx, ky), self.n_shells)

    def band(self, N: int) -> tuple[int, int]:
        return 2**N, 2 ** (N + 1)


def build_partition(grid: Grid) -> LPPartition:
    psi = _shells(grid.rkmag, grid.n_max)
    psi.setflags(write=False)
    return LPPartition(grid=grid, n_shells=grid.n_max, shell_multipliers=psi)


_partitions: dict = {}


def partition_for(n: int) -> LPPartition:
    part = _partitions.get(n)
    if part is None:
        part = _partitions.setdefault(n, build_partition(Grid.of(n)))
    return part


def _check(f, part):
    grid = grid_of(f)
    if grid != part.grid:
        raise ValueError("field and partition live on different grids")
    return grid


def lp_project(f: np.ndarray, part: LPPartition, N: int) -> np.ndarray:
    """f_N = psi_N * f for a scalar or vector field."""
    grid = _check(f, part)
    if not 0 <= N <= part.n_shells:
        raise ValueError(f"shell index {N} outside [0, {part.n_shells}]")
    return irfft(rfft(f) * part.shell_multipliers[N], grid.n)


def shell_l2sq(f: np.ndarray, part: LPPartition) -> np.ndarray:
    """||f_N||_2^2 for every shell, by Parseval."""
    grid = _check(f, part)
    F = rfft(f)
    w = grid.rweights * TWO_PI**2
    if F.ndim == 3:
        a2 = np.abs(F[0]) ** 2 + np.abs(F[1]) ** 2
    else:
        a2 = np.abs(F) ** 2
    return np.array([np.sum(w * a2 * p * p) for p in part.shell_multipliers])


def shell_lp(f: np.ndarray, part: LPPartition, p: float) -> np.ndarray:
    """||f_N||_p for every shell."""
    if p == 2:
        return np.sqrt(shell_l2sq(f, part))
    return np.array([lp_norm(lp_project(f, part, N), p) for N in range(part.n_shells + 1)])


@dataclass
class Spectrum:
    """One value per dyadic band [2^N, 2^(N+1)), tabulated at the left edge."""

    shells: np.ndarray
    k_lo: np.ndarray
    k_hi: np.ndarray
    values: np.ndarray

    def rows(self):
        return list(zip(self.shells.tolist(), self.k_lo.tolist(), self.k_hi.tolist(),
                        self.values.tolist()))


def _spectrum(values, part):
    N = np.arange(part.n_shells + 1)
    return Spectrum(shells=N, k_lo=2.0**N, k_hi=2.0 ** (N + 1), values=values)


def lp_energy_spectrum(u: np.ndarray, part: LPPartition) -> Spectrum:
    """E_LP(2^N) = 2^-N ||u_N||_2^2."""
    check_field(u)
    if u.ndim != 3:
        raise ValueError("u must be a vector field")
    umax = float(np.abs(u).max())
    if umax > 0 and float(np.abs(divergence(u)).max()) > 1e-8 * umax * part.grid.n:
        warnings.warn("lp_energy_spectrum: velocity field is not divergence-free", stacklevel=2)
    N = np.arange(part.n_shells + 1)
    return _spectrum(shell_l2sq(u, part) / 2.0**N, part)


def lp_enstrophy_spectrum(omega: np.ndarray, part: LPPartition) -> Spectrum:
    """Omega_LP(2^N) = 2^-N ||omega_N||_2^2."""
    check_field(omega)
    N = np.arange(part.n_shells + 1)
    return _spectrum(shell_l2sq(omega, part) / 2.0**N, part)


def write_spectrum_csv(path, energy: Spectrum, enstrophy: Spectrum) -> None:
    from .io import atomic_open

    with atomic_open(path, "w") as fh:
        wr = csv.writer(fh)
        wr.writerow(["N", "k_band_lo", "k_band_hi", "E_LP", "Omega_LP"])
        for (N, lo, hi, e), w in zip(energy.rows(), enstrophy.values.tolist()):
            wr.writerow([N, int(lo), int(hi), repr(float(e)), repr(float(w))])


@dataclass
class BesovNorm:
    value: float
    argmax: int
    unresolved: bool  # sup attained on the last shell
    shell_values: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return self.value


def besov_norm(f: np.ndarray, s: float, p: float, part: LPPartition) -> BesovNorm:
    """sup_N 2^(sN) ||f_N||_p over the shells available on the grid."""
    if not p >= 1:
        raise ValueError("besov_norm needs p >= 1")
    N = np.arange(part.n_shells + 1)
    vals = 2.0 ** (s * N) * shell_lp(f, part, p)
    k = int(np.argmax(vals))
    return BesovNorm(value=float(vals[k]), argmax=k, unresolved=k == part.n_shells,
                     shell_values=vals)


@dataclass
class HypothesisReport:
    times: list
    C_energy: list  # sup_{k>k0} k^3 E_LP / eta^(2/3)
    C_enstrophy: list  # sup_{k>k0} k Omega_LP / eta^(2/3)
    C_energy_mean: float
    C_enstrophy_mean: float
    k0: int
    eta: float
    eta_source: str
    nu: float | None
    gamma: list  # ||grad u||_inf per snapshot
    k_d: float | None
    comparator_k: list
    comparator: list  # time-averaged gamma^2 k^-3 (k_d/k)^6 at band edges
    mean_energy_spectrum: list

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _time_mean(times, values):
    values = np.asarray(values, dtype=float)
    if len(values) == 1:
        return float(values[0])
    return float(np.trapezoid(values, times) / (times[-1] - times[0]))


def hypothesis_diagnostics(run: Sequence[tuple[float, np.ndarray]], part: LPPartition,
                           k0: int, eta: float, nu: float | None = None,
                           eta_source: str = "supplied") -> HypothesisReport:
    """Instantaneous Kraichnan-Batchelor constants and the Constantin comparator.

    ``run`` holds (time, u) pairs.  Shells with band edge 2^N > k0 enter the
    sup.  ``k_d = nu^-1/2 eta^1/6`` is only defined for nu > 0.
    """
    if not run:
        raise ValueError("empty run")
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    if not eta > 0:
        raise ValueError("eta must be positive")
    times = np.array([t for t, _ in run], dtype=float)
    N = np.arange(part.n_shells + 1)
    edge = 2.0**N
    sel = edge > k0
    if not sel.any():
        raise ValueError(f"no shell above k0={k0}")
    norm = eta ** (2.0 / 3.0)
    Ce, Cw, gam, spectra = [], [], [], []
    for _, u in run:
        e = lp_energy_spectrum(u, part).values
        w = lp_enstrophy_spectrum(curl2d(u), part).values
        Ce.append(float(np.max((edge**3 * e)[sel]) / norm))
        Cw.append(float(np.max((edge * w)[sel]) / norm))
        D = velocity_gradient(u)
        gam.append(float(np.sqrt(np.sum(D**2, axis=(0, 1))).max()))
        spectra.append(e)
    k_d = None
    comp = []
    if nu is not None and nu > 0:
        k_d = float(nu**-0.5 * eta ** (1.0 / 6.0))
        g2 = _time_mean(times, np.square(gam))
        comp = (g2 * edge**-3.0 * (k_d / edge) ** 6).tolist()
    mean_spec = np.array(spectra)
    mean_spec = [_time_mean(times, mean_spec[:, j]) for j in range(mean_spec.shape[1])]
    return HypothesisReport(
        times=times.tolist(), C_energy=Ce, C_enstrophy=Cw,
        C_energy_mean=_time_mean(times, Ce), C_enstrophy_mean=_time_mean(times, Cw),
        k0=int(k0), eta=float(eta), eta_source=eta_source, nu=nu, gamma=gam, k_d=k_d,
        comparator_k=edge.tolist(), comparator=comp, mean_energy_spectrum=mean_spec,
    )
