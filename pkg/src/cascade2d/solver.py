"""Pseudo-spectral integrator for 2D incompressible flow in vorticity form.

    d_t w + u . grad w = nu lap w - alpha P_low w + f

The state is kept as half-lattice Fourier coefficients.  Linear terms are
handled by an integrating factor (Lawson RK4): every mode decays exactly by
exp(L t) between stages, L = -nu |k|^2 - alpha 1{0 < |k| <= kmax}.  The
advection product is formed from 2/3-truncated fields and truncated again,
which makes the semi-discrete system conserve energy and enstrophy exactly
when nu = alpha = 0.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import TWO_PI, Grid, check_field, irfft, rfft
from .mollifier import make_bump_mollifier

log = logging.getLogger(__name__)

MAX_HALVINGS = 10
CFL_NUMBER = 0.5


class NumericalError(RuntimeError):
    """Integration produced non-finite values or could not satisfy the CFL bound."""


class ResolutionWarning(UserWarning):
    """The dissipation wavenumber exceeds the dealiasing cutoff."""


@dataclass(frozen=True)
class Forcing:
    """White-in-time vorticity forcing on the band k_lo <= |k| <= k_hi.

    Over each outer step the force is the constant field
    ``amplitude * xi_j / sqrt(dt)`` with xi_j a unit-enstrophy Gaussian field
    drawn from Philox keyed by (seed, j).
    """

    k_lo: float
    k_hi: float
    amplitude: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.k_lo <= self.k_hi:
            raise ValueError("forcing band needs 0 < k_lo <= k_hi")
        if self.amplitude < 0:
            raise ValueError("forcing amplitude must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    grid_n: int
    dt: float
    t_end: float
    nu: float = 0.0
    dealias: bool = True
    hypofriction_alpha: float = 0.0
    hypofriction_kmax: int = 2
    snapshot_interval: float | None = None
    forcing: Forcing | None = None

    def __post_init__(self):
        Grid.of(self.grid_n)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.hypofriction_alpha < 0:
            raise ValueError("hypofriction_alpha must be nonnegative")
        if self.hypofriction_kmax < 0:
            raise ValueError("hypofriction_kmax must be nonnegative")
        if self.snapshot_interval is not None and not self.snapshot_interval > 0:
            raise ValueError("snapshot_interval must be positive")
        nsteps = self.t_end / self.dt
        if abs(nsteps - round(nsteps)) > 1e-9 * max(1.0, nsteps):
            raise ValueError("t_end must be an integer multiple of dt")

    @property
    def grid(self) -> Grid:
        return Grid.of(self.grid_n)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def snapshot_every(self) -> int | None:
        if self.snapshot_interval is None:
            return None
        return max(1, int(round(self.snapshot_interval / self.dt)))

    def replace(self, **kw) -> "SolverConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SolverConfig(**d)

    def as_dict(self) -> dict:
        d = asdict(self)
        return d


class _Operators:
    """Per-configuration spectral arrays."""

    def __init__(self, config: SolverConfig):
        self.config = config
        g = self.grid = config.grid
        k2 = g.rk2
        self.low = (k2 > 0) & (g.rkmag <= config.hypofriction_kmax)
        self.L = -config.nu * k2 - config.hypofriction_alpha * self.low
        self.mask = g.dealias_mask if config.dealias else np.ones_like(g.dealias_mask)
        self.w = g.rweights * TWO_PI**2  # Parseval weights
        f = config.forcing
        if f is not None:
            self.band = (g.rkmag >= f.k_lo) & (g.rkmag <= f.k_hi) & g.not_nyquist

    def nonlinear(self, W: np.ndarray) -> np.ndarray:
        g = self.grid
        n = g.n
        Wm = W * self.mask
        psi = Wm * g.inv_rk2
        ikx, iky = g.deriv
        ux = irfft(iky * psi, n)
        uy = irfft(-ikx * psi, n)
        wx = irfft(ikx * Wm, n)
        wy = irfft(iky * Wm, n)
        return -rfft(ux * wx + uy * wy) * self.mask

    def umax(self, W: np.ndarray) -> float:
        g = self.grid
        psi = W * g.inv_rk2
        ikx, iky = g.deriv
        ux = irfft(iky * psi, g.n)
        uy = irfft(-ikx * psi, g.n)
        return float(np.sqrt(ux * ux + uy * uy).max())

    def forcing(self, j: int, dt: float) -> np.ndarray | None:
        f = self.config.forcing
        if f is None or f.amplitude == 0:
            return None
        bitgen = np.random.Philox(key=np.array([f.seed, j], dtype=np.uint64))
        xi = rfft(np.random.Generator(bitgen).standard_normal((self.grid.n, self.grid.n)))
        xi = xi * self.band
        xi[0, 0] = 0.0
        norm = math.sqrt(0.5 * float(np.sum(self.w * np.abs(xi) ** 2)))
        if norm == 0:
            return None
        return (f.amplitude / math.sqrt(dt) / norm) * xi

    # -- integrals from coefficients --------------------------------------------

    def energy(self, W) -> float:
        return 0.5 * float(np.sum(self.w * np.abs(W) ** 2 * self.grid.inv_rk2))

    def enstrophy(self, W) -> float:
        return 0.5 * float(np.sum(self.w * np.abs(W) ** 2))

    def palinstrophy(self, W) -> float:
        return 0.5 * float(np.sum(self.w * np.abs(W) ** 2 * self.grid.rk2))

    def drag(self, W) -> float:
        """alpha ||u_low||_2^2."""
        a = self.config.hypofriction_alpha
        if a == 0:
            return 0.0
        return a * float(np.sum(self.w * self.low * np.abs(W) ** 2 * self.grid.inv_rk2))

    def forcing_power(self, W, F) -> float:
        """Energy input int psi f."""
        if F is None:
            return 0.0
        return float(np.sum(self.w * (np.conj(W * self.grid.inv_rk2) * F).real))


def _rk4_if(ops: _Operators, W: np.ndarray, h: float, F) -> np.ndarray:
    E = np.exp(ops.L * h)
    Eh = np.exp(ops.L * (0.5 * h))

    def N(X):
        out = ops.nonlinear(X)
        return out if F is None else out + F

    k1 = N(W)
    k2 = N(Eh * (W + 0.5 * h * k1))
    k3 = N(Eh * W + 0.5 * h * k2)
    k4 = N(E * W + h * Eh * k3)
    return E * W + (h / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)


def _advance(ops: _Operators, W: np.ndarray, dt: float, F) -> tuple[np.ndarray, int]:
    """One outer step of length dt, split into 2^k CFL-safe substeps."""
    dx = ops.grid.dx
    umax = ops.umax(W)
    k = 0
    while umax * dt / 2**k > CFL_NUMBER * dx:
        k += 1
        if k > MAX_HALVINGS:
            raise NumericalError(
                f"CFL bound unmet after {MAX_HALVINGS} halvings (|u|max = {umax:.3g})")
    nsub = 2**k
    h = dt / nsub
    for _ in range(nsub):
        W = _rk4_if(ops, W, h, F)
    if not np.all(np.isfinite(W)):
        raise NumericalError("non-finite vorticity after step")
    return W, nsub


def step(omega: np.ndarray, config: SolverConfig, step_index: int = 0) -> np.ndarray:
    """Advance a vorticity field by one outer step ``config.dt``."""
    grid = check_field(omega)
    if grid.n != config.grid_n:
        raise ValueError("field resolution differs from config.grid_n")
    ops = _Operators(config)
    W = rfft(omega)
    W[0, 0] = 0.0
    W, _ = _advance(ops, W, config.dt, ops.forcing(step_index, config.dt))
    return irfft(W, grid.n)


AUDIT_COLUMNS = ("t", "E", "Omega", "P", "dissipation", "energy_dissipation", "drag",
                 "forcing_power", "substeps")


@dataclass
class RunRecord:
    config: SolverConfig
    snapshots: list  # (time, ndarray or Path)
    audit: dict  # column -> ndarray
    removed_mean: float = 0.0
    k_d_max: float = 0.0
    resolution_ok: bool = True
    notes: list = field(default_factory=list)

    def fields(self):
        """Snapshots as (time, ndarray), loading files when needed."""
        from .io import read_snapshot

        out = []
        for t, ref in self.snapshots:
            if isinstance(ref, np.ndarray):
                out.append((t, ref))
            else:
                out.append((t, read_snapshot(ref).data))
        return out

    def write_audit_csv(self, path) -> None:
        from .io import atomic_open

        with atomic_open(path, "w") as fh:
            wr = csv.writer(fh)
            wr.writerow(AUDIT_COLUMNS)
            for row in zip(*(self.audit[c] for c in AUDIT_COLUMNS)):
                wr.writerow([repr(float(v)) for v in row])

    def enstrophy_balance(self) -> np.ndarray:
        """Per-step relative residual of dOmega/dt + nu ||grad w||^2 = 0.

        Fourth-order centered differences on the audit series; entries near
        the ends use second-order centered differences.
        """
        return balance_residual(self.audit["t"], self.audit["Omega"], self.audit["dissipation"])

    def energy_balance(self) -> np.ndarray:
        """Per-step relative residual of dE/dt + nu||w||^2 + alpha||u_low||^2 - P_f = 0."""
        a = self.audit
        sink = a["energy_dissipation"] + a["drag"] - a["forcing_power"]
        scale = a["energy_dissipation"] + a["drag"] + np.abs(a["forcing_power"])
        return balance_residual(a["t"], a["E"], sink, scale=scale)


def balance_residual(t, Q, sink, scale=None) -> np.ndarray:
    """|dQ/dt + sink| / scale at interior points of a uniform series."""
    t = np.asarray(t, float)
    Q = np.asarray(Q, float)
    sink = np.asarray(sink, float)
    if len(t) < 3:
        raise ValueError("need at least 3 audit points")
    h = t[1] - t[0]
    dQ = np.full_like(Q, np.nan)
    dQ[1:-1] = (Q[2:] - Q[:-2]) / (2 * h)
    if len(t) >= 5:
        dQ[2:-2] = (-Q[4:] + 8 * Q[3:-1] - 8 * Q[1:-3] + Q[:-4]) / (12 * h)
    scale = np.abs(sink) if scale is None else np.asarray(scale, float)
    res = np.abs(dQ + sink) / np.maximum(scale, 1e-300)
    return res[1:-1]


def dissipation_wavenumber(nu: float, eta: float) -> float:
    """k_d = nu^-1/2 eta^1/6 (eta per unit area)."""
    if nu <= 0 or eta <= 0:
        return 0.0
    return nu**-0.5 * eta ** (1.0 / 6.0)


def run(config: SolverConfig, omega0: np.ndarray, out_dir: str | os.PathLike | None = None,
        keep_in_memory: bool | None = None) -> RunRecord:
    """Integrate ``omega0`` to ``config.t_end``.

    Snapshots (including t = 0 and t_end) are taken every
    ``config.snapshot_interval``; without an interval only the endpoints are
    kept.  With ``out_dir`` they are written as binary snapshot files and the
    record holds paths.
    """
    grid = check_field(omega0)
    if grid.n != config.grid_n:
        raise ValueError("initial field resolution differs from config.grid_n")
    ops = _Operators(config)
    W = rfft(omega0)
    removed = float(W[0, 0].real)
    W[0, 0] = 0.0
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    if keep_in_memory is None:
        keep_in_memory = out_dir is None

    snaps = []

    def snapshot(j, W):
        t = j * config.dt
        w = irfft(W, grid.n)
        if out_dir is not None:
            from .io import write_snapshot

            path = out_dir / f"omega_{j:08d}.bin"
            write_snapshot(path, w, time=t, viscosity=config.nu)
            snaps.append((t, w if keep_in_memory else path))
        else:
            snaps.append((t, w))

    cols = {c: [] for c in AUDIT_COLUMNS}
    nu = config.nu
    area = TWO_PI**2
    k_d_max = 0.0

    def audit(j, W, F, nsub):
        nonlocal k_d_max
        P = ops.palinstrophy(W)
        Om = ops.enstrophy(W)
        cols["t"].append(j * config.dt)
        cols["E"].append(ops.energy(W))
        cols["Omega"].append(Om)
        cols["P"].append(P)
        cols["dissipation"].append(2 * nu * P)
        cols["energy_dissipation"].append(2 * nu * Om)
        cols["drag"].append(ops.drag(W))
        cols["forcing_power"].append(ops.forcing_power(W, F))
        cols["substeps"].append(nsub)
        k_d_max = max(k_d_max, dissipation_wavenumber(nu, 2 * nu * P / area))

    every = config.snapshot_every
    snapshot(0, W)
    F = ops.forcing(0, config.dt)
    audit(0, W, F, 0)
    for j in range(config.n_steps):
        W, nsub = _advance(ops, W, config.dt, F)
        F = ops.forcing(j + 1, config.dt)
        audit(j + 1, W, F, nsub)
        if every is not None and (j + 1) % every == 0 and j + 1 != config.n_steps:
            snapshot(j + 1, W)
    if config.n_steps > 0:
        snapshot(config.n_steps, W)

    ok = nu == 0 or k_d_max <= grid.n / 3
    rec = RunRecord(config=config, snapshots=snaps,
                    audit={c: np.asarray(v, dtype=float) for c, v in cols.items()},
                    removed_mean=removed, k_d_max=k_d_max, resolution_ok=ok)
    if not ok:
        msg = f"dissipation wavenumber {k_d_max:.1f} exceeds n/3 = {grid.n / 3:.1f}"
        rec.notes.append(msg)
        warnings.warn(msg, ResolutionWarning, stacklevel=2)
    return rec


# -- viscosity sweeps ---------------------------------------------------------------

@dataclass
class SweepEntry:
    nu: float
    dissipation_mean: float  # time average of int nu h''(w)|grad w|^2
    flux_curve: dict  # FluxCurve.as_dict() at the final time
    flux_at_min_eps: float
    final_enstrophy: float
    k_d_max: float
    resolution_ok: bool


def _sweep_one(args):
    from .flux import flux_curve, h_function, integral, viscous_dissipation

    config, omega0, eps_values, R, h_name = args
    h = h_function(h_name)
    m = make_bump_mollifier(R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        rec = run(config, omega0)
    snaps = rec.fields()
    times = np.array([t for t, _ in snaps])
    diss = np.array([integral(viscous_dissipation(w, h, config.nu)) for _, w in snaps])
    mean = float(np.trapezoid(diss, times) / (times[-1] - times[0])) if len(times) > 1 else float(diss[0])
    curve = flux_curve(snaps[-1][1], eps_values, m, h)
    return SweepEntry(nu=config.nu, dissipation_mean=mean, flux_curve=curve.as_dict(),
                      flux_at_min_eps=float(curve.flux_integral[0]),
                      final_enstrophy=float(rec.audit["Omega"][-1]), k_d_max=rec.k_d_max,
                      resolution_ok=rec.resolution_ok)


@dataclass
class SweepReport:
    entries: list

    def table(self) -> list:
        return [{"nu": e.nu, "dissipation": e.dissipation_mean, "flux": e.flux_at_min_eps,
                 "resolution_ok": e.resolution_ok} for e in self.entries]

    def as_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries], "table": self.table()}


def nu_sweep(base_config: SolverConfig, omega0: np.ndarray, nu_list: Sequence[float],
             eps_values: Sequence[float], support_radius: float | None = None,
             h_name: str = "enstrophy", workers: int | None = None) -> SweepReport:
    """Run one simulation per viscosity from the same initial field and tabulate
    the time-averaged viscous dissipation of h next to the final-time flux curve.

    Runs are independent and may execute in a process pool; results are
    merged in ``nu_list`` order.
    """
    nu_list = [float(v) for v in nu_list]
    if not nu_list:
        raise ValueError("empty viscosity list")
    if any(b > a for a, b in zip(nu_list, nu_list[1:])):
        raise ValueError("nu_list must be decreasing")
    if base_config.snapshot_interval is None:
        base_config = base_config.replace(snapshot_interval=base_config.t_end / 10 or base_config.dt)
    R = support_radius if support_radius is not None else make_bump_mollifier().support_radius
    jobs = [(base_config.replace(nu=nu), omega0, list(eps_values), R, h_name) for nu in nu_list]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        entries = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            entries = list(ex.map(_sweep_one, jobs))
    return SweepReport(entries=entries)
