"""Seeded generators of initial vorticity fields.

Random fields prescribe the L^2 mass of every Littlewood-Paley shell.  Inside
each dyadic annulus M (2^M <= |k| < 2^(M+1), the last annulus also taking the
corners beyond n/2) coefficient magnitudes follow the power law
|k|^(-s-1), scaled by one amplitude per annulus; for steeply falling masses
the exponent is lowered in half-integer steps until every amplitude is
nonnegative.  Because shell N only sees
annuli N-1 and N, the map from annulus amplitudes to shell masses is lower
bidiagonal and is inverted exactly by forward substitution; the analyzer then
recovers the prescribed masses to round-off.

Phases come from the Philox4x64 counter-based generator keyed by
``(seed, M)`` for annulus M.  Each annulus draws one uniform number per mode
of the canonical half plane (ky > 0, or ky = 0 and kx > 0), visited in
row-major order of (kx, ky) with kx, ky in -n/2+1 .. n/2-1; the phase is
2 pi times that number and the mirrored mode gets the conjugate.  Modes on
the Nyquist lines and k = 0 stay empty, so the field is exactly real and
zero-mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import TWO_PI, Grid, fft_inverse
from .littlewood_paley import partition_for
from .mollifier import DEFAULT_SUPPORT_RADIUS, filter, make_bump_mollifier

KINDS = ("single_mode", "taylor_green", "vortex_patch", "besov_random", "kraichnan")

#: Beyond this |s| the shell masses span more than ~2^(4 N_max) and the
#: top shells drown in round-off.
MAX_ABS_S = 4.0

DEFAULTS = {
    "single_mode": {"kx": 1, "ky": 0, "amplitude": 1.0},
    "taylor_green": {"amplitude": 1.0},
    "vortex_patch": {"radius": 1.0, "amplitude": 1.0, "cx": float(np.pi), "cy": float(np.pi)},
    "besov_random": {"s": 0.0, "m": 1.0, "target": "vorticity"},
    "kraichnan": {"C": 1.0, "k0": 1.0, "log_correction": False},
}


@dataclass
class GenSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}


def generate(spec: GenSpec, grid: Grid) -> np.ndarray:
    """Vorticity field for ``spec`` on ``grid``."""
    p = spec.resolved()
    x, y = grid.mesh
    if spec.kind == "single_mode":
        kx, ky = int(p["kx"]), int(p["ky"])
        if (kx, ky) == (0, 0) or max(abs(kx), abs(ky)) >= grid.n // 2:
            raise ValueError(f"mode ({kx}, {ky}) is not representable")
        return float(p["amplitude"]) * np.sin(kx * x + ky * y)
    if spec.kind == "taylor_green":
        return 2.0 * float(p["amplitude"]) * np.cos(x) * np.cos(y)
    if spec.kind == "vortex_patch":
        return _vortex_patch(grid, float(p["radius"]), float(p["amplitude"]),
                             float(p["cx"]), float(p["cy"]))
    if spec.kind == "besov_random":
        s = float(p["s"])
        if abs(s) > MAX_ABS_S:
            raise ValueError(f"|s| = {abs(s)} > {MAX_ABS_S}: dynamic range not resolvable")
        N = np.arange(grid.n_max + 1)
        masses = float(p["m"]) * 2.0 ** (-s * N)
        return shell_field(grid, masses, spec.seed, s=s, target=p["target"])
    # kraichnan: Omega_LP(2^N) = C 2^-N, i.e. ||omega_N||^2 = C
    N = np.arange(grid.n_max + 1)
    mass2 = np.full(N.shape, float(p["C"]))
    if _truthy(p["log_correction"]):
        k0 = float(p["k0"])
        ratio = np.maximum(2.0**N / k0, 2.0)
        mass2 = mass2 * np.log(ratio) ** (-1.0 / 3.0)
    return shell_field(grid, np.sqrt(mass2), spec.seed, s=0.0)


def _truthy(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


def _vortex_patch(grid, radius, amplitude, cx, cy):
    if not 0 < radius < np.pi:
        raise ValueError("patch radius must lie in (0, pi)")
    x, y = grid.mesh
    dxp = (x - cx + np.pi) % TWO_PI - np.pi
    dyp = (y - cy + np.pi) % TWO_PI - np.pi
    ind = (np.hypot(dxp, dyp) < radius).astype(float)
    m = make_bump_mollifier(DEFAULT_SUPPORT_RADIUS)
    w = amplitude * filter(ind, m, 2 * grid.dx / m.support_radius)
    return w - w.mean()


def _annulus_index(kmag: np.ndarray, n_max: int) -> np.ndarray:
    idx = np.floor(np.log2(np.maximum(kmag, 1.0))).astype(int)
    return np.minimum(idx, n_max)


def _phases(grid: Grid, seed: int, annulus: np.ndarray, active: np.ndarray) -> np.ndarray:
    n = grid.n
    kx, ky = grid.kvec
    canon = active & ((ky > 0) | ((ky == 0) & (kx > 0)))
    # row-major over (kx, ky) in natural (not FFT) order
    order = np.fft.fftshift(np.arange(n))
    theta = np.zeros((n, n))
    for M in np.unique(annulus[canon]):
        sel = canon & (annulus == M)
        sel_nat = sel[np.ix_(order, order)]
        ii, jj = np.nonzero(sel_nat)
        bitgen = np.random.Philox(key=np.array([seed, M], dtype=np.uint64))
        u = np.random.Generator(bitgen).random(ii.size)
        theta[order[ii], order[jj]] = TWO_PI * u
    mirror = np.roll(np.flip(theta, (0, 1)), 1, (0, 1))
    return np.where(canon, theta, -mirror)


def shell_field(grid: Grid, masses, seed: int, s: float = 0.0,
                target: str = "vorticity") -> np.ndarray:
    """Random zero-mean field whose LP shells have L^2 norms ``masses``.

    With ``target="velocity"`` the masses prescribe ||u_N||_2 for the velocity
    of the returned vorticity instead.
    """
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (grid.n_max + 1,) or np.any(masses < 0):
        raise ValueError(f"need {grid.n_max + 1} nonnegative shell masses")
    n = grid.n
    kx, ky = grid.kvec
    kmag = np.hypot(kx, ky)
    active = (kmag > 0) & (np.abs(kx) < n // 2) & (np.abs(ky) < n // 2)
    annulus = _annulus_index(kmag, grid.n_max)
    psi = partition_for(n).full_lattice()
    for extra in range(16):
        shape = np.where(active, np.maximum(kmag, 1.0) ** (-2.0 * s - 2.0 - extra), 0.0)
        amp = _annulus_amplitudes(psi, shape, kmag, active, annulus, masses, target)
        if amp is not None:
            break
    else:
        raise ValueError("shell masses fall too fast to be realized by the generator")
    mag = np.sqrt(amp[annulus] * shape) * active
    theta = _phases(grid, int(seed), annulus, active)
    return fft_inverse(mag * np.exp(1j * theta))


def _annulus_amplitudes(psi, shape, kmag, active, annulus, masses, target):
    """Per-annulus scale factors reproducing ``masses``, or None if some
    factor would have to be negative."""
    if target == "velocity":
        weight = shape / np.maximum(kmag, 1.0) ** 2
    elif target == "vorticity":
        weight = shape
    else:
        raise ValueError(f"unknown target {target!r}")
    nsh = len(masses)
    A = np.zeros((nsh, nsh))
    for M in range(nsh):
        sel = active & (annulus == M)
        A[:, M] = TWO_PI**2 * np.sum(psi[:, sel] ** 2 * weight[sel], axis=1)
    amp = np.zeros(nsh)
    goal = masses**2
    for N in range(nsh):
        rest = goal[N] - (A[N, N - 1] * amp[N - 1] if N > 0 else 0.0)
        if rest < -1e-12 * goal[N]:
            return None
        amp[N] = max(rest, 0.0) / A[N, N]
    return amp


def band_limited_random(grid: Grid, kmax: float, seed: int, amplitude: float = 1.0) -> np.ndarray:
    """Smooth zero-mean Gaussian field with modes 0 < |k| <= kmax, scaled to
    max |w| = amplitude."""
    bitgen = np.random.Philox(key=np.array([seed, 2**32 + 1], dtype=np.uint64))
    white = np.random.Generator(bitgen).standard_normal((grid.n, grid.n))
    kx, ky = grid.kvec
    keep = (np.hypot(kx, ky) <= kmax) & (np.abs(kx) < grid.n // 2) & (np.abs(ky) < grid.n // 2)
    F = np.fft.fft2(white) * keep
    F[0, 0] = 0.0
    w = np.fft.ifft2(F).real
    return amplitude * w / np.abs(w).max()
