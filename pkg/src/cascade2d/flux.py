"""Scale-resolved defect (flux) fields of vorticity functionals.

For a convex "entropy" h, the coarse-grained balance of h(omega_eps) has the
sink

    Z_{h,eps} = -h''(omega_eps) grad(omega_eps) . sigma_eps,

where sigma_eps is the subgrid vorticity transport.  Positive values move
h-content from scales above eps to smaller scales.  This module evaluates that
field, two alternative enstrophy-flux estimators, the residual of the
filtered equation, two closure models for sigma_eps, the viscous dissipation
of h and the coarse-grained dissipation rate of a time series.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .grid import (
    biot_savart, check_field, divergence, grad_l2, gradient, grid_of, irfft,
    lp_norm, product, rfft, velocity_gradient, w12_norm,
)
from .mollifier import Mollifier, filter, subgrid_stress


# -- entropies ----------------------------------------------------------------

@dataclass(frozen=True)
class HFunction:
    """A C^2 function of vorticity with its first two derivatives.

    ``growth_exponent`` r tags the class of h with |h'(w)| <= C (1 + |w|^(r-1)).
    ``curvature`` is set when h'' is a constant, which lets the defect field
    skip the pointwise h'' product.
    """

    name: str
    h: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]
    h_doubleprime: Callable[[np.ndarray], np.ndarray]
    growth_exponent: float
    convex: bool
    curvature: float | None = None

    def consistency_error(self, points, delta: float = 1e-5) -> float:
        """Worst relative centered-difference mismatch of h' and h''.

        Scaled so that a consistent function returns a value <= 1; values
        above 1 break the 1e-6 * (1 + |h'|) tolerance.
        """
        x = np.asarray(points, dtype=float)
        d1 = (self.h(x + delta) - self.h(x - delta)) / (2 * delta)
        d2 = (self.h_prime(x + delta) - self.h_prime(x - delta)) / (2 * delta)
        e1 = np.abs(d1 - self.h_prime(x)) / (1e-6 * (1 + np.abs(self.h_prime(x))))
        e2 = np.abs(d2 - self.h_doubleprime(x)) / (1e-6 * (1 + np.abs(self.h_doubleprime(x))))
        return float(max(e1.max(), e2.max()))

    def validate(self, points) -> None:
        err = self.consistency_error(points)
        if err > 1.0:
            raise ValueError(f"h-function {self.name!r}: derivatives inconsistent ({err:.3g})")
        if self.convex and np.any(self.h_doubleprime(np.asarray(points, float)) < 0):
            raise ValueError(f"h-function {self.name!r} is tagged convex but h'' < 0")


ENSTROPHY = HFunction(
    name="enstrophy",
    h=lambda w: 0.5 * w * w,
    h_prime=lambda w: w,
    h_doubleprime=lambda w: np.ones_like(np.asarray(w, dtype=float)),
    growth_exponent=2.0,
    convex=True,
    curvature=1.0,
)

COSINE = HFunction(
    name="cosine",
    h=lambda w: 1.0 - np.cos(w),
    h_prime=np.sin,
    h_doubleprime=np.cos,
    growth_exponent=1.0,
    convex=False,
)


def p_moment(p: float) -> HFunction:
    """h(w) = |w|^p / p; C^2 needs p >= 2."""
    if p < 2:
        raise ValueError("p-moment entropies need p >= 2 to be C^2")
    return HFunction(
        name=f"pmoment:{p:g}",
        h=lambda w: np.abs(w) ** p / p,
        h_prime=lambda w: np.sign(w) * np.abs(w) ** (p - 1),
        h_doubleprime=lambda w: (p - 1) * np.abs(w) ** (p - 2),
        growth_exponent=float(p),
        convex=True,
        curvature=1.0 if p == 2 else None,
    )


def quadratic(c: float) -> HFunction:
    """h(w) = c w^2 / 2, constant curvature c."""
    return HFunction(
        name=f"quadratic:{c:g}",
        h=lambda w: 0.5 * c * w * w,
        h_prime=lambda w: c * w,
        h_doubleprime=lambda w: np.full_like(np.asarray(w, dtype=float), c),
        growth_exponent=2.0,
        convex=c >= 0,
        curvature=float(c),
    )


def h_function(name: str) -> HFunction:
    """Look up a built-in entropy: ``enstrophy``, ``cosine`` or ``pmoment:<p>``."""
    if name == "enstrophy":
        return ENSTROPHY
    if name == "cosine":
        return COSINE
    if name.startswith("pmoment:"):
        return p_moment(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown h-function {name!r}")


# -- defect fields ------------------------------------------------------------

def _velocity(omega, u):
    return biot_savart(omega) if u is None else u


def defect_field(omega: np.ndarray, h: HFunction, m: Mollifier, eps: float,
                 u: np.ndarray | None = None) -> np.ndarray:
    """Z_{h,eps} = -h''(omega_eps) grad(omega_eps) . sigma_eps."""
    check_field(omega)
    u = _velocity(omega, u)
    sigma = subgrid_stress(u, omega, m, eps)
    w_eps = filter(omega, m, eps)
    g = gradient(w_eps)
    dot = product(g[0], sigma[0]) + product(g[1], sigma[1])
    if h.curvature is not None:
        return -h.curvature * dot
    return -product(h.h_doubleprime(w_eps), dot)


def defect_tilde(omega: np.ndarray, m: Mollifier, eps: float,
                 u: np.ndarray | None = None) -> np.ndarray:
    """Duchon-Robert type estimator 1/2 w div[(w u)_eps] - 1/2 w (u . grad) w_eps."""
    check_field(omega)
    u = _velocity(omega, u)
    wu = np.stack([product(omega, u[0]), product(omega, u[1])])
    flux_div = divergence(filter(wu, m, eps))
    g = gradient(filter(omega, m, eps))
    adv = product(u[0], g[0]) + product(u[1], g[1])
    return 0.5 * product(omega, flux_div - adv)


def transport_divergence(omega: np.ndarray, m: Mollifier, eps: float,
                         u: np.ndarray | None = None) -> np.ndarray:
    """div[u (w^2)_eps - (u w^2)_eps], the spatial-transport part of the
    structure-function flux identity."""
    u = _velocity(omega, u)
    w2 = product(omega, omega)
    w2_eps = filter(w2, m, eps)
    a = np.stack([product(u[i], w2_eps) - filter(product(u[i], w2), m, eps) for i in range(2)])
    return divergence(a)


def structure_flux(omega: np.ndarray, m: Mollifier, eps: float,
                   u: np.ndarray | None = None, quadrature: str = "lattice") -> np.ndarray:
    """Local flux 1/4 int dl grad(phi_eps)(l) . Delta_l u |Delta_l w|^2.

    ``quadrature="lattice"`` sums over every lattice offset with the discrete
    gradient of the sampled filter weights; that gradient obeys exact
    summation by parts against the discrete filter, so the result matches
    the filter-based form of the same integral to round-off.  The sum is
    evaluated through FFT correlations in O(n^2 log n).

    ``quadrature="disk"`` samples the analytic grad(phi_eps) at lattice
    offsets inside the support disk (weights dx^2) and sums lattice shifts
    directly, at cost O(n^2 (eps R / dx)^2).  It converges to the continuum
    integral only as fast as phi_eps is resolved by the lattice.
    """
    grid = check_field(omega)
    u = _velocity(omega, u)
    if quadrature == "lattice":
        return _structure_flux_lattice(omega, u, m, eps)
    if quadrature == "disk":
        return _structure_flux_disk(omega, u, m, eps, grid)
    raise ValueError(f"unknown quadrature {quadrature!r}")


def _structure_flux_lattice(omega, u, m, eps):
    grid = grid_of(omega)
    mult = m.multiplier(grid, eps)
    ikx, iky = grid.deriv

    def corr_vec(F):
        # sum_l G(l) . F(x + l) = -div (F_eps)
        Fh = rfft(F) * mult
        return -irfft(ikx * Fh[0] + iky * Fh[1], grid.n)

    def corr_scalar(f):
        # sum_l G(l) f(x + l) = -grad (f_eps)
        fh = rfft(f) * mult
        return -np.stack([irfft(ikx * fh, grid.n), irfft(iky * fh, grid.n)])

    w = omega
    w2 = w * w
    total = corr_vec(u * w2) - 2 * w * corr_vec(u * w) + w2 * corr_vec(u)
    cs_w2 = corr_scalar(w2)
    cs_w = corr_scalar(w)
    total -= np.sum(u * cs_w2, axis=0)
    total += 2 * w * np.sum(u * cs_w, axis=0)
    return 0.25 * total


def _structure_flux_disk(omega, u, m, eps, grid):
    I, J, gx, gy = m.gradient_weights(grid, eps)
    if len(I) < 9:
        raise ValueError("support disk of phi_eps covers fewer than 3x3 lattice cells")
    total = np.zeros_like(omega)
    for i, j, ax, ay in zip(I, J, gx, gy):
        dw = np.roll(omega, (-i, -j), axis=(0, 1)) - omega
        du = np.roll(u, (-i, -j), axis=(1, 2)) - u
        total += (ax * du[0] + ay * du[1]) * dw * dw
    return 0.25 * total


@dataclass
class Residual:
    field: np.ndarray
    ratio: float


def residual_field(omega: np.ndarray, m: Mollifier, eps: float,
                   u: np.ndarray | None = None) -> Residual:
    """r_eps = -div tau_eps(u, w) and the ratio
    ||div tau_eps||_1 / (||u||_{W^{1,2}} ||w||_2)."""
    check_field(omega)
    u = _velocity(omega, u)
    d = divergence(subgrid_stress(u, omega, m, eps))
    denom = w12_norm(u) * lp_norm(omega, 2)
    ratio = lp_norm(d, 1) / denom if denom > 0 else 0.0
    return Residual(field=-d, ratio=float(ratio))


# -- closures -------------------------------------------------------------------

#: Prefactor of the nonlinear (gradient) model.
DEFAULT_MODEL_CONSTANT = 1.0 / 12.0


def _filtered_gradients(omega, m, eps, u):
    u = _velocity(omega, u)
    D = velocity_gradient(filter(u, m, eps))
    g = gradient(filter(omega, m, eps))
    return D, g


def model_stress_nonlinear(omega: np.ndarray, m: Mollifier, eps: float,
                           C_model: float = DEFAULT_MODEL_CONSTANT,
                           u: np.ndarray | None = None) -> np.ndarray:
    """sigma ~ C eps^2 D_eps . grad w_eps with D_ij = d u_i / d x_j."""
    if not C_model > 0:
        raise ValueError("C_model must be positive")
    D, g = _filtered_gradients(omega, m, eps, u)
    out = np.stack([product(D[i, 0], g[0]) + product(D[i, 1], g[1]) for i in range(2)])
    return C_model * eps**2 * out


def strain_magnitude(D: np.ndarray) -> np.ndarray:
    """S = sqrt(max(0, -det D)).

    D is traceless, so its eigenvalues are +-sqrt(-det D): real of equal
    magnitude where strain dominates, imaginary in vortical regions, where S
    is set to zero.
    """
    det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    return np.sqrt(np.maximum(0.0, -det))


def model_stress_eddy(omega: np.ndarray, m: Mollifier, eps: float,
                      C_model: float = DEFAULT_MODEL_CONSTANT,
                      u: np.ndarray | None = None) -> np.ndarray:
    """Eddy-viscosity closure sigma ~ -C eps^2 S_eps grad w_eps."""
    if not C_model > 0:
        raise ValueError("C_model must be positive")
    D, g = _filtered_gradients(omega, m, eps, u)
    S = strain_magnitude(D)
    return -C_model * eps**2 * np.stack([product(S, g[0]), product(S, g[1])])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.sqrt(np.sum(a * a)), np.sqrt(np.sum(b * b))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.sum(a * b) / (na * nb))


# -- dissipation ------------------------------------------------------------------

def viscous_dissipation(omega: np.ndarray, h: HFunction, nu: float) -> np.ndarray:
    """nu h''(w) |grad w|^2, pointwise."""
    if nu < 0:
        raise ValueError("viscosity must be nonnegative")
    check_field(omega)
    if nu == 0:
        return np.zeros_like(omega)
    g = gradient(omega)
    return nu * h.h_doubleprime(omega) * (g[0] ** 2 + g[1] ** 2)


def integral(f: np.ndarray) -> float:
    """int_{T^2} f dx."""
    grid = grid_of(f)
    return float(np.sum(f) * grid.dx**2)


@dataclass
class DissipationSeries:
    times: np.ndarray
    rates: dict  # eps -> -dI_h^eps/dt at ``times``
    integrals: dict  # eps -> I_h^eps at every snapshot


def dissipation_rate(run: Sequence[tuple[float, np.ndarray]], h: HFunction,
                     m: Mollifier, eps_values: Sequence[float]) -> DissipationSeries:
    """-dI_h^eps/dt by centered differences, I_h^eps(t) = int h(w_eps).

    The first and last snapshots have no centered neighbor and are dropped.
    """
    if len(run) < 3:
        raise ValueError("need at least 3 snapshots")
    times = np.array([t for t, _ in run], dtype=float)
    dt = np.diff(times)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * max(1.0, abs(dt.mean())):
        raise ValueError("snapshots must be uniformly spaced in time")
    integrals, rates = {}, {}
    for eps in eps_values:
        I = np.array([integral(h.h(filter(w, m, eps))) for _, w in run])
        integrals[float(eps)] = I
        rates[float(eps)] = -(I[2:] - I[:-2]) / (times[2:] - times[:-2])
    return DissipationSeries(times=times[1:-1], rates=rates, integrals=integrals)


# -- flux curves ------------------------------------------------------------------

@dataclass
class FluxCurve:
    eps_values: list
    flux_integral: list
    flux_abs_integral: list
    method_tag: str

    def __post_init__(self):
        n = len(self.eps_values)
        if len(self.flux_integral) != n or len(self.flux_abs_integral) != n:
            raise ValueError("flux curve columns differ in length")
        if np.any(np.diff(self.eps_values) <= 0):
            raise ValueError("eps values must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps", "flux_integral", "flux_abs_integral", "method"])
            for row in zip(self.eps_values, self.flux_integral, self.flux_abs_integral):
                wr.writerow([repr(float(v)) for v in row] + [self.method_tag])

    @classmethod
    def from_csv(cls, path) -> "FluxCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            eps_values=[float(r["eps"]) for r in rows],
            flux_integral=[float(r["flux_integral"]) for r in rows],
            flux_abs_integral=[float(r["flux_abs_integral"]) for r in rows],
            method_tag=rows[0]["method"] if rows else "",
        )

    def as_dict(self) -> dict:
        return {
            "method": self.method_tag,
            "eps": [float(e) for e in self.eps_values],
            "flux_integral": [float(v) for v in self.flux_integral],
            "flux_abs_integral": [float(v) for v in self.flux_abs_integral],
        }


FLUX_METHODS = ("defect", "tilde", "structure")


def flux_curve(omega: np.ndarray, eps_values: Sequence[float], m: Mollifier,
               h: HFunction = ENSTROPHY, method: str = "defect") -> FluxCurve:
    """Integrated flux over a sweep of filter scales.

    ``defect`` uses Z_{h,eps}; ``tilde`` and ``structure`` are enstrophy-only
    estimators and ignore ``h``.
    """
    check_field(omega)
    eps_values = sorted(float(e) for e in eps_values)
    u = biot_savart(omega)
    fl, fa = [], []
    for eps in eps_values:
        if method == "defect":
            Z = defect_field(omega, h, m, eps, u=u)
        elif method == "tilde":
            Z = defect_tilde(omega, m, eps, u=u)
        elif method == "structure":
            Z = structure_flux(omega, m, eps, u=u)
        else:
            raise ValueError(f"unknown flux method {method!r}")
        fl.append(integral(Z))
        fa.append(integral(np.abs(Z)))
    tag = method if method != "defect" else f"defect:{h.name}"
    return FluxCurve(eps_values, fl, fa, tag)


def fit_window(grid, m: Mollifier) -> tuple[float, float]:
    """Default eps range for slope fits: [8 dx, min(64 dx, pi / (2 R))]."""
    return 8 * grid.dx, min(64 * grid.dx, np.pi / (2 * m.support_radius))


def log_eps_grid(lo: float, hi: float, count: int = 7) -> list:
    return [float(e) for e in np.geomspace(lo, hi, count)]


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple
    window: tuple
    n_points: int
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "window": list(self.window),
            "n_points": self.n_points,
            **self.extra,
        }


def fit_loglog(x: Sequence[float], y: Sequence[float],
               window: tuple[float, float] | None = None) -> SlopeFit:
    """Least-squares slope of log y against log x inside ``window``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sel = np.ones_like(x, dtype=bool)
    if window is not None:
        lo, hi = window
        sel = (x >= lo * (1 - 1e-9)) & (x <= hi * (1 + 1e-9))
    sel &= y > 0
    if sel.sum() < 2:
        raise ValueError("need at least two positive points inside the fit window")
    lx, ly = np.log(x[sel]), np.log(y[sel])
    res = stats.linregress(lx, ly)
    k = int(sel.sum())
    if k > 2:
        half = float(stats.t.ppf(0.975, k - 2) * res.stderr)
    else:
        half = float("nan")
    win = window if window is not None else (float(x[sel].min()), float(x[sel].max()))
    return SlopeFit(
        slope=float(res.slope), intercept=float(res.intercept), stderr=float(res.stderr),
        ci95=(float(res.slope - half), float(res.slope + half)),
        window=(float(win[0]), float(win[1])), n_points=k,
    )


def palinstrophy_norm(omega: np.ndarray) -> float:
    return grad_l2(omega)
