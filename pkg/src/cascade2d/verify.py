"""Self-checks of the algebraic identities and exact solutions, reported in TAP."""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .flux import defect_tilde, structure_flux, transport_divergence
from .grid import Grid, biot_savart, divergence, gradient, grad_l2, lp_norm, product
from .littlewood_paley import build_partition
from .mollifier import commutator_tau, filter, make_bump_mollifier
from .solver import SolverConfig, run
from .synth import band_limited_random


@dataclass
class CheckResult:
    name: str
    ok: bool
    value: float
    bound: float
    seconds: float = 0.0


def _rel(a, b) -> float:
    return float(np.sqrt(np.sum((a - b) ** 2)) / max(np.sqrt(np.sum(b * b)), 1e-300))


def alt_exp_error(omega: np.ndarray, m, eps: float) -> float:
    """Relative L^2 mismatch of 4 S_eps and div[u (w^2)_eps - (u w^2)_eps] + 4 Ztilde_eps."""
    u = biot_savart(omega)
    lhs = 4.0 * structure_flux(omega, m, eps, u=u)
    rhs = transport_divergence(omega, m, eps, u=u) + 4.0 * defect_tilde(omega, m, eps, u=u)
    return _rel(lhs, rhs)


def gradtau_error(omega: np.ndarray, m, eps: float) -> float:
    """Relative L^2 mismatch of the two forms of div tau_eps(u, w)."""
    u = biot_savart(omega)
    lhs = divergence(commutator_tau(u, omega, m, eps))
    w_eps = filter(omega, m, eps)
    a = np.stack([filter(product(u[i], omega), m, eps) - product(u[i], w_eps) for i in range(2)])
    g = gradient(w_eps)
    du = u - filter(u, m, eps)
    rhs = divergence(a) + product(du[0], g[0]) + product(du[1], g[1])
    return _rel(lhs, rhs)


def ineq_ratios(omega: np.ndarray, m, eps: float) -> tuple[float, float]:
    """Ratios of the two sides of ||u - u_eps|| <= eps ||grad u|| and
    ||grad w_eps|| <= eps^-1 ||grad phi||_1 ||w||, in L^2."""
    u = biot_savart(omega)
    r1 = lp_norm(u - filter(u, m, eps), 2) / (eps * grad_l2(u))
    r2 = grad_l2(filter(omega, m, eps)) / (m.grad_l1() / eps * lp_norm(omega, 2))
    return float(r1), float(r2)


def partition_error(n: int) -> float:
    psi = build_partition(Grid.of(n)).full_lattice()
    return float(np.abs(psi.sum(axis=0) - 1.0).max())


def taylor_green_error(n: int, nu: float, dt: float, t_end: float) -> float:
    g = Grid.of(n)
    x, y = g.mesh
    rec = run(SolverConfig(grid_n=n, nu=nu, dt=dt, t_end=t_end), 2 * np.cos(x) * np.cos(y))
    w = rec.snapshots[-1][1]
    exact = 2 * np.exp(-2 * nu * t_end) * np.cos(x) * np.cos(y)
    return float(np.abs(w - exact).max() / np.abs(exact).max())


def checks(level: str = "quick") -> list[tuple[str, Callable[[], tuple[float, float]]]]:
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    full = level == "full"
    n = 128
    g = Grid.of(n)
    m = make_bump_mollifier()
    seeds = range(10 if full else 3)
    eps_list = [8 * g.dx / m.support_radius, 16 * g.dx / m.support_radius]

    def fields(kmax):
        return [band_limited_random(g, kmax, s) for s in seeds]

    def alt_exp():
        return max(alt_exp_error(w, m, e) for w in fields(10) for e in eps_list), 1e-8

    def gradtau():
        return max(gradtau_error(w, m, e) for w in fields(10) for e in eps_list), 1e-10

    def ineq1():
        return max(ineq_ratios(w, m, e)[0] for w in fields(40) for e in eps_list), 1.1

    def ineq2():
        return max(ineq_ratios(w, m, e)[1] for w in fields(40) for e in eps_list), 1.1

    def telescoping():
        return partition_error(256), 1e-12

    def tg():
        t_end = 1.0 if full else 0.1
        return taylor_green_error(n, 0.01, 1e-3, t_end), 1e-7

    return [
        ("alt-exp identity", alt_exp),
        ("gradtau decomposition", gradtau),
        ("ineq1 ||u - u_eps|| <= eps ||grad u||", ineq1),
        ("ineq2 ||grad w_eps|| <= ||grad phi||_1 ||w|| / eps", ineq2),
        ("partition telescoping", telescoping),
        ("Taylor-Green exact decay", tg),
    ]


def run_checks(level: str = "quick", stream=None, timings: bool = True) -> list[CheckResult]:
    """Run the suite, printing TAP to ``stream``.  Without ``timings`` the
    output is deterministic."""
    stream = stream or sys.stdout
    todo = checks(level)
    print("TAP version 13", file=stream)
    print(f"1..{len(todo)}", file=stream)
    out = []
    for i, (name, fn) in enumerate(todo, 1):
        t0 = time.perf_counter()
        try:
            value, bound = fn()
            ok = bool(np.isfinite(value) and value <= bound)
        except Exception as exc:  # reported, not raised
            value, bound, ok = float("nan"), float("nan"), False
            print(f"# {name}: {type(exc).__name__}: {exc}", file=stream)
        dt = time.perf_counter() - t0
        status = "ok" if ok else "not ok"
        when = f" time={dt:.2f}s" if timings else ""
        print(f"{status} {i} - {name} # value={value:.3e} bound={bound:.1e}{when}", file=stream)
        out.append(CheckResult(name, ok, float(value), float(bound), dt))
    return out
