"""Command-line entry point ``cascade2d``.

Every subcommand reads an optional key=value config file; explicit flags
override file values, which override defaults.  JSON outputs embed the
resolved configuration and the package version and carry no timestamps, so
re-running a command reproduces its outputs byte for byte.

Exit codes: 0 success, 2 malformed config or input, 3 numerical failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .flux import FLUX_METHODS, fit_loglog, fit_window, flux_curve, h_function, log_eps_grid
from .grid import TWO_PI, FieldError, Grid, biot_savart
from .io import (
    ConfigError, atomic_open, coerce, read_config, read_snapshot, write_json, write_snapshot,
)
from .littlewood_paley import (
    besov_norm, build_partition, hypothesis_diagnostics, lp_energy_spectrum,
    lp_enstrophy_spectrum, write_spectrum_csv,
)
from .mollifier import DEFAULT_SUPPORT_RADIUS, ResolutionError, make_bump_mollifier
from .solver import Forcing, NumericalError, SolverConfig, nu_sweep, run
from .synth import DEFAULTS as GEN_DEFAULTS, KINDS, GenSpec, generate

log = logging.getLogger("cascade2d")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4

# key -> (type, default); shared by the config file and the flags
SOLVER_KEYS = {
    "grid_n": (int, None),
    "nu": (float, 0.0),
    "dt": (float, None),
    "t_end": (float, None),
    "dealias": (bool, True),
    "hypofriction_alpha": (float, 0.0),
    "hypofriction_kmax": (int, 2),
    "snapshot_interval": (float, None),
    "forcing_k_lo": (float, None),
    "forcing_k_hi": (float, None),
    "forcing_amplitude": (float, None),
    "forcing_seed": (int, 0),
}
GEN_KEYS = {"kind": (str, None), "n": (int, None), "seed": (int, 0)}
FLUX_KEYS = {
    "h": (str, "enstrophy"),
    "method": (str, "defect"),
    "support_radius": (float, DEFAULT_SUPPORT_RADIUS),
    "eps": ("floats", None),
    "n_eps": (int, 7),
}


def _provenance(command: str, config: dict) -> dict:
    return {"command": command, "version": __version__, "config": config}


def _resolve(schema: dict, file_cfg: dict, flags: dict, allow_extra: bool = False) -> dict:
    """flag > file > default, typed by ``schema``."""
    extra = set(file_cfg) - set(schema)
    if extra and not allow_extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    flag_extra = {k for k, v in flags.items() if k not in schema and v is not None}
    if flag_extra and not allow_extra:
        raise ConfigError(f"unknown settings: {sorted(flag_extra)}")
    out = {}
    for key, (kind, default) in schema.items():
        if flags.get(key) is not None:
            out[key] = coerce(flags[key], kind, key)
        elif key in file_cfg:
            out[key] = coerce(file_cfg[key], kind, key)
        else:
            out[key] = default
    if allow_extra:
        for key in sorted(extra | flag_extra):
            out[key] = flags[key] if key in flag_extra else file_cfg[key]
    return out


def _load_cfg(path) -> dict:
    return read_config(path) if path else {}


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join(missing)}")


def _snapshot(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such snapshot: {path}")
    snap = read_snapshot(path)
    if snap.data.ndim != 2:
        raise ConfigError(f"{path} holds a vector field; a vorticity snapshot is required")
    return snap


# -- gen ----------------------------------------------------------------------------

def cmd_gen(spec_file, out_path, overrides: dict | None = None) -> dict:
    cfg = _resolve(GEN_KEYS, _load_cfg(spec_file), overrides or {}, allow_extra=True)
    _require(cfg, "kind", "n")
    if cfg["kind"] not in KINDS:
        raise ConfigError(f"unknown kind {cfg['kind']!r}")
    defaults = GEN_DEFAULTS[cfg["kind"]]
    params = {}
    for k, v in cfg.items():
        if k in GEN_KEYS:
            continue
        if k not in defaults:
            raise ConfigError(f"unknown parameter {k!r} for {cfg['kind']}")
        kind = type(defaults[k])
        params[k] = coerce(v, kind, k)
    try:
        spec = GenSpec(kind=cfg["kind"], params=params, seed=cfg["seed"])
        grid = Grid.of(cfg["n"])
        omega = generate(spec, grid)
    except (ValueError, FieldError) as exc:
        raise ConfigError(str(exc)) from exc
    write_snapshot(out_path, omega)
    return {"path": str(out_path), "kind": spec.kind, "n": grid.n, "seed": spec.seed,
            "params": spec.resolved()}


# -- simulate -------------------------------------------------------------------------

def solver_config(cfg: dict) -> SolverConfig:
    _require(cfg, "grid_n", "dt", "t_end")
    forcing = None
    if cfg.get("forcing_amplitude") is not None:
        _require(cfg, "forcing_k_lo", "forcing_k_hi")
        forcing = Forcing(cfg["forcing_k_lo"], cfg["forcing_k_hi"], cfg["forcing_amplitude"],
                          cfg["forcing_seed"])
    try:
        return SolverConfig(
            grid_n=cfg["grid_n"], dt=cfg["dt"], t_end=cfg["t_end"], nu=cfg["nu"],
            dealias=cfg["dealias"], hypofriction_alpha=cfg["hypofriction_alpha"],
            hypofriction_kmax=cfg["hypofriction_kmax"],
            snapshot_interval=cfg["snapshot_interval"], forcing=forcing)
    except (ValueError, FieldError) as exc:
        raise ConfigError(str(exc)) from exc


def _init_field(init_path, n):
    snap = _snapshot(init_path)
    if snap.n != n:
        raise ConfigError(f"initial field has n={snap.n}, config says grid_n={n}")
    return snap.data


def cmd_simulate(config_file, init_path, out_dir, overrides: dict | None = None) -> dict:
    cfg = _resolve(SOLVER_KEYS, _load_cfg(config_file), overrides or {})
    config = solver_config(cfg)
    omega0 = _init_field(init_path, config.grid_n)
    out_dir = Path(out_dir)
    rec = run(config, omega0, out_dir=out_dir, keep_in_memory=False)
    rec.write_audit_csv(out_dir / "audit.csv")
    bal = rec.enstrophy_balance() if config.nu > 0 and len(rec.audit["t"]) >= 3 else np.array([])
    summary = {
        **_provenance("simulate", cfg),
        "snapshots": [{"time": t, "file": Path(p).name} for t, p in rec.snapshots],
        "removed_mean": rec.removed_mean,
        "k_d_max": rec.k_d_max,
        "resolution_ok": rec.resolution_ok,
        "notes": rec.notes,
        "final": {c: float(rec.audit[c][-1]) for c in ("E", "Omega", "P", "dissipation")},
        "max_substeps": int(rec.audit["substeps"].max()),
        "enstrophy_balance_max": float(bal.max()) if bal.size else None,
    }
    write_json(out_dir / "run.json", summary)
    return summary


# -- flux-sweep ---------------------------------------------------------------------------

def _eps_list(cfg, grid, m):
    lo, hi = fit_window(grid, m)
    if cfg.get("eps"):
        return sorted(cfg["eps"]), (lo, hi)
    return log_eps_grid(lo, hi, cfg["n_eps"]), (lo, hi)


def cmd_flux_sweep(snapshot_path, out_dir, config_file=None, overrides: dict | None = None) -> dict:
    cfg = _resolve(FLUX_KEYS, _load_cfg(config_file), overrides or {})
    if cfg["method"] not in FLUX_METHODS:
        raise ConfigError(f"unknown method {cfg['method']!r}")
    try:
        h = h_function(cfg["h"])
        m = make_bump_mollifier(cfg["support_radius"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    omega = _snapshot(snapshot_path).data
    grid = Grid.of(omega.shape[0])
    eps, window = _eps_list(cfg, grid, m)
    curve = flux_curve(omega, eps, m, h, method=cfg["method"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with atomic_open(out_dir / "flux.csv") as fh:
        fh.write("eps,flux_integral,flux_abs_integral,method\n")
        for row in zip(curve.eps_values, curve.flux_integral, curve.flux_abs_integral):
            fh.write(",".join(repr(float(v)) for v in row) + f",{curve.method_tag}\n")
    try:
        fit = fit_loglog(curve.eps_values, curve.flux_abs_integral, window).as_dict()
    except ValueError as exc:
        fit = {"error": str(exc)}
    report = {
        **_provenance("flux-sweep", {**cfg, "eps": eps}),
        "grid": {"n": grid.n, "dx": grid.dx},
        "mollifier": {"support_radius": m.support_radius, "amplitude": m.amplitude,
                      "smoothing_radius": [e * m.support_radius for e in eps]},
        "curve": curve.as_dict(),
        "fit": {"quantity": "flux_abs_integral", **fit},
    }
    write_json(out_dir / "fit.json", report)
    return report


# -- nu-sweep ---------------------------------------------------------------------------------

NU_KEYS = {**SOLVER_KEYS, "nu_list": ("floats", None), "workers": (int, None),
           "h": (str, "enstrophy"), "support_radius": (float, DEFAULT_SUPPORT_RADIUS),
           "eps": ("floats", None), "n_eps": (int, 7)}


def cmd_nu_sweep(config_file, init_path, out_path, overrides: dict | None = None) -> dict:
    cfg = _resolve(NU_KEYS, _load_cfg(config_file), overrides or {})
    _require(cfg, "nu_list")
    base = solver_config(cfg)
    omega0 = _init_field(init_path, base.grid_n)
    try:
        h_function(cfg["h"])
        m = make_bump_mollifier(cfg["support_radius"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eps, window = _eps_list(cfg, base.grid, m)
    try:
        rep = nu_sweep(base, omega0, cfg["nu_list"], eps, support_radius=m.support_radius,
                       h_name=cfg["h"], workers=cfg["workers"])
    except ValueError as exc:
        if isinstance(exc, (FieldError, ResolutionError)):
            raise
        raise ConfigError(str(exc)) from exc
    resolved = {k: v for k, v in cfg.items() if k != "workers"}
    report = {**_provenance("nu-sweep", {**resolved, "eps": eps}), **rep.as_dict(),
              "columns": ["nu", "dissipation", "flux"]}
    write_json(out_path, report)
    return report


# -- lp-analyze ---------------------------------------------------------------------------------

def _collect_run(path: Path):
    """(time, omega, viscosity) triples from a snapshot file or run directory."""
    if path.is_dir():
        files = sorted(path.glob("omega_*.bin"))
        if not files:
            raise ConfigError(f"no snapshots in {path}")
    elif path.is_file():
        files = [path]
    else:
        raise ConfigError(f"no such file or directory: {path}")
    out = []
    for f in files:
        s = _snapshot(f)
        out.append((s.time, s.data, s.viscosity))
    return out


def _eta_from_audit(path: Path):
    audit = path / "audit.csv" if path.is_dir() else None
    if audit is None or not audit.is_file():
        return None
    data = np.genfromtxt(audit, delimiter=",", names=True)
    diss = np.atleast_1d(data["dissipation"])
    if not np.any(diss > 0):
        return None
    return float(np.mean(diss) / TWO_PI**2)


def cmd_lp_analyze(input_path, out_dir, k0: int = 1, eta: float | None = None) -> dict:
    path = Path(input_path)
    snaps = _collect_run(path)
    grid = Grid.of(snaps[0][1].shape[0])
    part = build_partition(grid)
    eta_source = "supplied"
    if eta is None:
        eta = _eta_from_audit(path)
        eta_source = "measured mean nu ||grad w||^2 per unit area"
    if eta is None:
        raise ConfigError("eta not supplied and no viscous audit series to measure it from")
    t_last, w_last, nu = snaps[-1]
    u_last = biot_savart(w_last)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    es = lp_energy_spectrum(u_last, part)
    ws = lp_enstrophy_spectrum(w_last, part)
    write_spectrum_csv(out_dir / "spectrum.csv", es, ws)
    run_u = [(t, biot_savart(w)) for t, w, _ in snaps]
    hyp = hypothesis_diagnostics(run_u, part, k0, eta, nu=nu if nu > 0 else None,
                                 eta_source=eta_source)
    b = besov_norm(w_last, 0.0, 2.0, part)
    report = {
        **_provenance("lp-analyze", {"input": str(path), "k0": k0, "eta": eta}),
        "time": t_last,
        "hypothesis": hyp.as_dict(),
        "besov_B0_inf_2": {"value": b.value, "argmax_shell": b.argmax, "unresolved": b.unresolved},
    }
    write_json(out_dir / "hypothesis.json", report)
    return report


# -- verify ----------------------------------------------------------------------------------------

def cmd_verify(level: str = "quick", stream=None, timings: bool = True) -> int:
    from .verify import run_checks

    results = run_checks(level, stream=stream, timings=timings)
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


# -- report: run an experiment plan ------------------------------------------------------------------

STAGES = ("gen", "simulate", "flux-sweep", "nu-sweep", "lp-analyze", "verify")


def cmd_report(plan_file, out_dir) -> tuple[int, dict]:
    """Run the stages of a plan file in order.

    The plan is a key=value file with ``name``, ``stages`` (comma separated)
    and stage settings prefixed by the stage name, e.g. ``gen.kind``.  Stage
    inputs default to the outputs of earlier stages.
    """
    plan = read_config(plan_file)
    name = plan.get("name", Path(plan_file).stem)
    stages = [s.strip() for s in plan.get("stages", "").split(",") if s.strip()]
    if not stages:
        raise ConfigError("plan lists no stages")
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stages: {bad}")
    known = {"name", "stages"}
    for key in plan:
        if key not in known and key.split(".", 1)[0] not in STAGES:
            raise ConfigError(f"plan key {key!r} has no stage prefix")

    def section(stage):
        p = stage + "."
        return {k[len(p):]: v for k, v in plan.items() if k.startswith(p)}

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    field_path, run_dir = None, None
    results, code = {}, EXIT_OK
    for stage in stages:
        sec = section(stage)
        if stage == "gen":
            field_path = out_dir / "field.bin"
            results[stage] = cmd_gen(None, field_path, sec)
        elif stage == "simulate":
            init = sec.pop("init", None) or field_path
            run_dir = out_dir / "run"
            results[stage] = cmd_simulate(None, _need(init, stage), run_dir, sec)
        elif stage == "flux-sweep":
            snap = sec.pop("snapshot", None) or _last_snapshot(run_dir) or field_path
            results[stage] = cmd_flux_sweep(_need(snap, stage), out_dir / "flux", None, sec)
        elif stage == "nu-sweep":
            init = sec.pop("init", None) or field_path
            results[stage] = cmd_nu_sweep(None, _need(init, stage), out_dir / "nu_sweep.json", sec)
        elif stage == "lp-analyze":
            src = sec.pop("input", None) or run_dir or field_path
            k0 = int(coerce(sec.pop("k0", "1"), int, "k0"))
            eta = sec.pop("eta", None)
            if sec:
                raise ConfigError(f"unknown lp-analyze keys: {sorted(sec)}")
            results[stage] = cmd_lp_analyze(_need(src, stage), out_dir / "lp", k0,
                                            None if eta is None else coerce(eta, float, "eta"))
        else:
            import io as _io

            buf = _io.StringIO()
            rc = cmd_verify(sec.get("level", "quick"), stream=buf, timings=False)
            results[stage] = {"exit_code": rc, "tap": buf.getvalue().splitlines()}
            code = max(code, rc)
    report = {**_provenance("report", plan), "name": name, "stages": stages, "results": results}
    write_json(out_dir / "report.json", report)
    return code, report


def _need(path, stage):
    if path is None:
        raise ConfigError(f"stage {stage} has no input")
    return path


def _last_snapshot(run_dir):
    if run_dir is None:
        return None
    files = sorted(Path(run_dir).glob("omega_*.bin"))
    return files[-1] if files else None


# -- argument parsing ---------------------------------------------------------------------------

def _add_keys(p: argparse.ArgumentParser, schema: dict, skip=()):
    for key in schema:
        if key in skip:
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")


def _flags(ns, schema) -> dict:
    return {k: getattr(ns, k, None) for k in schema if getattr(ns, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cascade2d", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an initial vorticity field")
    p.add_argument("--spec", help="key=value generator spec")
    p.add_argument("--out", required=True)
    _add_keys(p, GEN_KEYS)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, repeatable")

    p = sub.add_parser("simulate", help="integrate a field in time")
    p.add_argument("--config")
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_keys(p, SOLVER_KEYS)

    p = sub.add_parser("flux-sweep", help="flux curve over filter scales with slope fit")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    _add_keys(p, FLUX_KEYS)

    p = sub.add_parser("nu-sweep", help="viscosity sweep from a common initial field")
    p.add_argument("--config")
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    _add_keys(p, NU_KEYS)

    p = sub.add_parser("lp-analyze", help="LP spectra, Besov norm and hypothesis diagnostics")
    p.add_argument("--input", required=True, help="snapshot file or run directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k0", type=int, default=1)
    p.add_argument("--eta", type=float, default=None)

    p = sub.add_parser("verify", help="run the identity and exact-solution checks (TAP)")
    p.add_argument("--level", choices=("quick", "full"), default="quick")

    p = sub.add_parser("report", help="run an experiment plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "gen":
            flags = _flags(ns, GEN_KEYS)
            for item in ns.param:
                if "=" not in item:
                    raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
                k, v = item.split("=", 1)
                flags[k.strip()] = v.strip()
            res = cmd_gen(ns.spec, ns.out, flags)
            print(f"wrote {res['path']} ({res['kind']}, n={res['n']}, seed={res['seed']})")
        elif ns.command == "simulate":
            res = cmd_simulate(ns.config, ns.init, ns.out, _flags(ns, SOLVER_KEYS))
            print(f"wrote {len(res['snapshots'])} snapshots to {ns.out}")
        elif ns.command == "flux-sweep":
            res = cmd_flux_sweep(ns.snapshot, ns.out, ns.config, _flags(ns, FLUX_KEYS))
            print(f"slope {res['fit'].get('slope', float('nan')):.4f} "
                  f"ci95 {res['fit'].get('ci95')}")
        elif ns.command == "nu-sweep":
            res = cmd_nu_sweep(ns.config, ns.init, ns.out, _flags(ns, NU_KEYS))
            for row in res["table"]:
                print(f"nu={row['nu']:.3g} dissipation={row['dissipation']:.6g} flux={row['flux']:.6g}")
        elif ns.command == "lp-analyze":
            res = cmd_lp_analyze(ns.input, ns.out, ns.k0, ns.eta)
            print(f"C_energy mean {res['hypothesis']['C_energy_mean']:.6g}")
        elif ns.command == "verify":
            return cmd_verify(ns.level)
        elif ns.command == "report":
            code, _ = cmd_report(ns.plan, ns.out)
            return code
    except ConfigError as exc:
        print(f"cascade2d: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ResolutionError, FieldError, FloatingPointError) as exc:
        print(f"cascade2d: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"cascade2d: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
