import json

import numpy as np
import pytest

from cascade2d import __version__, verify
from cascade2d.cli import main
from cascade2d.grid import lp_norm
from cascade2d.io import read_snapshot


def write(path, text):
    path.write_text(text)
    return path


class TestGen:
    def test_single_mode(self, tmp_path, capsys):
        out = tmp_path / "w.bin"
        assert main(["gen", "--kind", "single_mode", "--n", "64", "--out", str(out)]) == 0
        w = read_snapshot(out).data
        assert lp_norm(w, 2) == pytest.approx(np.pi * np.sqrt(2), rel=1e-13)
        assert "single_mode" in capsys.readouterr().out

    def test_spec_file_and_params(self, tmp_path):
        spec = write(tmp_path / "g.cfg", "kind = besov_random\nn = 32\nseed = 3\ns = 0.5\n")
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert main(["gen", "--spec", str(spec), "--out", str(a)]) == 0
        assert main(["gen", "--kind", "besov_random", "--n", "32", "--seed", "3",
                     "--param", "s=0.5", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_flag_overrides_file(self, tmp_path):
        spec = write(tmp_path / "g.cfg", "kind = single_mode\nn = 32\nkx = 1\n")
        out = tmp_path / "w.bin"
        assert main(["gen", "--spec", str(spec), "--param", "kx=2", "--out", str(out)]) == 0
        x = np.arange(32) * 2 * np.pi / 32
        assert np.allclose(read_snapshot(out).data[:, 0], np.sin(2 * x), atol=1e-14)

    @pytest.mark.parametrize("argv", [
        ["--kind", "plasma", "--n", "32"],
        ["--kind", "single_mode"],
        ["--kind", "single_mode", "--n", "30"],
        ["--kind", "single_mode", "--n", "32", "--param", "radius=1"],
        ["--kind", "single_mode", "--n", "32", "--param", "kx"],
        ["--kind", "besov_random", "--n", "32", "--param", "s=nine"],
        ["--kind", "besov_random", "--n", "32", "--param", "s=5"],
        ["--spec", "/nonexistent/spec.cfg"],
    ])
    def test_config_errors(self, tmp_path, argv, capsys):
        assert main(["gen", *argv, "--out", str(tmp_path / "w.bin")]) == 2
        assert "config error" in capsys.readouterr().err
        assert not (tmp_path / "w.bin").exists()


@pytest.fixture
def tg_field(tmp_path):
    p = tmp_path / "tg.bin"
    assert main(["gen", "--kind", "taylor_green", "--n", "32", "--out", str(p)]) == 0
    return p


class TestSimulate:
    def test_outputs(self, tmp_path, tg_field):
        cfg = write(tmp_path / "run.cfg", "grid_n = 32\nnu = 0.05\ndt = 0.01\nt_end = 0.1\n"
                    "snapshot_interval = 0.05\n")
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(cfg), "--init", str(tg_field), "--out", str(out)]) == 0
        rep = json.loads((out / "run.json").read_text())
        assert rep["version"] == __version__ and rep["command"] == "simulate"
        assert rep["config"]["nu"] == 0.05 and rep["config"]["dealias"] is True
        assert [s["file"] for s in rep["snapshots"]] == [
            "omega_00000000.bin", "omega_00000005.bin", "omega_00000010.bin"]
        assert rep["enstrophy_balance_max"] < 1e-6
        w = read_snapshot(out / "omega_00000010.bin").data
        x = np.arange(32) * 2 * np.pi / 32
        exact = 2 * np.exp(-0.01) * np.cos(x)[:, None] * np.cos(x)[None, :]
        assert np.abs(w - exact).max() < 1e-12
        assert (out / "audit.csv").read_text().startswith("t,E,Omega,P,dissipation")

    def test_flag_precedence(self, tmp_path, tg_field):
        cfg = write(tmp_path / "run.cfg", "grid_n = 32\nnu = 0.05\ndt = 0.01\nt_end = 0.1\n")
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(cfg), "--nu", "0.2", "--t-end", "0.02",
                     "--init", str(tg_field), "--out", str(out)]) == 0
        rep = json.loads((out / "run.json").read_text())
        assert rep["config"]["nu"] == 0.2 and rep["config"]["t_end"] == 0.02

    @pytest.mark.parametrize("text", ["grid_n = 32\ndt = 0.01\n",  # no t_end
                                      "grid_n = 32\ndt = 0.01\nt_end = 0.1\nbogus = 1\n",
                                      "grid_n = 64\ndt = 0.01\nt_end = 0.1\n",  # wrong n
                                      "grid_n = 32\ndt = 0.01\nt_end = 0.015\n"])
    def test_config_errors(self, tmp_path, tg_field, text):
        cfg = write(tmp_path / "run.cfg", text)
        assert main(["simulate", "--config", str(cfg), "--init", str(tg_field),
                     "--out", str(tmp_path / "run")]) == 2

    def test_missing_init(self, tmp_path):
        assert main(["simulate", "--grid-n", "32", "--dt", "0.01", "--t-end", "0.1",
                     "--init", str(tmp_path / "none.bin"), "--out", str(tmp_path / "r")]) == 2

    def test_numerical_failure(self, tmp_path):
        p = tmp_path / "w.bin"
        main(["gen", "--kind", "single_mode", "--n", "32", "--param", "amplitude=1e7",
              "--param", "kx=3", "--param", "ky=1", "--out", str(p)])
        assert main(["simulate", "--grid-n", "32", "--dt", "1.0", "--t-end", "1.0",
                     "--init", str(p), "--out", str(tmp_path / "r")]) == 3


class TestFluxSweep:
    def test_explicit_eps(self, tmp_path, tg_field):
        out = tmp_path / "flux"
        assert main(["flux-sweep", "--snapshot", str(tg_field), "--out", str(out),
                     "--eps", "1.0,1.5,2.0", "--method", "structure"]) == 0
        rep = json.loads((out / "fit.json").read_text())
        assert rep["curve"]["eps"] == [1.0, 1.5, 2.0]
        assert max(abs(v) for v in rep["curve"]["flux_integral"]) < 1e-12
        lines = (out / "flux.csv").read_text().splitlines()
        assert lines[0] == "eps,flux_integral,flux_abs_integral,method" and len(lines) == 4

    def test_resolution_error(self, tmp_path, tg_field):
        assert main(["flux-sweep", "--snapshot", str(tg_field), "--out", str(tmp_path / "f"),
                     "--eps", "10.0"]) == 3

    @pytest.mark.parametrize("flag", [["--h", "entropy"], ["--method", "fourier"],
                                      ["--support-radius", "4.0"]])
    def test_config_errors(self, tmp_path, tg_field, flag):
        assert main(["flux-sweep", "--snapshot", str(tg_field), "--out", str(tmp_path / "f"),
                     *flag]) == 2

    @pytest.mark.slow
    def test_rate_experiment(self, tmp_path, capsys):
        p = tmp_path / "b.bin"
        assert main(["gen", "--kind", "besov_random", "--n", "512", "--param", "s=0.5",
                     "--seed", "2", "--out", str(p)]) == 0
        assert main(["flux-sweep", "--snapshot", str(p), "--out", str(tmp_path / "f")]) == 0
        fit = json.loads((tmp_path / "f" / "fit.json").read_text())["fit"]
        assert 0.6 <= fit["slope"] <= 1.4
        assert "slope" in capsys.readouterr().out


class TestNuSweep:
    def test_smooth(self, tmp_path):
        p = tmp_path / "w.bin"
        main(["gen", "--kind", "single_mode", "--n", "32", "--out", str(p)])
        out = tmp_path / "nu.json"
        assert main(["nu-sweep", "--init", str(p), "--out", str(out), "--grid-n", "32",
                     "--dt", "0.01", "--t-end", "0.1", "--nu-list", "1e-2,1e-3,0",
                     "--workers", "1"]) == 0
        rep = json.loads(out.read_text())
        d = [r["dissipation"] for r in rep["table"]]
        assert d[0] > d[1] > d[2] == 0
        assert rep["columns"] == ["nu", "dissipation", "flux"]
        assert "workers" not in rep["config"]

    def test_requires_list(self, tmp_path, tg_field):
        assert main(["nu-sweep", "--init", str(tg_field), "--out", str(tmp_path / "x.json"),
                     "--grid-n", "32", "--dt", "0.01", "--t-end", "0.1"]) == 2

    def test_increasing_list(self, tmp_path, tg_field):
        assert main(["nu-sweep", "--init", str(tg_field), "--out", str(tmp_path / "x.json"),
                     "--grid-n", "32", "--dt", "0.01", "--t-end", "0.1",
                     "--nu-list", "1e-3,1e-2"]) == 2


class TestLpAnalyze:
    def test_run_dir(self, tmp_path, tg_field):
        out = tmp_path / "run"
        main(["simulate", "--grid-n", "32", "--nu", "0.05", "--dt", "0.01", "--t-end", "0.05",
              "--init", str(tg_field), "--out", str(out)])
        assert main(["lp-analyze", "--input", str(out), "--out", str(tmp_path / "lp")]) == 0
        rep = json.loads((tmp_path / "lp" / "hypothesis.json").read_text())
        assert rep["hypothesis"]["eta_source"].startswith("measured")
        assert rep["hypothesis"]["k_d"] > 0
        assert len(rep["hypothesis"]["times"]) == 2
        assert (tmp_path / "lp" / "spectrum.csv").read_text().startswith("N,k_band_lo")

    def test_snapshot_needs_eta(self, tmp_path, tg_field):
        assert main(["lp-analyze", "--input", str(tg_field), "--out", str(tmp_path / "lp")]) == 2
        assert main(["lp-analyze", "--input", str(tg_field), "--out", str(tmp_path / "lp"),
                     "--eta", "0.5"]) == 0


class TestVerify:
    def test_quick(self, capsys):
        assert main(["verify"]) == 0
        assert capsys.readouterr().out.count("\nok ") == 6

    def test_failure_exit_code(self, monkeypatch, capsys):
        monkeypatch.setattr(verify, "checks", lambda level: [("bad", lambda: (2.0, 1.0))])
        assert main(["verify"]) == 4
        assert "not ok 1 - bad" in capsys.readouterr().out


PLAN = """\
name = smoke
stages = gen, simulate, flux-sweep, lp-analyze, nu-sweep, verify
gen.kind = besov_random
gen.n = 32
gen.seed = 4
simulate.grid_n = 32
simulate.nu = 0.01
simulate.dt = 0.01
simulate.t_end = 0.05
simulate.snapshot_interval = 0.05
flux-sweep.eps = 1.0,2.0
nu-sweep.grid_n = 32
nu-sweep.dt = 0.01
nu-sweep.t_end = 0.02
nu-sweep.nu_list = 1e-2,1e-3
nu-sweep.eps = 1.0
nu-sweep.workers = 1
"""


class TestReport:
    def test_idempotent(self, tmp_path):
        plan = write(tmp_path / "plan.cfg", PLAN)
        out = tmp_path / "out"
        assert main(["report", "--plan", str(plan), "--out", str(out)]) == 0
        files = sorted(p for p in out.rglob("*") if p.is_file())
        first = {p: p.read_bytes() for p in files}
        assert main(["report", "--plan", str(plan), "--out", str(out)]) == 0
        assert sorted(p for p in out.rglob("*") if p.is_file()) == files
        assert all(p.read_bytes() == first[p] for p in files)
        rep = json.loads((out / "report.json").read_text())
        assert rep["stages"][0] == "gen" and rep["results"]["verify"]["exit_code"] == 0
        assert rep["version"] == __version__ and rep["config"]["gen.kind"] == "besov_random"

    @pytest.mark.parametrize("text", ["name = x\n", "stages = gen, paint\n",
                                      "stages = gen\ncolour = red\n", "stages = flux-sweep\n"])
    def test_bad_plans(self, tmp_path, text):
        plan = write(tmp_path / "plan.cfg", text)
        assert main(["report", "--plan", str(plan), "--out", str(tmp_path / "o")]) == 2
