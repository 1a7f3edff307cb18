import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import argrelmin

from ffsplit import lab
from ffsplit.cli import lambda_grid, main
from ffsplit.config import ConfigError, Quantity, parse_config, serialize, with_overrides


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParse:
    def test_minimal_defaults(self, default_config):
        c = default_config
        assert c.protocol == "two_bump"
        assert c.a == Quantity(4.0, "um")
        assert c.omega == Quantity(780.0, "rad/s")
        assert c.t_f == Quantity(320.0, "ms")
        assert c.lams == (0.0,)

    def test_dimensionless_conversion(self, default_config):
        assert default_config.t_f_dimensionless == pytest.approx(249.6, abs=1e-9)
        assert default_config.units.length == pytest.approx(0.96897e-6, rel=1e-4)
        assert default_config.a_dimensionless == pytest.approx(4.128, abs=1e-3)
        assert default_config.scenario().a == pytest.approx(default_config.a_dimensionless)

    def test_bare_numbers_are_dimensionless(self):
        c = parse_config("protocol: bec\na: 4.126\nt_f: 15.6\ng: 1.38\n")
        assert c.a_dimensionless == 4.126 and c.t_f_dimensionless == 15.6
        assert c.scenario().g == 1.38

    @pytest.mark.parametrize("text, key", [
        ("a: 4 um\n", "protocol"),
        ("protocol: two_bump\nalpha: 1\n", "alpha"),
        ("protocol: two_bump\nresolution: {nx: 5}\n", "resolution.nx"),
        ("protocol: two_bump\nt_f: 320 um\n", "t_f"),
        ("protocol: two_bump\nomega: 780\n", "omega"),
        ("protocol: two_bump\nmass: 3 furlong\n", "mass"),
        ("protocol: two_wells\n", "protocol"),
        ("protocol: two_bump\nlambda: [-0.1]\n", "lambda"),
        ("protocol: two_bump\nresolution: {n_x: 512}\n", "resolution.n_x"),
        ("protocol: two_bump\ntoggles: {two_mode: 1}\n", "toggles.two_mode"),
        ("protocol: [two_bump\n", "<syntax>"),
    ])
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.key == key

    def test_tf_sweep_values_take_units(self):
        c = parse_config("protocol: two_bump\nsweep: {axis: tf, values: [20 ms, 90 ms, 320 ms]}\n")
        assert np.allclose(c.sweep_points(), [15.6, 70.2, 249.6])

    def test_overrides(self, default_config):
        assert with_overrides(default_config, g=0.5).g == 0.5
        with pytest.raises(ConfigError):
            with_overrides(default_config, colour="red")


class TestRoundTrip:
    def test_full_config(self):
        text = ("protocol: bec\na: 3.5 um\nomega: 800 1/s\nmass: 86.9 amu\nt_f: 90 ms\n"
                "gamma: 1.2\ng: 0.75\nlambda: [0.0, 0.01]\n"
                "resolution: {half_width: 10.0, n_x: 257, n_t: 1000, dt: 0.002}\n"
                "toggles: {two_mode: true, criteria: true, initial: unperturbed}\n"
                "sweep: {axis: tf, values: [20 ms, 40 ms]}\noutput: {dir: results, dump_stride: 8}\n")
        c = parse_config(text)
        assert parse_config(serialize(c)) == c

    @settings(max_examples=60, deadline=None)
    @given(
        protocol=st.sampled_from(["two_bump", "three_term", "bec"]),
        a=st.floats(0.1, 20.0, allow_nan=False),
        unit=st.sampled_from(["um", "nm", "mm", ""]),
        t_f=st.floats(1e-3, 1e3, allow_nan=False),
        g=st.floats(0.0, 5.0),
        lams=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5),
        n_x=st.integers(2, 600).map(lambda k: 2 * k + 1),
        two_mode=st.booleans(),
    )
    def test_parse_serialize_parse(self, protocol, a, unit, t_f, g, lams, n_x, two_mode):
        a_text = f"{a!r} {unit}".strip()
        text = (f"protocol: {protocol}\na: {a_text}\nt_f: {t_f!r} ms\ng: {g!r}\n"
                f"lambda: {lams!r}\nresolution: {{n_x: {n_x}}}\n"
                f"toggles: {{two_mode: {str(two_mode).lower()}}}\n")
        c = parse_config(text)
        assert parse_config(serialize(c)) == c


QUICK_CFG = ("protocol: two_bump\na: 4.126\nt_f: 15.6\nresolution: {n_t: 400}\n")


class TestCli:
    def test_design_writes_y_shaped_potential(self, tmp_path):
        cfg = write(tmp_path, "protocol: two_bump\nresolution: {n_t: 40}\n")
        out = tmp_path / "design"
        assert main(["design", "--config", cfg, "--out", str(out)]) == 0
        data = np.loadtxt(out / "potential.csv", delimiter=",", skiprows=1)
        assert (out / "potential.csv").read_text().startswith("t,x,V\n")
        last = data[data[:, 0] == data[:, 0].max()]
        x, V = last[:, 1], last[:, 2]
        core = np.abs(x) < 7
        mins = argrelmin(V[core])[0]
        assert len(mins) == 2
        assert V[np.argmin(np.abs(x))] > V[core][mins].max()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["mesh"]["n_t"] == 40
        assert json.loads((out / "endpoint.json").read_text())["ok"]
        assert (out / "potential.bin").stat().st_size == 16 + 8 * 41 * 513

    def test_sweep_zero(self, tmp_path):
        cfg = write(tmp_path, QUICK_CFG)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        rows = lab.read_sweep_csv(out / "sweep.csv")
        assert len(rows) == 1 and rows[0]["F_S"] == pytest.approx(1.0, abs=1e-9)
        assert json.loads((out / "summary.json").read_text())["failed"] == 0

    def test_deterministic_across_threads(self, tmp_path):
        cfg = write(tmp_path, QUICK_CFG + "sweep: {values: [0.0, 1.0e-4, 1.0e-3, 0.01, 0.1, "
                                          "0.2, 0.3, 0.4, 0.5]}\n")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
        assert main(["sweep", "--config", cfg, "--out", str(b), "--threads", "2"]) == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_evolve_with_dump(self, tmp_path):
        cfg = write(tmp_path, QUICK_CFG + "lambda: [0.01]\noutput: {dump_stride: 8192}\n")
        out = tmp_path / "evolve"
        assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
        assert lab.read_sweep_csv(out / "evolve.csv")[0]["lambda"] == 0.01
        lines = (out / "density.csv").read_text().splitlines()
        assert lines[0] == "t,x,|psi|^2"
        assert len(lines) == 1 + 5 * 513

    def test_twomode(self, tmp_path):
        cfg = write(tmp_path, QUICK_CFG + "lambda: [0.0, 0.01]\n")
        out = tmp_path / "tm"
        assert main(["twomode", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        # finite-difference error of order (design step)^2 on this coarse mesh
        assert summary["connection_max"] < 1e-3
        assert summary["delta_final"] < summary["delta_initial"]
        rows = lab.read_sweep_csv(out / "twomode_fidelities.csv")
        assert rows[0]["F_S_2m"] == pytest.approx(1.0) and rows[0]["F_S"] is None
        assert (out / "twomode.csv").read_text().startswith("t,delta,lambda_prime,V0,E_minus,E_plus")

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, "protocol: two_bump\nbogus: 1\n")
        out = tmp_path / "bad"
        assert main(["design", "--config", cfg, "--out", str(out)]) == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["exit_code"] == 2 and record["key"] == "bogus"
        assert json.loads((out / "error.json").read_text()) == record

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["design", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_bad_thread_count(self, tmp_path):
        cfg = write(tmp_path, QUICK_CFG)
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--threads", "0"]) == 2

    def test_numerical_failure_exit_code(self, tmp_path, capsys, monkeypatch):
        def boom(scn):
            raise FloatingPointError("solver blew up")

        monkeypatch.setattr(lab, "design_for", boom)
        cfg = write(tmp_path, QUICK_CFG)
        out = tmp_path / "fail"
        assert main(["design", "--config", cfg, "--out", str(out)]) == 3
        record = json.loads(capsys.readouterr().err.strip())
        assert record == {"status": "error", "exit_code": 3, "type": "FloatingPointError",
                          "message": "solver blew up"}
        assert (out / "error.json").exists()

    def test_failed_sweep_rows_exit_three(self, tmp_path, monkeypatch):
        def boom(scn, lams=None, profile=None):
            raise FloatingPointError("row failure")

        monkeypatch.setattr(lab, "run_batch", boom)
        cfg = write(tmp_path, QUICK_CFG)
        out = tmp_path / "rows"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--threads", "1"]) == 3
        rows = lab.read_sweep_csv(out / "sweep.csv")
        assert rows[0]["F_S"] is not None and np.isnan(rows[0]["F_S"])

    def test_lambda_grid(self):
        grid = lambda_grid(249.6)
        assert grid[0] == 0.0 and np.all(np.diff(grid) > 0)
        assert grid[-1] == pytest.approx(25 * 2 / 249.6)
        assert grid.size == 32

    def test_console_script(self):
        import shutil
        import subprocess

        exe = shutil.which("ffsplit")
        assert exe is not None
        res = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "reproduce-fig2" in res.stdout
