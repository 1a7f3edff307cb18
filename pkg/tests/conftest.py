from dataclasses import replace

import pytest

from ffsplit import lab
from ffsplit.cli import FIG2_TIMES_MS, FIG4_COUPLING, FIG5_LAMBDA, main
from ffsplit.config import parse_config

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def record():
    """Register one acceptance verdict; printed in the terminal summary."""

    def _record(label: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((label, bool(passed), detail))
        print(f"{label}: {'PASS' if passed else 'FAIL'} - {detail}")
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def default_config():
    return parse_config("protocol: two_bump\n")


@pytest.fixture(scope="session")
def base_scenario(default_config):
    return default_config.scenario()


def _reproduce(cmd: str, tmp_path_factory):
    """Run a reproduce command on the default config; (exit code, out dir)."""
    root = tmp_path_factory.mktemp(cmd)
    cfg = root / "config.yaml"
    cfg.write_text("protocol: two_bump\n")
    out = root / "out"
    return main([cmd, "--config", str(cfg), "--out", str(out)]), out


def _reports(path, protocol: str) -> list[lab.FidelityReport]:
    names = {"lambda": "lam", "tf": "t_f", "gN": "g", "sudden_metric": "sudden",
             "adiabatic_metric": "adiabatic"}
    out = []
    for row in lab.read_sweep_csv(path):
        kw = {names.get(k, k): v for k, v in row.items()}
        out.append(lab.FidelityReport(protocol=protocol, **kw))
    return out


@pytest.fixture(scope="session")
def fig2_runs(default_config, base_scenario, tmp_path_factory):
    """lambda sweeps with two-mode overlay for the three durations, through
    the ``reproduce-fig2`` command."""
    code, out = _reproduce("reproduce-fig2", tmp_path_factory)
    assert code == 0
    runs = {}
    for ms in FIG2_TIMES_MS:
        t_f = default_config.units.to_time(ms * 1e-3)
        scn = replace(base_scenario, t_f=t_f, two_mode=True, criteria=True)
        runs[ms] = (scn, _reports(out / f"fig2_tf{ms:g}ms.csv", "two_bump"))
    return runs


@pytest.fixture(scope="session")
def fig4_run(base_scenario, tmp_path_factory):
    code, out = _reproduce("reproduce-fig4", tmp_path_factory)
    assert code == 0
    scn = replace(base_scenario, protocol="bec", g=FIG4_COUPLING)
    return scn, _reports(out / "fig4.csv", "bec")


@pytest.fixture(scope="session")
def fig5_run(base_scenario, tmp_path_factory):
    code, out = _reproduce("reproduce-fig5", tmp_path_factory)
    assert code == 0
    scn = replace(base_scenario, protocol="bec", lams=(FIG5_LAMBDA,))
    return scn, _reports(out / "fig5.csv", "bec")

DURATION_LAMBDA = 0.5 / 249.6


@pytest.fixture(scope="session")
def duration_run(default_config, base_scenario):
    """t_f sweep over the three durations at one fixed lambda."""
    times = [default_config.units.to_time(ms * 1e-3) for ms in FIG2_TIMES_MS]
    scn = replace(base_scenario, lams=(DURATION_LAMBDA,))
    return times, lab.sweep("tf", times, scn)
