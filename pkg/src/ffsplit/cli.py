"""Command-line entry point ``ffsplit``.

Usage::

    ffsplit <cmd> --config <path> [--out <dir>] [--threads N] [--resolution-scale k]

Exit status 0 on success, 2 for configuration errors and 3 for numerical
failures; failures also print a JSON error record on stderr and write it to
``<out>/error.json``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import lab, twomode
from .config import ConfigError, ScenarioConfig, load_config

COMMANDS = ("design", "evolve", "sweep", "twomode",
            "reproduce-fig2", "reproduce-fig4", "reproduce-fig5")

FIG2_TIMES_MS = (20.0, 90.0, 320.0)
FIG4_COUPLING = 1.38
FIG5_LAMBDA = 0.02
FIG5_COUPLINGS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.38)


def lambda_grid(t_f: float, n: int = 31, lo: float = 1e-6, hi: float = 25.0) -> np.ndarray:
    """Zero followed by ``n`` log-spaced values in [lo, hi] * (2 / t_f)."""
    return np.concatenate([[0.0], np.geomspace(lo, hi, n) * 2.0 / t_f])


def _json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _check_rows(reports) -> None:
    failed = [r for r in reports if not r.ok]
    if failed:
        raise RowFailure(f"{len(failed)} of {len(reports)} rows failed; first: {failed[0].error}")


class RowFailure(RuntimeError):
    pass


def cmd_design(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    trace, phase, report = lab.design_for(scn)
    trace.to_csv(out / "potential.csv")
    trace.to_binary(out / "potential.bin")
    trace.write_manifest(out / "manifest.json", cfg.units)
    _json(out / "endpoint.json", {
        "mu_gauge": list(report.mu_gauge), "mu": list(report.mu),
        "residual": list(report.residual), "tolerance": report.tolerance,
        "ok": report.ok, "flux_drift": phase.flux_drift,
    })


def cmd_evolve(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    reports = lab.run_batch(scn)
    lab.write_sweep_csv(reports, out / "evolve.csv")
    lab.write_summary(reports, scn, out / "summary.json")
    if cfg.dump_stride > 0:
        with open(out / "density.csv", "w", newline="") as fh:
            lab.evolve_with_dump(scn, scn.lams[0], fh, cfg.dump_stride)


def cmd_sweep(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    reports = lab.sweep(cfg.sweep_axis, cfg.sweep_points(), scn, threads)
    lab.write_sweep_csv(reports, out / "sweep.csv")
    lab.write_summary(reports, scn, out / "summary.json", {"axis": cfg.sweep_axis})
    _check_rows(reports)


def cmd_twomode(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    system, basis = twomode.extract(lab.design_for(scn)[0])
    system.to_csv(out / "twomode.csv")
    lams = np.asarray(scn.lams)
    fid = twomode.run_two_mode(system, lams, scn.initial)
    reports = []
    for i, lam in enumerate(lams):
        reports.append(lab.FidelityReport(
            float(lam), scn.t_f, scn.g, scn.protocol,
            F_S_2m=float(fid["F_S"][i]), F_D0_2m=float(fid["F_D0"][i]), F_D_2m=float(fid["F_D"][i]),
            sudden=twomode.sudden_metric(lam, scn.t_f), adiabatic=twomode.adiabatic_metric(system, lam),
        ))
    lab.write_sweep_csv(reports, out / "twomode_fidelities.csv")
    K = twomode.connection_matrix(basis)
    lab.write_summary(reports, scn, out / "summary.json", {
        "delta_initial": system.delta_initial, "delta_final": system.delta_final,
        "connection_max": float(np.abs(K).max()),
        "delta_route_mismatch": float(np.max(np.abs(system.delta_cross - system.delta))),
    })


def cmd_fig2(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    base = replace(scn, protocol="two_bump", g=0.0, two_mode=True, criteria=True)
    extra = {}
    failed = []
    for ms in FIG2_TIMES_MS:
        t_f = cfg.units.to_time(ms * 1e-3)
        run = replace(base, t_f=t_f)
        reports = lab.sweep("lambda", lambda_grid(t_f), run, threads)
        lab.write_sweep_csv(reports, out / f"fig2_tf{ms:g}ms.csv")
        system = lab.two_mode_system(run)
        extra[f"{ms:g}ms"] = {"t_f": t_f, "delta_final": system.delta_final,
                              "plateau_marker": 0.2 / t_f}
        failed += [r for r in reports if not r.ok]
    _json(out / "fig2_summary.json", {"recipe": "fig2", "times_ms": list(FIG2_TIMES_MS),
                                      "runs": extra, "failed": len(failed)})
    _check_rows(failed)


def _plateau_edge(reports, level: float = 0.99) -> float:
    """Largest lambda up to which every F_D0 stays at or above ``level``."""
    edge = 0.0
    for r in sorted(reports, key=lambda r: r.lam):
        if r.F_D0 is None or not r.F_D0 >= level:
            break
        edge = r.lam
    return edge


def cmd_fig4(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    run = replace(scn, protocol="bec", g=FIG4_COUPLING, two_mode=False, criteria=True)
    reports = lab.sweep("lambda", lambda_grid(run.t_f), run, threads)
    lab.write_sweep_csv(reports, out / "fig4.csv")
    _json(out / "fig4_summary.json", {"recipe": "fig4", "g": FIG4_COUPLING, "t_f": run.t_f,
                                      "plateau_edge_0.99": _plateau_edge(reports),
                                      "failed": sum(not r.ok for r in reports)})
    _check_rows(reports)


def cmd_fig5(cfg: ScenarioConfig, scn: lab.Scenario, out: Path, threads: int) -> None:
    run = replace(scn, protocol="bec", lams=(FIG5_LAMBDA,), two_mode=False, criteria=False)
    reports = lab.sweep("g", FIG5_COUPLINGS, run, threads)
    lab.write_sweep_csv(reports, out / "fig5.csv")
    _json(out / "fig5_summary.json", {"recipe": "fig5", "lambda": FIG5_LAMBDA, "t_f": run.t_f,
                                      "failed": sum(not r.ok for r in reports)})
    _check_rows(reports)


HANDLERS = {
    "design": cmd_design, "evolve": cmd_evolve, "sweep": cmd_sweep, "twomode": cmd_twomode,
    "reproduce-fig2": cmd_fig2, "reproduce-fig4": cmd_fig4, "reproduce-fig5": cmd_fig5,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffsplit", description="Fast-forward matter-wave splitting.")
    p.add_argument("cmd", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML scenario file")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes for sweeps (fallback: FFSPLIT_THREADS)")
    p.add_argument("--resolution-scale", type=int, default=1,
                   help="multiply grid and time resolution by k")
    return p


def _fail(out: Path | None, code: int, exc: BaseException) -> int:
    record = {"status": "error", "exit_code": code, "type": type(exc).__name__,
              "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["key"] = exc.key
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config)
        if out is None:
            out = Path(cfg.out_dir)
        scn = cfg.scenario()
        if args.resolution_scale != 1:
            scn = scn.scaled(args.resolution_scale)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
    except (ConfigError, OSError, ValueError) as exc:
        return _fail(out, 2, exc)
    threads = lab.thread_count(args.threads)
    try:
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.cmd](cfg, scn, out, threads)
    except Exception as exc:  # noqa: BLE001 - every module failure maps to exit 3
        return _fail(out, 3, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
