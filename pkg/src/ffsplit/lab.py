"""Perturbed splitting experiments, fidelity suite and parameter sweeps.

A scenario fixes the protocol, its physical parameters and the numerical
resolution. Designs are cached per process, so a lambda sweep designs the
potential once and propagates all perturbation strengths as one batch.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import twomode
from .designer import PotentialTrace, design
from .numerics import Grid, TimeMesh, overlap
from .protocols import bec_interpolation, three_term, two_bump
from .solver import DEFAULT_DT, lowest_eigenpairs, propagate

PROTOCOLS = ("two_bump", "three_term", "bec")
MIN_STEPS = 2**15
CHUNK = 8

CSV_HEADER = ["lambda", "tf", "gN", "F_S", "F_D0", "F_D", "F_I",
              "F_S_2m", "F_D0_2m", "F_D_2m", "sudden_metric", "adiabatic_metric"]


@dataclass(frozen=True)
class Scenario:
    """Everything that determines one splitting experiment, in oscillator
    units. ``lams`` is the list of step heights run against one design."""

    protocol: str = "two_bump"
    a: float = 4.126
    gamma: float = 1.0
    t_f: float = 249.6
    g: float = 0.0
    lams: tuple = (0.0,)
    half_width: float = 12.0
    n_x: int = 513
    n_t: int = 4000
    dt: float | None = None
    initial: str = "perturbed"
    two_mode: bool = False
    criteria: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.initial not in ("perturbed", "unperturbed"):
            raise ValueError(f"unknown initial state {self.initial!r}")
        if any(lam < 0 for lam in self.lams):
            raise ValueError("lambda must be non-negative")
        object.__setattr__(self, "lams", tuple(float(v) for v in self.lams))

    @property
    def grid(self) -> Grid:
        return Grid(self.half_width, self.n_x)

    @property
    def mesh(self) -> TimeMesh:
        return TimeMesh(self.t_f, self.n_t)

    @property
    def time_step(self) -> float:
        if self.dt is not None:
            return self.dt
        return min(DEFAULT_DT, self.t_f / MIN_STEPS)

    def scaled(self, k: int) -> "Scenario":
        """Resolution multiplied by ``k`` in space and time."""
        if k < 1:
            raise ValueError("resolution scale must be >= 1")
        return replace(self, n_x=(self.n_x - 1) * k + 1, n_t=self.n_t * k,
                       dt=self.time_step / k)

    def design_key(self) -> tuple:
        return (self.protocol, self.a, self.gamma, self.t_f, self.g,
                self.half_width, self.n_x, self.n_t)


@dataclass
class FidelityReport:
    lam: float
    t_f: float
    g: float
    protocol: str
    F_S: float | None = None
    F_D0: float | None = None
    F_D: float | None = None
    F_I: float | None = None
    F_S_2m: float | None = None
    F_D0_2m: float | None = None
    F_D_2m: float | None = None
    sudden: float | None = None
    adiabatic: float | None = None
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> list[str]:
        vals = [self.lam, self.t_f, self.g, self.F_S, self.F_D0, self.F_D, self.F_I,
                self.F_S_2m, self.F_D0_2m, self.F_D_2m, self.sudden, self.adiabatic]
        return ["" if v is None else repr(float(v)) for v in vals]


def step(grid: Grid) -> np.ndarray:
    """Heaviside step with theta(0) = 1/2."""
    return twomode.step(grid)


def perturb(trace: PotentialTrace, lam: float) -> PotentialTrace:
    if lam < 0:
        raise ValueError("lambda must be non-negative; mirror the grid instead")
    return trace.with_offset(lam * step(trace.grid))


def condensate_profiles(grid: Grid, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Harmonic-trap ground states for coupling g and g/2."""
    V = 0.5 * grid.x**2
    full = lowest_eigenpairs(V, grid, 1, g)[0].state
    half = lowest_eigenpairs(V, grid, 1, 0.5 * g, guess=full)[0].state
    return full, half


@lru_cache(maxsize=8)
def _design_cached(key: tuple):
    protocol, a, gamma, t_f, g, half_width, n_x, n_t = key
    grid, mesh = Grid(half_width, n_x), TimeMesh(t_f, n_t)
    if protocol == "two_bump":
        prot = two_bump(a, gamma, t_f)
    elif protocol == "three_term":
        prot = three_term(a, gamma, t_f)
    else:
        chi_n, chi_half = condensate_profiles(grid, g)
        prot = bec_interpolation(chi_n, chi_half, grid, a, t_f, g)
    return design(prot, grid, mesh, g)


def design_for(scn: Scenario):
    """(trace, phase, endpoint report) for the scenario, cached per process."""
    return _design_cached(scn.design_key())


@lru_cache(maxsize=8)
def _two_mode_cached(key: tuple):
    trace = _design_cached(key)[0]
    return twomode.extract(trace)[0]


def two_mode_system(scn: Scenario) -> twomode.TwoModeSystem:
    if scn.g != 0:
        raise ValueError("the two-mode reduction is defined for g = 0 only")
    return _two_mode_cached(scn.design_key())


def _ground(V, grid, g, guess=None):
    return lowest_eigenpairs(V, grid, 1, g, guess)[0].state


def run_batch(scn: Scenario, lams=None, profile=None) -> list[FidelityReport]:
    """Propagate every lambda of the scenario in one batch.

    ``profile`` replaces the step as the shape of the static perturbation;
    it is an extension hook and defaults to the step.
    """
    lams = np.asarray(scn.lams if lams is None else lams, dtype=float)
    trace = design_for(scn)[0]
    grid, g = trace.grid, scn.g
    shape = step(grid) if profile is None else np.asarray(profile, dtype=float)

    V0, Vf = trace.values[0], trace.values[-1]
    g00 = _ground(V0, grid, g)
    g0f = _ground(Vf, grid, g)
    gl0 = np.array([_ground(V0 + lam * shape, grid, g, g00) for lam in lams])
    glf = np.array([_ground(Vf + lam * shape, grid, g, g0f) for lam in lams])
    psi0 = gl0 if scn.initial == "perturbed" else np.tile(g00, (lams.size, 1))

    psi = propagate(psi0, trace, g, dt=scn.time_step, offsets=lams[:, None] * shape[None, :])
    psi = np.atleast_2d(psi)

    left = grid.x < 0
    reports = []
    for i, lam in enumerate(lams):
        rep = FidelityReport(float(lam), scn.t_f, scn.g, scn.protocol)
        rep.F_S = float(overlap(g0f, glf[i], grid))
        rep.F_D0 = float(overlap(g0f, psi[i], grid))
        rep.F_D = float(overlap(psi[i], glf[i], grid))
        rep.F_I = float(overlap(gl0[i], g00, grid))
        rep.diagnostics = {
            "final_norm": float(np.sqrt(np.sum(np.abs(psi[i]) ** 2 * grid.weights))),
            "left_population_target": float(np.sum(glf[i][left] ** 2 * grid.weights[left])),
        }
        reports.append(rep)

    if (scn.two_mode or scn.criteria) and scn.g == 0 and profile is None:
        system = two_mode_system(scn)
        if scn.two_mode:
            fid = twomode.run_two_mode(system, lams, scn.initial)
            for i, rep in enumerate(reports):
                rep.F_S_2m = float(fid["F_S"][i])
                rep.F_D0_2m = float(fid["F_D0"][i])
                rep.F_D_2m = float(fid["F_D"][i])
        if scn.criteria:
            for rep in reports:
                rep.sudden = twomode.sudden_metric(rep.lam, scn.t_f)
                rep.adiabatic = twomode.adiabatic_metric(system, rep.lam)
    elif scn.criteria:
        for rep in reports:
            rep.sudden = twomode.sudden_metric(rep.lam, scn.t_f)
    return reports


def evolve_with_dump(scn: Scenario, lam: float, fh, stride: int):
    """Propagate one perturbed run and stream |psi|^2 snapshots to ``fh``."""
    trace = design_for(scn)[0]
    grid, g = trace.grid, scn.g
    shape = step(grid)
    V0 = trace.values[0]
    g00 = _ground(V0, grid, g)
    psi0 = _ground(V0 + lam * shape, grid, g, g00) if scn.initial == "perturbed" else g00
    return propagate(psi0, trace, g, dt=scn.time_step, offsets=(lam * shape)[None, :],
                     dump=fh, dump_stride=stride)


def run_scenario(scn: Scenario, lam: float | None = None) -> FidelityReport:
    """Single-lambda experiment (the first scenario lambda by default)."""
    lam = scn.lams[0] if lam is None else lam
    return run_batch(scn, [lam])[0]


def _failed(scn: Scenario, lams, exc: Exception) -> list[FidelityReport]:
    msg = f"{type(exc).__name__}: {exc}"
    nan = math.nan
    return [FidelityReport(float(lam), scn.t_f, scn.g, scn.protocol, nan, nan, nan, nan, error=msg)
            for lam in lams]


def _run_guarded(scn: Scenario) -> list[FidelityReport]:
    try:
        return run_batch(scn)
    except Exception as exc:  # noqa: BLE001 - rows record their own failure
        if len(scn.lams) == 1:
            return _failed(scn, scn.lams, exc)
    # isolate the failing rows
    out = []
    for lam in scn.lams:
        try:
            out.extend(run_batch(replace(scn, lams=(lam,))))
        except Exception as exc:  # noqa: BLE001
            out.extend(_failed(scn, [lam], exc))
    return out


def _chunks(values, size: int = CHUNK):
    # fixed chunking keeps batch composition, and hence every floating-point
    # operation, independent of the worker count
    return [tuple(values[i:i + size]) for i in range(0, len(values), size)]


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("FFSPLIT_THREADS")
    return max(1, int(env)) if env else 1


def sweep(axis: str, values, fixed: Scenario, threads: int | None = None) -> list[FidelityReport]:
    """One report per value (times the fixed lambda list for the t_f and g
    axes). Rows that fail carry ``error`` and NaN fidelities; the sweep
    continues. Output order follows ``values``.
    """
    values = [float(v) for v in values]
    if not values:
        raise ValueError("empty sweep")
    if not all(np.isfinite(values)):
        raise ValueError("sweep values must be finite")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be sorted")
    if axis == "lambda":
        tasks = [replace(fixed, lams=c) for c in _chunks(values)]
    elif axis == "tf":
        tasks = [replace(fixed, t_f=v) for v in values]
    elif axis == "g":
        tasks = [replace(fixed, g=v) for v in values]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")

    n = thread_count(threads)
    if n == 1 or len(tasks) == 1:
        results = [_run_guarded(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_guarded, tasks))
    return [rep for chunk in results for rep in chunk]


def write_sweep_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep in reports:
            w.writerow(rep.csv_row())


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (float(v) if v != "" else None) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def summary(reports, scn: Scenario, extra: dict | None = None) -> dict:
    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    rows = []
    for rep in reports:
        d = asdict(rep)
        rows.append({k: clean(v) for k, v in d.items()})
    return {
        "scenario": asdict(scn),
        "resolution": {"n_x": scn.n_x, "half_width": scn.half_width, "n_t": scn.n_t,
                       "dt": scn.time_step},
        "rows": rows,
        "failed": sum(not r.ok for r in reports),
        **(extra or {}),
    }


def write_summary(reports, scn: Scenario, path, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(summary(reports, scn, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")
