"""Fast-forward inversion: from a prescribed amplitude history to the real
potential that drives it exactly.

The phase follows from requiring a real potential, which in one dimension
is the continuity equation d_x(r^2 phi_x) = -d_t(r^2). Integrating the
density rate from the edges (zero flux there) gives the velocity field
phi_x; the potential then follows from the real part of the inverted wave
equation.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import Grid, TimeMesh, Units, apply_kinetic, cumulative_integral, norm
from .protocols import DensityProtocol

RELIABILITY = 1e-12
QUADRATURE = "simpson"
# relative density below which the velocity march does not start
MARCH_FLOOR = 1e-24


class ConsistencyError(RuntimeError):
    """The protocol does not conserve probability."""


@dataclass
class PhaseSolution:
    phi: np.ndarray
    phi_x: np.ndarray
    r: np.ndarray
    reliable: np.ndarray
    grid: Grid
    mesh: TimeMesh
    flux_drift: float = 0.0

    @property
    def phi_dot(self) -> np.ndarray:
        return np.gradient(self.phi, self.mesh.t, axis=0, edge_order=2)

    def chemical_potentials(self) -> tuple[float, float]:
        """-phi_dot at both endpoints, density-weighted (phi is flat there)."""
        pd = self.phi_dot
        w = self.grid.weights
        mu0 = -np.sum(self.r[0] ** 2 * pd[0] * w)
        muf = -np.sum(self.r[-1] ** 2 * pd[-1] * w)
        return float(mu0), float(muf)


@dataclass
class PotentialTrace:
    """Potential on grid x time mesh plus an optional static offset.

    ``offset`` holds time-independent additions such as the step
    perturbation, so perturbed variants share the large ``values`` array.

    Rows 0 and -1 of ``values`` are the stationary boundary traps. When the
    protocol accelerates at a boundary the driving potential jumps there;
    ``limits`` then holds the one-sided values V(0+) and V(t_f-) that the
    propagator uses inside the first and last mesh intervals.
    """

    grid: Grid
    mesh: TimeMesh
    values: np.ndarray
    reliable: np.ndarray | None = None
    offset: np.ndarray | None = None
    limits: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.mesh.steps + 1, self.grid.n)
        if self.values.shape != shape:
            raise ValueError(f"trace shape {self.values.shape} != {shape}")
        if self.offset is None:
            self.offset = np.zeros(self.grid.n)

    @property
    def t_f(self) -> float:
        return self.mesh.duration

    def slice(self, k: int) -> np.ndarray:
        return self.values[k] + self.offset

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time."""
        u = np.clip(t / self.mesh.dt, 0, self.mesh.steps)
        k = min(int(u), self.mesh.steps - 1)
        w = u - k
        return (1 - w) * self.values[k] + w * self.values[k + 1] + self.offset

    def full(self) -> np.ndarray:
        return self.values + self.offset

    def with_offset(self, extra: np.ndarray) -> "PotentialTrace":
        return replace(self, offset=self.offset + extra, meta=dict(self.meta))

    # -- export -------------------------------------------------------------

    def to_csv(self, path) -> None:
        full = self.full()
        t = np.repeat(self.mesh.t, self.grid.n)
        x = np.tile(self.grid.x, self.mesh.steps + 1)
        table = np.column_stack([t, x, full.ravel()])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header="t,x,V", comments="")

    def to_binary(self, path) -> None:
        """n_t and n_x as little-endian int64, then V as float64 rows [t][x]."""
        full = np.ascontiguousarray(self.full(), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qq", *full.shape))
            fh.write(full.tobytes())

    def manifest(self, units: Units | None = None) -> dict:
        units = units or Units()
        return {
            "units": {"mass_kg": units.mass, "omega_rad_s": units.omega,
                      "length_m": units.length, "energy_J": units.energy, "time_s": units.time},
            "grid": {"half_width": self.grid.half_width, "n_x": self.grid.n},
            "mesh": {"t_f": self.mesh.duration, "n_t": self.mesh.steps},
            "reliability_threshold": RELIABILITY,
            **self.meta,
        }

    def write_manifest(self, path, units: Units | None = None) -> None:
        Path(path).write_text(json.dumps(self.manifest(units), indent=2, sort_keys=True))


def read_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    n_t, n_x = struct.unpack("<qq", data[:16])
    return np.frombuffer(data[16:], dtype="<f8").reshape(n_t, n_x)


def _fill_unreliable(values: np.ndarray, reliable: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Constant extension past the outermost reliable nodes, linear across gaps."""
    out = values.copy()
    for k in range(values.shape[0]):
        mask = reliable[k]
        if not mask.all():
            out[k] = np.interp(x, x[mask], values[k, mask])
    return out


def _march_inward(u, q, w, active, h, stop):
    """RK4 on u' = -q - 2 w u from node 0 towards ``stop`` in steps of 2h,
    once from each parity class of nodes; u is updated in place.

    Moving inward the homogeneous mode decays like r^2(start) / r^2(x), so
    the seed values only matter near the start.
    """
    def rate(i, v):
        return -q[:, i] - 2.0 * w[:, i] * v

    for first in (0, 1):
        for j in range(first, stop - 1, 2):
            ok = active[:, j] & active[:, j + 1] & active[:, j + 2]
            if not ok.any():
                continue
            v = u[:, j]
            k1 = rate(j, v)
            k2 = rate(j + 1, v + h * k1)
            k3 = rate(j + 1, v + h * k2)
            k4 = rate(j + 2, v + 2 * h * k3)
            u[:, j + 2] = np.where(ok, v + (h / 3.0) * (k1 + 2 * k2 + 2 * k3 + k4), u[:, j + 2])


def _velocity(flux_velocity, sl, grid: Grid) -> np.ndarray:
    """Velocity from the continuity equation written as a linear ODE in
    phi_x with coefficients d_t(r^2)/r^2 and r_x/r; these stay smooth in
    the tails where -flux/r^2 loses relative accuracy."""
    r2 = sl.r**2
    active = (r2 >= MARCH_FLOOR * r2.max(axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = np.where(active, sl.dt_r2 / r2, 0.0)
        w = np.where(active, sl.r_x / sl.r, 0.0)
    # RK4 on the real axis is stable for |step * rate| < 2.78
    active &= np.isfinite(q) & np.isfinite(w) & (4.0 * grid.dx * np.abs(w) <= 2.0)
    c = grid.center
    left = flux_velocity.copy()
    _march_inward(left, q, w, active, grid.dx, c)
    # the right half is the same problem in the reflected frame, where
    # the velocity and r_x/r change sign
    right = -flux_velocity[:, ::-1]
    _march_inward(right, q[:, ::-1], -w[:, ::-1], active[:, ::-1], grid.dx, c)
    right = -right[:, ::-1]
    u = np.empty_like(left)
    u[:, :c] = left[:, :c]
    u[:, c + 1:] = right[:, c + 1:]
    u[:, c] = 0.5 * (left[:, c] + right[:, c])
    return u


def solve_phase(protocol: DensityProtocol, grid: Grid, mesh: TimeMesh,
                threshold: float = RELIABILITY) -> PhaseSolution:
    sl = protocol.evaluate(grid, mesh.t)
    r2 = sl.r**2
    norms = norm(sl.r, grid) ** 2
    flux = cumulative_integral(sl.dt_r2, grid, QUADRATURE)
    drift = float(max(np.max(np.abs(norms - 1)), np.max(np.abs(flux[:, -1]))))
    if drift > 1e-6:
        raise ConsistencyError(f"protocol normalization drift {drift:.2e}")
    # the residual total flux is quadrature error accumulated across the
    # core; removing it in proportion to the cumulative mass leaves the
    # tails untouched and keeps mirror protocols exactly odd
    mass = cumulative_integral(r2, grid, QUADRATURE)
    flux -= flux[:, -1:] * mass / mass[:, -1:]
    reliable = r2 >= threshold * r2.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        seed = np.where(r2 > 0, -flux / r2, 0.0)
    phi_x = np.where(reliable, _velocity(seed, sl, grid), 0.0)
    phi_x = _fill_unreliable(phi_x, reliable, grid.x)
    phi = cumulative_integral(phi_x, grid, QUADRATURE)
    phi -= phi[:, grid.center][:, None]
    return PhaseSolution(phi, phi_x, sl.r, reliable, grid, mesh, drift)


def continuity_residual(protocol: DensityProtocol, phase: PhaseSolution) -> np.ndarray:
    """d_x(r^2 phi_x) + d_t(r^2) on every (t, x), with the divergence taken
    by the five-point first difference; zero where the stencil touches an
    unreliable node or the box edge."""
    sl = protocol.evaluate(phase.grid, phase.mesh.t)
    q = sl.r**2 * phase.phi_x
    h = phase.grid.dx
    div = np.zeros_like(q)
    div[:, 2:-2] = (q[:, :-4] - 8 * q[:, 1:-3] + 8 * q[:, 3:-1] - q[:, 4:]) / (12 * h)
    ok = np.zeros_like(phase.reliable)
    rel = phase.reliable
    ok[:, 2:-2] = rel[:, :-4] & rel[:, 1:-3] & rel[:, 2:-2] & rel[:, 3:-1] & rel[:, 4:]
    return np.where(ok, div + sl.dt_r2, 0.0)


def assemble_potential(protocol: DensityProtocol, phase: PhaseSolution, g: float = 0.0) -> PotentialTrace:
    grid, mesh = phase.grid, phase.mesh
    sl = protocol.evaluate(grid, mesh.t)
    with np.errstate(divide="ignore", invalid="ignore"):
        curv = np.where(phase.reliable, sl.r_xx / sl.r, 0.0)
    phi_dot = phase.phi_dot
    V = -phi_dot + 0.5 * (curv - phase.phi_x**2) - g * sl.r**2
    V = _fill_unreliable(V, phase.reliable, grid.x)
    limits = V[[0, -1]].copy()
    # boundary traps: keep only the uniform part of phi_dot, whose spatial
    # variation is proportional to the (generally nonzero) endpoint acceleration
    w = grid.weights
    for k in (0, -1):
        mean = np.sum(sl.r[k] ** 2 * phi_dot[k] * w)
        stat = V[k] + phi_dot[k] - mean
        V[k] = _fill_unreliable(stat[None], phase.reliable[k][None], grid.x)[0]
    meta = {**protocol.params(), "g": g}
    return PotentialTrace(grid, mesh, V, phase.reliable, limits=limits, meta=meta)


@dataclass
class EndpointReport:
    """Stationarity check of the designed endpoint states.

    ``mu_gauge`` is -phi_dot in the phase gauge phi(0, t) = 0 (which pins
    the energy zero); ``mu`` is the same chemical potential measured from
    the bottom of the potential.
    """

    mu_gauge: tuple[float, float]
    mu: tuple[float, float]
    residual: tuple[float, float]
    tolerance: float

    @property
    def ok(self) -> bool:
        return max(self.residual) <= self.tolerance


def endpoint_consistency(trace: PotentialTrace, phase: PhaseSolution, protocol: DensityProtocol,
                         g: float = 0.0, tolerance: float = 1e-5) -> EndpointReport:
    grid = trace.grid
    mu_g = phase.chemical_potentials()
    res, mu = [], []
    for k, m in zip((0, -1), mu_g):
        r = phase.r[k]
        V = trace.values[k]
        resid = apply_kinetic(r, grid) + (V + g * r**2 - m) * r
        res.append(float(norm(resid, grid)))
        mu.append(m - float(V[phase.reliable[k]].min()))
    return EndpointReport(mu_g, tuple(mu), tuple(res), tolerance)


def design(protocol: DensityProtocol, grid: Grid, mesh: TimeMesh, g: float = 0.0):
    """Convenience pipeline: phase, potential and endpoint report."""
    phase = solve_phase(protocol, grid, mesh)
    trace = assemble_potential(protocol, phase, g)
    return trace, phase, endpoint_consistency(trace, phase, protocol, g)
