"""Shared discretization substrate: units, grids, quadrature and derivatives.

Everything downstream works in oscillator units (hbar = m = omega = 1).
Fields are plain numpy arrays sampled on a :class:`Grid`; the last axis is
always the spatial one so that stacks of time slices broadcast naturally.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import constants
from scipy.integrate import cumulative_simpson, cumulative_trapezoid


class DimensionError(ValueError):
    """Field length does not match the grid it is used with."""


@dataclass(frozen=True)
class Units:
    """Oscillator unit system for a particle of mass ``mass`` (kg) in a trap
    of angular frequency ``omega`` (rad/s)."""

    mass: float = 1.44e-25
    omega: float = 780.0

    @property
    def length(self) -> float:
        """Oscillator length a_ho in metres."""
        return float(np.sqrt(constants.hbar / (self.mass * self.omega)))

    @property
    def energy(self) -> float:
        return constants.hbar * self.omega

    @property
    def time(self) -> float:
        return 1.0 / self.omega

    def to_length(self, metres: float) -> float:
        return metres / self.length

    def from_length(self, value: float) -> float:
        return value * self.length

    def to_time(self, seconds: float) -> float:
        return seconds / self.time

    def from_time(self, value: float) -> float:
        return value * self.time

    def to_energy(self, joules: float) -> float:
        return joules / self.energy

    def from_energy(self, value: float) -> float:
        return value * self.energy


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid on [-half_width, half_width] with an odd number
    of nodes, so that x = 0 is always a node."""

    half_width: float = 12.0
    n: int = 513

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"grid needs an odd node count >= 3, got {self.n}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.half_width, self.half_width, self.n)
        x[self.n // 2] = 0.0
        # enforce exact mirror symmetry of the node coordinates
        x[self.n // 2 + 1:] = -x[: self.n // 2][::-1]
        x.flags.writeable = False
        return x

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def center(self) -> int:
        return self.n // 2

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the periodic extension (FFT ordering)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        k.flags.writeable = False
        return k

    def refined(self) -> "Grid":
        """Same box, half the spacing."""
        return Grid(self.half_width, 2 * self.n - 1)


@dataclass(frozen=True)
class TimeMesh:
    """Uniform time mesh t_k = k * duration / steps, k = 0..steps."""

    duration: float
    steps: int = 4000

    def __post_init__(self):
        if self.duration <= 0 or self.steps < 1:
            raise ValueError("time mesh needs positive duration and >= 1 step")

    @cached_property
    def t(self) -> np.ndarray:
        t = self.duration * np.arange(self.steps + 1) / self.steps
        t.flags.writeable = False
        return t

    @property
    def dt(self) -> float:
        return self.duration / self.steps

    @property
    def s(self) -> np.ndarray:
        return self.t / self.duration


def _check(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-1] != grid.n:
        raise DimensionError(f"field has {f.shape[-1]} nodes, grid has {grid.n}")
    return f


def inner(a, b, grid: Grid) -> complex:
    """Trapezoidal approximation of the integral of conj(a) * b."""
    a = _check(a, grid)
    b = _check(b, grid)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.sum(np.conj(a) * b * grid.weights, axis=-1)


def norm(f, grid: Grid):
    f = _check(f, grid)
    return np.sqrt(np.sum(np.abs(f) ** 2 * grid.weights, axis=-1))


def normalize(f, grid: Grid) -> np.ndarray:
    f = _check(f, grid)
    return f / np.expand_dims(norm(f, grid), -1)


def overlap(a, b, grid: Grid) -> float:
    """Modulus of the inner product; insensitive to global phases."""
    return np.abs(inner(a, b, grid))


def second_derivative(f, grid: Grid) -> np.ndarray:
    """Five-point second difference along the last axis.

    Nodes 1 and n-2 fall back to the three-point stencil and the end nodes
    use a one-sided four-point formula, so the boundary is O(dx^2).
    """
    f = _check(f, grid)
    if grid.n < 5:
        raise DimensionError("five-point stencil needs at least 5 nodes")
    h2 = grid.dx**2
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    out[..., 2:-2] = (
        -f[..., :-4] + 16 * f[..., 1:-3] - 30 * f[..., 2:-2] + 16 * f[..., 3:-1] - f[..., 4:]
    ) / (12 * h2)
    out[..., 1] = (f[..., 0] - 2 * f[..., 1] + f[..., 2]) / h2
    out[..., -2] = (f[..., -3] - 2 * f[..., -2] + f[..., -1]) / h2
    out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / h2
    out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / h2
    return out


def cumulative_integral(f, grid: Grid, method: str = "trapezoid") -> np.ndarray:
    """Running integral from the left edge, F(-L) = 0.

    ``method="simpson"`` integrates outward from x = 0 with cumulative
    Simpson weights and re-anchors at the left edge. It is fourth order and
    maps odd integrands to exactly even antiderivatives.
    """
    f = _check(f, grid)
    if method == "trapezoid":
        return cumulative_trapezoid(f, dx=grid.dx, axis=-1, initial=0.0)
    if method != "simpson":
        raise ValueError(f"unknown method {method!r}")
    c = grid.center
    right = cumulative_simpson(f[..., c:], dx=grid.dx, axis=-1, initial=0.0)
    left = -cumulative_simpson(f[..., c::-1], dx=grid.dx, axis=-1, initial=0.0)[..., ::-1]
    out = np.concatenate([left[..., :-1], right], axis=-1)
    return out - out[..., :1]


def kinetic_bands(grid: Grid) -> np.ndarray:
    """Upper-band storage (scipy ``eig_banded`` layout) of -1/2 d^2/dx^2 with
    the five-point stencil and zero Dirichlet data outside the box."""
    h2 = grid.dx**2
    bands = np.zeros((3, grid.n))
    bands[0, 2:] = 1.0 / (24 * h2)
    bands[1, 1:] = -2.0 / (3 * h2)
    bands[2, :] = 5.0 / (4 * h2)
    return bands


def apply_kinetic(f, grid: Grid) -> np.ndarray:
    """-1/2 f'' with the same five-point Dirichlet operator as ``kinetic_bands``."""
    f = _check(f, grid)
    h2 = grid.dx**2
    pad = np.zeros(f.shape[:-1] + (grid.n + 4,), dtype=f.dtype)
    pad[..., 2:-2] = f
    lap = (
        -pad[..., :-4] + 16 * pad[..., 1:-3] - 30 * pad[..., 2:-2] + 16 * pad[..., 3:-1] - pad[..., 4:]
    ) / (12 * h2)
    return -0.5 * lap


def kinetic_symbol(grid: Grid) -> np.ndarray:
    """Fourier symbol of the five-point kinetic operator on the periodic
    extension of the grid. Used by the split-step propagator so that time
    evolution and the stationary solvers share one discrete Hamiltonian."""
    theta = grid.wavenumbers * grid.dx
    return (1.25 - (4.0 / 3.0) * np.cos(theta) + (1.0 / 12.0) * np.cos(2 * theta)) / grid.dx**2


def spectral_shift(f, grid: Grid, shift) -> np.ndarray:
    """Band-limited translation f(x - shift) along the last axis.

    ``shift`` may be an array broadcasting against the leading axes of ``f``.
    Valid while the translated profile stays clear of the box edges.
    """
    f = _check(f, grid)
    shift = np.asarray(shift, dtype=float)[..., None]
    phase = np.exp(-1j * grid.wavenumbers * shift)
    out = np.fft.ifft(np.fft.fft(f, axis=-1) * phase, axis=-1)
    return out.real if np.isrealobj(f) else out


def spectral_derivative(f, grid: Grid, order: int = 1, shift=0.0) -> np.ndarray:
    """d^order/dx^order of f(x - shift), evaluated spectrally."""
    f = _check(f, grid)
    k = grid.wavenumbers
    ik = (1j * k) ** order
    if order % 2 == 1 and grid.n % 2 == 0:
        ik[grid.n // 2] = 0.0
    shift = np.asarray(shift, dtype=float)[..., None]
    out = np.fft.ifft(np.fft.fft(f, axis=-1) * ik * np.exp(-1j * k * shift), axis=-1)
    return out.real if np.isrealobj(f) else out
