"""Prescribed amplitude histories r(x, t) that the fast-forward inversion
turns into a driving potential.

Each protocol evaluates, for a batch of times, the normalized amplitude,
its second spatial derivative and the density rate d(r^2)/dt. The time
dependence always enters through the smoothstep ramp R(s) = 3s^2 - 2s^3,
which has zero slope at both ends so the endpoint states are stationary.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Grid, norm, spectral_derivative, spectral_shift


@dataclass
class Slices:
    """Protocol evaluated on a grid at one or more times (leading axis)."""

    r: np.ndarray
    r_x: np.ndarray
    r_xx: np.ndarray
    dt_r2: np.ndarray
    z: np.ndarray


def ramp(t, t_f):
    """Smoothstep R(t/t_f) and its time derivative."""
    s = np.asarray(t, dtype=float) / t_f
    return 3 * s**2 - 2 * s**3, 6 * s * (1 - s) / t_f


def gaussian_trajectory(a: float, t, t_f: float):
    """Bump centre x0 = a R(t/t_f) and its velocity."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > t_f):
        raise ValueError(f"time outside [0, {t_f}]")
    R, Rdot = ramp(t, t_f)
    return a * R, a * Rdot


@dataclass
class DensityProtocol:
    """Base class. Subclasses implement ``evaluate(grid, t)``."""

    t_f: float
    name: str = field(init=False, default="protocol")
    symmetric: bool = field(init=False, default=True)

    def evaluate(self, grid: Grid, t) -> Slices:
        raise NotImplementedError

    def amplitude(self, grid: Grid, t) -> np.ndarray:
        return self.evaluate(grid, t).r

    def params(self) -> dict:
        return {"protocol": self.name, "t_f": self.t_f}


def _gauss(x, c, gamma):
    return np.exp(-0.5 * gamma**2 * (x - c) ** 2)


@dataclass
class TwoBump(DensityProtocol):
    """Two Gaussians pulled apart symmetrically along x0(t) = a R(t)."""

    a: float = 4.126
    gamma: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.gamma <= 0:
            raise ValueError("two_bump needs a >= 0 and gamma > 0")
        self.name = "two_bump"

    def z(self, t) -> np.ndarray:
        x0, _ = gaussian_trajectory(self.a, t, self.t_f)
        return (2 * np.sqrt(np.pi) / self.gamma * (1 + np.exp(-(self.gamma * x0) ** 2))) ** -0.5

    def evaluate(self, grid: Grid, t) -> Slices:
        G2 = self.gamma**2
        x = grid.x
        x0, v0 = gaussian_trajectory(self.a, t, self.t_f)
        x0 = np.asarray(x0)[..., None]
        v0 = np.asarray(v0)[..., None]
        g1, g2 = _gauss(x, x0, self.gamma), _gauss(x, -x0, self.gamma)
        dm, dp = x - x0, x + x0
        u = g1 + g2
        u_x = -G2 * (dm * g1 + dp * g2)
        u_xx = G2 * ((G2 * dm**2 - 1) * g1 + (G2 * dp**2 - 1) * g2)
        u_t = G2 * v0 * (dm * g1 - dp * g2)
        e = np.exp(-G2 * x0**2)
        z = (2 * np.sqrt(np.pi) / self.gamma * (1 + e)) ** -0.5
        # d/dt of the squared norm of u, then of z = |u|^-1
        dnorm2 = 2 * np.sqrt(np.pi) / self.gamma * (-2 * G2 * x0 * v0 * e)
        z_t = -0.5 * z**3 * dnorm2
        r = z * u
        r_t = z_t * u + z * u_t
        return Slices(r, z * u_x, z * u_xx, 2 * r * r_t, np.squeeze(z, -1))

    def params(self) -> dict:
        return {**super().params(), "a": self.a, "gamma": self.gamma}


@dataclass
class ThreeTerm(DensityProtocol):
    """Linear mixture of the single Gaussian and the final double Gaussian,
    (1 - R) r(x, 0) + R r(x, t_f); passes through three-bump shapes."""

    a: float = 4.126
    gamma: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.gamma <= 0:
            raise ValueError("three_term needs a >= 0 and gamma > 0")
        self.name = "three_term"

    def _grams(self):
        c = np.sqrt(np.pi) / self.gamma
        G2a2 = (self.gamma * self.a) ** 2
        a00 = c
        a01 = 2 * c * np.exp(-G2a2 / 4)
        a11 = 2 * c * (1 + np.exp(-G2a2))
        return a00, a01, a11

    def evaluate(self, grid: Grid, t) -> Slices:
        G2 = self.gamma**2
        x = grid.x
        R, Rdot = ramp(t, self.t_f)
        R = np.asarray(R)[..., None]
        Rdot = np.asarray(Rdot)[..., None]
        r0 = _gauss(x, 0.0, self.gamma)
        ga, gb = _gauss(x, self.a, self.gamma), _gauss(x, -self.a, self.gamma)
        rf = ga + gb
        r0_xx = G2 * (G2 * x**2 - 1) * r0
        rf_xx = G2 * ((G2 * (x - self.a) ** 2 - 1) * ga + (G2 * (x + self.a) ** 2 - 1) * gb)
        r0_x = -G2 * x * r0
        rf_x = -G2 * ((x - self.a) * ga + (x + self.a) * gb)
        u = (1 - R) * r0 + R * rf
        u_t = Rdot * (rf - r0)
        a00, a01, a11 = self._grams()
        n2 = (1 - R) ** 2 * a00 + 2 * R * (1 - R) * a01 + R**2 * a11
        dn2 = 2 * Rdot * ((1 - R) * (a01 - a00) + R * (a11 - a01))
        z = n2**-0.5
        z_t = -0.5 * z**3 * dn2
        r = z * u
        r_t = z_t * u + z * u_t
        return Slices(
            r,
            z * ((1 - R) * r0_x + R * rf_x),
            z * ((1 - R) * r0_xx + R * rf_xx),
            2 * r * r_t,
            np.squeeze(z, -1),
        )

    def params(self) -> dict:
        return {**super().params(), "a": self.a, "gamma": self.gamma}


@dataclass
class RigidTransport(DensityProtocol):
    """A single Gaussian translated by d R(t). Not a splitting protocol;
    it has closed-form phase and potential and serves as a design check."""

    d: float = 2.0
    gamma: float = 1.0

    def __post_init__(self):
        self.name = "transport"
        self.symmetric = False

    def evaluate(self, grid: Grid, t) -> Slices:
        G2 = self.gamma**2
        x0, v0 = gaussian_trajectory(self.d, t, self.t_f)
        x0 = np.asarray(x0)[..., None]
        v0 = np.asarray(v0)[..., None]
        z = (self.gamma / np.sqrt(np.pi)) ** 0.5
        g = _gauss(grid.x, x0, self.gamma)
        dm = grid.x - x0
        r = z * g
        r_t = z * G2 * v0 * dm * g
        zz = np.full(np.shape(x0)[:-1], z)
        return Slices(r, -G2 * dm * r, G2 * (G2 * dm**2 - 1) * r, 2 * r * r_t, zz)

    def params(self) -> dict:
        return {**super().params(), "d": self.d, "gamma": self.gamma}


def two_bump(a: float, gamma: float, t_f: float) -> TwoBump:
    return TwoBump(t_f=t_f, a=a, gamma=gamma)


def three_term(a: float, gamma: float, t_f: float) -> ThreeTerm:
    return ThreeTerm(t_f=t_f, a=a, gamma=gamma)


@dataclass
class BecInterpolation(DensityProtocol):
    """Condensate splitting: the N-atom ground-state profile morphs into the
    N/2 profile while two displaced copies separate.

    The profiles are tabulated on ``grid``; translations and spatial
    derivatives are taken spectrally, so the profiles must decay well inside
    the box even after displacement by ``a``.
    """

    chi_n: np.ndarray = None
    chi_half: np.ndarray = None
    grid: Grid = None
    a: float = 4.126
    g: float = 0.0

    def __post_init__(self):
        self.name = "bec"
        for label, chi in (("chi_n", self.chi_n), ("chi_half", self.chi_half)):
            chi = np.asarray(chi, dtype=float)
            if chi.shape != (self.grid.n,):
                raise ValueError(f"{label} does not live on the protocol grid")
            if abs(norm(chi, self.grid) - 1) > 1e-6:
                raise ValueError(f"{label} is not unit-normalized")
        self.chi_n = np.asarray(self.chi_n, dtype=float)
        self.chi_half = np.asarray(self.chi_half, dtype=float)

    def evaluate(self, grid: Grid, t) -> Slices:
        if grid != self.grid:
            raise ValueError("BEC protocol is tabulated on a different grid")
        R, Rdot = ramp(t, self.t_f)
        x0, v0 = self.a * R, self.a * Rdot
        R = np.asarray(R)[..., None]
        Rdot = np.asarray(Rdot)[..., None]
        v0 = np.asarray(v0)[..., None]
        f = (1 - R) * self.chi_n + R * self.chi_half
        df = np.broadcast_to(self.chi_half - self.chi_n, f.shape)
        xm, xp = x0, -np.asarray(x0)
        u = spectral_shift(f, grid, xm) + spectral_shift(f, grid, xp)
        u_x = spectral_derivative(f, grid, 1, xm) + spectral_derivative(f, grid, 1, xp)
        u_xx = spectral_derivative(f, grid, 2, xm) + spectral_derivative(f, grid, 2, xp)
        u_t = Rdot * (spectral_shift(df, grid, xm) + spectral_shift(df, grid, xp))
        u_t = u_t - v0 * (spectral_derivative(f, grid, 1, xm) - spectral_derivative(f, grid, 1, xp))
        w = grid.weights
        n2 = np.sum(u * u * w, axis=-1)[..., None]
        dn2 = 2 * np.sum(u * u_t * w, axis=-1)[..., None]
        z = n2**0.5
        r = u / z
        r_t = u_t / z - 0.5 * r * dn2 / n2
        return Slices(r, u_x / z, u_xx / z, 2 * r * r_t, np.squeeze(z, -1))

    def params(self) -> dict:
        return {**super().params(), "a": self.a, "g": self.g}


def bec_interpolation(chi_n, chi_half, grid: Grid, a: float, t_f: float, g: float = 0.0):
    return BecInterpolation(t_f=t_f, chi_n=chi_n, chi_half=chi_half, grid=grid, a=a, g=g)
