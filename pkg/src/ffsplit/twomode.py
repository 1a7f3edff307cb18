"""Moving two-mode reduction of the splitting dynamics.

The lowest two eigenstates of the unperturbed design potential define a
left/right bare basis at every time, L = (g + e)/sqrt(2), R = (g - e)/sqrt(2).
In that basis the Hamiltonian is (1/2) [[lam, -delta], [-delta, -lam]] with
the ordering (R, L); the geometric term of the moving frame vanishes because
L and R are mirror images. Amplitudes are stored as (c_R, c_L).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from .numerics import Grid, apply_kinetic, inner, normalize
from .solver import EigenPair, linear_eigenpairs


class ExtractionError(RuntimeError):
    pass


class ExtractionWarning(UserWarning):
    pass


@dataclass
class BareBasis:
    t: np.ndarray
    left: np.ndarray
    right: np.ndarray
    grid: Grid

    def gram(self, k: int) -> np.ndarray:
        vs = (self.right[k], self.left[k])
        return np.array([[inner(a, b, self.grid).real for b in vs] for a in vs])


@dataclass
class TwoModeSystem:
    t: np.ndarray
    delta: np.ndarray
    e_minus: np.ndarray
    e_plus: np.ndarray
    delta_cross: np.ndarray
    theta_weight: np.ndarray
    v0: np.ndarray
    lam: float = 0.0
    # stationary traps at the two ends: their splittings, and the 2x2 maps
    # from trap amplitudes into the schedule basis at t = 0 (entry) and from
    # the schedule basis into trap amplitudes at t_f (exit)
    delta_initial: float | None = None
    delta_final: float | None = None
    entry: np.ndarray | None = None
    exit: np.ndarray | None = None

    def __post_init__(self):
        if self.delta_initial is None:
            self.delta_initial = float(self.delta[0])
        if self.delta_final is None:
            self.delta_final = float(self.delta[-1])
        if self.entry is None:
            self.entry = np.eye(2)
        if self.exit is None:
            self.exit = np.eye(2)

    @property
    def t_f(self) -> float:
        return float(self.t[-1])

    @property
    def lambda_prime(self) -> np.ndarray:
        return self.lam * self.theta_weight

    @cached_property
    def _log_delta(self) -> PchipInterpolator:
        # monotone in log space keeps the interpolant positive
        return PchipInterpolator(self.t, np.log(self.delta))

    def delta_at(self, t) -> np.ndarray:
        return np.exp(self._log_delta(t))

    def weight_at(self, t) -> np.ndarray:
        return np.interp(t, self.t, self.theta_weight)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "delta", "lambda_prime", "V0", "E_minus", "E_plus"])
            for row in zip(self.t, self.delta, self.lambda_prime, self.v0, self.e_minus, self.e_plus):
                w.writerow([repr(float(v)) for v in row])


def extract_bare_basis(pairs: list[list[EigenPair]], grid: Grid, t, parity: bool = True) -> BareBasis:
    """Bare states from (ground, excited) pairs at each time.

    Sign conventions: the ground state is positive; at the first time the
    excited state is chosen with a negative overlap with the ground state on
    x > 0 (so R sits on the right), later times follow by continuity.

    With ``parity`` the pair is projected onto its even and odd parts before
    the basis is formed. Pairs from a solver that does not resolve parity
    mix the two sectors near degeneracy at roughly rounding error over the
    splitting, which would break the mirror relation between L and R.
    """
    t = np.asarray(t, dtype=float)
    n = len(pairs)
    left = np.empty((n, grid.n))
    right = np.empty((n, grid.n))
    pos = grid.x > 0
    w = grid.weights
    prev = None
    for k, (gs, ex) in enumerate(pairs):
        if ex.energy - gs.energy <= 1e-14 * max(1.0, abs(gs.energy)) and k == 0:
            raise ExtractionError("ground and excited states degenerate at t = 0")
        g0 = gs.state if gs.state.sum() > 0 else -gs.state
        e0 = ex.state.copy()
        if parity:
            g0 = normalize(0.5 * (g0 + g0[::-1]), grid)
            e0 = normalize(0.5 * (e0 - e0[::-1]), grid)
        if prev is None:
            if np.sum(e0[pos] * g0[pos] * w[pos]) > 0:
                e0 = -e0
        elif np.sum(e0 * prev * w) < 0:
            e0 = -e0
        prev = e0
        left[k] = (g0 + e0) / np.sqrt(2)
        right[k] = (g0 - e0) / np.sqrt(2)
    return BareBasis(t, left, right, grid)


def _matrix_element(a, b, V, grid):
    return float(np.sum(a * (apply_kinetic(b, grid) + V * b) * grid.weights))


def extract_delta(pairs, basis: BareBasis, potentials, theta=None, lam: float = 0.0) -> TwoModeSystem:
    """Tunnelling rate from the level splitting, cross-checked against the
    off-diagonal element of T + V + lam theta in the bare basis.

    ``potentials`` are the unperturbed slices matching ``pairs``.
    """
    grid = basis.grid
    if theta is None:
        theta = step(grid)
    em = np.array([p[0].energy for p in pairs])
    ep = np.array([p[1].energy for p in pairs])
    delta = ep - em
    n = len(pairs)
    cross = np.empty(n)
    weight = np.empty(n)
    v0 = np.empty(n)
    for k in range(n):
        V = potentials[k] + lam * theta
        L, R = basis.left[k], basis.right[k]
        cross[k] = -2 * _matrix_element(R, L, V, grid)
        hrr = _matrix_element(R, R, V, grid)
        hll = _matrix_element(L, L, V, grid)
        v0[k] = 0.5 * (hrr + hll)
        weight[k] = np.sum((R**2 - L**2) * theta * grid.weights)
    big = delta > 1e-4
    if np.any(big):
        mismatch = np.max(np.abs(cross[big] - delta[big]) / delta[big])
        if mismatch > 0.05:
            warnings.warn(f"delta routes disagree by {mismatch:.1%}", ExtractionWarning)
    if np.any(delta <= 0):
        raise ExtractionError("non-positive level splitting")
    return TwoModeSystem(basis.t.copy(), delta, em, ep, cross, weight, v0, lam)


def step(grid: Grid) -> np.ndarray:
    return np.heaviside(grid.x, 0.5)


def _basis_map(pair_from, pair_to, grid: Grid) -> np.ndarray:
    """<beta_to|beta_from> for beta in (R, L), signs of ``pair_to`` aligned
    with ``pair_from`` by continuity."""
    basis = extract_bare_basis([pair_from, pair_to], grid, [0.0, 0.0])
    src = np.stack([basis.right[0], basis.left[0]])
    dst = np.stack([basis.right[1], basis.left[1]])
    return dst @ (src * grid.weights).T


def extract(trace, lam: float = 0.0, stride: int = 4, parity: bool = True):
    """Eigen-decompose every ``stride``-th unperturbed slice and build the
    two-mode system. Returns (system, basis).

    The schedule follows the potential felt during the process, so the end
    samples use the one-sided limits when the trace jumps at a boundary;
    the stationary end traps enter through their splittings and the basis
    maps ``entry`` and ``exit``.
    """
    ks = list(range(0, trace.mesh.steps + 1, stride))
    if ks[-1] != trace.mesh.steps:
        ks.append(trace.mesh.steps)
    potentials = [trace.values[k] for k in ks]
    if trace.limits is not None:
        potentials[0], potentials[-1] = trace.limits[0], trace.limits[1]
    pairs = [linear_eigenpairs(V, trace.grid, 2) for V in potentials]
    t = trace.mesh.t[ks]
    basis = extract_bare_basis(pairs, trace.grid, t, parity)
    system = extract_delta(pairs, basis, potentials, step(trace.grid), lam)
    if trace.limits is not None:
        first = linear_eigenpairs(trace.values[0], trace.grid, 2)
        last = linear_eigenpairs(trace.values[-1], trace.grid, 2)
        system.delta_initial = first[1].energy - first[0].energy
        system.delta_final = last[1].energy - last[0].energy
        system.entry = _basis_map(first, pairs[0], trace.grid)
        system.exit = _basis_map(pairs[-1], last, trace.grid)
    return system, basis


def connection_matrix(basis: BareBasis) -> np.ndarray:
    """<beta(t)| d/dt beta'(t)> for beta, beta' in (R, L), by centred
    differences on interior samples. Shape (n - 2, 2, 2)."""
    h = basis.t[2:] - basis.t[:-2]
    vs = np.stack([basis.right, basis.left], axis=1)
    dv = (vs[2:] - vs[:-2]) / h[:, None, None]
    w = basis.grid.weights
    return np.einsum("kax,kbx,x->kab", vs[1:-1], dv, w)


def hamiltonian(delta, lam) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    delta, lam = np.broadcast_arrays(delta, lam)
    H = np.empty(delta.shape + (2, 2))
    H[..., 0, 0] = 0.5 * lam
    H[..., 1, 1] = -0.5 * lam
    H[..., 0, 1] = H[..., 1, 0] = -0.5 * delta
    return H


def analytic_eigensystem(delta, lam):
    """Closed-form eigenvalues and eigenvectors in the (R, L) basis.

    Returns (E_minus, E_plus, alpha, psi_minus, psi_plus) with the mixing
    angle alpha = atan2(delta, lam) in [0, pi].
    """
    delta = np.asarray(delta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any((delta == 0) & (lam == 0)):
        raise ValueError("degenerate two-mode Hamiltonian (delta = lam = 0)")
    rho = np.hypot(lam, delta)
    alpha = np.arctan2(delta, lam)
    c, s = np.cos(alpha / 2), np.sin(alpha / 2)
    psi_minus = np.stack([s, c], axis=-1)
    psi_plus = np.stack([-c, s], axis=-1)
    return -0.5 * rho, 0.5 * rho, alpha, psi_minus, psi_plus


def ground_state(delta, lam) -> np.ndarray:
    return analytic_eigensystem(delta, lam)[3].astype(complex)


def evolve_two_mode(system: TwoModeSystem, c0, lam, steps: int | None = None,
                    use_lambda_prime: bool = False) -> np.ndarray:
    """RK4 integration of i dc/dt = H(t) c from 0 to t_f.

    ``lam`` may be an array; ``c0`` then has shape (len(lam), 2). With
    ``use_lambda_prime`` the bias follows lam * theta_weight(t).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    c = np.array(np.broadcast_to(c0, lam.shape + (2,)), dtype=complex)
    t_f = system.t_f
    rate = 0.5 * np.hypot(np.max(np.abs(lam)), np.max(system.delta))
    if steps is None:
        steps = max(2000, int(np.ceil(t_f * rate / 0.02)))
    h = t_f / steps
    n0 = np.sum(np.abs(c) ** 2, axis=-1)

    def H(t):
        bias = lam * system.weight_at(t) if use_lambda_prime else lam
        return hamiltonian(system.delta_at(t), bias)

    def f(t, y):
        return -1j * np.einsum("...ab,...b->...a", H(t), y)

    for j in range(steps):
        t = j * h
        k1 = f(t, c)
        k2 = f(t + h / 2, c + h / 2 * k1)
        k3 = f(t + h / 2, c + h / 2 * k2)
        k4 = f(t + h, c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    drift = np.max(np.abs(np.sum(np.abs(c) ** 2, axis=-1) - n0))
    if drift > 1e-8:
        raise ArithmeticError(f"two-mode norm drift {drift:.1e}; use more steps")
    return c


def two_mode_fidelities(system: TwoModeSystem, c_final, lam) -> dict:
    """Fidelities against the final trap; ``c_final`` is in trap amplitudes."""
    lam = np.asarray(lam, dtype=float)
    target = ground_state(system.delta_final, lam)
    split = np.array([1.0, 1.0]) / np.sqrt(2)
    c_final = np.asarray(c_final)
    return {
        "F_S": np.abs(target @ split),
        "F_D0": np.abs(c_final @ split),
        "F_D": np.abs(np.sum(np.conj(target) * c_final, axis=-1)),
    }


def run_two_mode(system: TwoModeSystem, lams, initial: str = "perturbed",
                 use_lambda_prime: bool = False) -> dict:
    """Evolve the model for every lam and return fidelity arrays."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if initial == "perturbed":
        bias0 = lams * system.theta_weight[0] if use_lambda_prime else lams
        c0 = ground_state(np.full_like(lams, system.delta_initial), bias0)
    else:
        c0 = np.tile(np.array([1.0, 1.0], dtype=complex) / np.sqrt(2), (lams.size, 1))
    c0 = c0 @ system.entry.T
    cf = evolve_two_mode(system, c0, lams, use_lambda_prime=use_lambda_prime)
    return two_mode_fidelities(system, cf @ system.exit.T, lams)


def sudden_metric(lam: float, t_f: float) -> float:
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return lam * t_f / 2


def sudden_spread(system: TwoModeSystem, lam: float) -> float:
    """Energy uncertainty of the time-averaged moving-frame Hamiltonian in
    the symmetric initial state, computed as |(H - <H>) psi| to avoid
    cancellation."""
    mean_delta = np.trapezoid(system.delta, system.t) / system.t_f
    Hbar = hamiltonian(mean_delta, lam)
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    hpsi = Hbar @ psi
    return float(np.linalg.norm(hpsi - (psi @ hpsi) * psi))


def adiabatic_metric(system: TwoModeSystem, lam: float) -> float:
    if lam == 0:
        return 0.0
    ddot = np.gradient(system.delta, system.t)
    return float(np.max(np.abs(lam * ddot / (2 * (lam**2 + system.delta**2) ** 1.5))))
