"""Stationary and time-dependent solvers on the shared five-point
Hamiltonian.

* linear eigenpairs: banded symmetric eigensolver (LAPACK ``?sbevx``);
* Gross-Pitaevskii ground state: backward-Euler imaginary-time flow with
  renormalization; its fixed point is an exact eigenvector of the discrete
  nonlinear Hamiltonian, so the stationary residual is limited only by the
  stopping tolerance, not by the step size;
* real time: Strang split-step with the kinetic factor applied in Fourier
  space using the symbol of the same five-point operator.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded, solveh_banded

from .numerics import Grid, apply_kinetic, inner, kinetic_bands, kinetic_symbol, norm

DEFAULT_DT = 249.6 / 2**17


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class StabilityError(RuntimeError):
    pass


@dataclass
class EigenPair:
    energy: float
    state: np.ndarray
    index: int = 0
    residual: float = 0.0


def _fix_signs(vecs: np.ndarray, grid: Grid) -> np.ndarray:
    # ground state positive; excited states positive-overlapping with the
    # ground state on the left half-line
    g0 = vecs[:, 0]
    if g0.sum() < 0:
        vecs[:, 0] = -g0
    left = grid.x < 0
    w = grid.weights
    for j in range(1, vecs.shape[1]):
        s = np.sum(vecs[left, j] * vecs[left, 0] * w[left])
        if s < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def hamiltonian_bands(V: np.ndarray, grid: Grid) -> np.ndarray:
    bands = kinetic_bands(grid).copy()
    bands[2] += V
    return bands


# potentials mirror-symmetric to this absolute level are solved per parity
MIRROR_TOL = 1e-10


def _parity_bands(bands: np.ndarray, c: int, sign: int) -> np.ndarray:
    """Bands of H restricted to the even (+1) or odd (-1) subspace.

    The basis is delta_0 (even only) and (delta_i +- delta_-i)/sqrt(2) for
    i > 0 on nodes c, c+1, ...; folding the five-point stencil across the
    origin only touches the first nodes, so the result stays banded.
    """
    half = bands[:, c:].copy()
    if sign > 0:
        r2 = np.sqrt(2.0)
        half[2, 1] += bands[0, 2]    # <1|H|-1> folded back
        half[1, 1] *= r2             # <0|H|1>
        half[0, 2] *= r2             # <0|H|2>
        return half
    odd = half[:, 1:].copy()
    odd[2, 0] -= bands[0, 2]
    odd[1, 0] = 0.0
    odd[0, :2] = 0.0
    return odd


def _unfold(v: np.ndarray, c: int, sign: int) -> np.ndarray:
    out = np.zeros((2 * c + 1, v.shape[1]))
    if sign > 0:
        out[c] = v[0]
        body = v[1:] / np.sqrt(2.0)
    else:
        body = v / np.sqrt(2.0)
    out[c + 1:] = body
    out[:c] = sign * body[::-1]
    return out


def _mirror_eigh(bands: np.ndarray, grid: Grid, k: int):
    c = grid.center
    vals, vecs = [], []
    for sign in (1, -1):
        m = c + 1 if sign > 0 else c
        e, v = eig_banded(_parity_bands(bands, c, sign), select="i",
                          select_range=(0, min(k, m) - 1))
        vals.append(e)
        vecs.append(_unfold(v, c, sign))
    vals = np.concatenate(vals)
    vecs = np.concatenate(vecs, axis=1)
    order = np.argsort(vals, kind="stable")[:k]
    return vals[order], vecs[:, order]


def linear_eigenpairs(V, grid: Grid, k: int = 2) -> list[EigenPair]:
    """Lowest ``k`` eigenpairs of T + V.

    Mirror-symmetric potentials are diagonalized per parity sector, so
    nearly degenerate doublets (split double wells) keep exact parity
    instead of mixing at the level of round-off over the splitting.
    """
    V = np.asarray(V, dtype=float)
    bands = hamiltonian_bands(V, grid)
    if np.max(np.abs(V - V[::-1])) <= MIRROR_TOL:
        vals, vecs = _mirror_eigh(bands, grid, k)
    else:
        vals, vecs = eig_banded(bands, select="i", select_range=(0, k - 1))
    vecs = vecs / np.sqrt(grid.dx)
    vecs = vecs / norm(vecs.T, grid)[None, :]
    vecs = _fix_signs(vecs, grid)
    return [EigenPair(float(e), vecs[:, j].copy(), j) for j, e in enumerate(vals)]


def gp_residual(psi, V, grid: Grid, g: float, mu: float) -> float:
    return float(norm(apply_kinetic(psi, grid) + (V + g * np.abs(psi) ** 2 - mu) * psi, grid))


def gp_energy(psi, V, grid: Grid, g: float) -> float:
    rho = np.abs(psi) ** 2
    return float(np.real(inner(psi, apply_kinetic(psi, grid), grid))
                 + np.sum((V + 0.5 * g * rho) * rho * grid.weights))


def gp_ground_state(V, grid: Grid, g: float, guess=None, dtau: float = 0.5,
                    tol: float = 1e-10, residual_tol: float = 1e-9,
                    max_iter: int = 200_000) -> EigenPair:
    """Ground state of T + V + g|psi|^2 by normalized imaginary-time flow.

    Each step solves (1 + dtau (H[psi_n] - s)) psi_{n+1} = psi_n with the
    density frozen at psi_n and s = min V so the matrix stays positive.
    Stops once the energy changes by less than ``tol`` per unit imaginary
    time and the stationary residual is below ``residual_tol``.
    """
    V = np.asarray(V, dtype=float)
    if guess is None:
        guess = linear_eigenpairs(V, grid, 1)[0].state
    psi = np.abs(np.asarray(guess, dtype=float))
    psi = psi / norm(psi, grid)
    base = kinetic_bands(grid) * dtau
    base[2] += 1.0
    shift = V.min()
    E_old = gp_energy(psi, V, grid, g)
    mu = E_old
    res = np.inf
    for it in range(1, max_iter + 1):
        bands = base.copy()
        bands[2] += dtau * (V - shift + g * psi**2)
        psi = solveh_banded(bands, psi)
        psi = psi / norm(psi, grid)
        if it % 10 == 0:
            E = gp_energy(psi, V, grid, g)
            rate = abs(E - E_old) / (10 * dtau)
            E_old = E
            if rate < tol:
                Hpsi = apply_kinetic(psi, grid) + (V + g * psi**2) * psi
                mu = float(np.sum(psi * Hpsi * grid.weights))
                res = gp_residual(psi, V, grid, g, mu)
                if res < residual_tol:
                    return EigenPair(mu, psi, 0, res)
    raise ConvergenceError(f"GP ground state not converged after {max_iter} steps", res)


def lowest_eigenpairs(V, grid: Grid, k: int = 2, g: float = 0.0, guess=None) -> list[EigenPair]:
    """Lowest ``k`` eigenpairs; for g > 0 only the GP ground state exists here."""
    if g == 0:
        return linear_eigenpairs(V, grid, k)
    if k != 1:
        raise ValueError("only the ground state is available for g > 0")
    return [gp_ground_state(V, grid, g, guess)]


def ground_state_of_slice(trace, k: int, g: float = 0.0, guess=None) -> EigenPair:
    return lowest_eigenpairs(trace.slice(k), trace.grid, 1, g, guess)[0]


def propagate(psi0, trace, g: float = 0.0, dt: float = DEFAULT_DT, offsets=None,
              dump=None, dump_stride: int = 0) -> np.ndarray:
    """Evolve ``psi0`` from t = 0 to trace.t_f under trace (+ trace.offset).

    ``psi0`` may be a batch (B, n_x); ``offsets`` (B, n_x) then adds a static
    potential per batch member, which lets a whole perturbation sweep share
    one pass over the potential history. The potential is sampled at step
    midpoints from the linear-in-time interpolation of the trace.
    """
    grid, mesh = trace.grid, trace.mesh
    psi = np.array(psi0, dtype=complex)
    single = psi.ndim == 1
    psi = np.atleast_2d(psi)
    static = np.broadcast_to(trace.offset, psi.shape).copy()
    if offsets is not None:
        static += np.atleast_2d(offsets)
    n_steps = max(1, int(round(trace.t_f / dt)))
    h = trace.t_f / n_steps
    n0 = norm(psi, grid)

    kin = np.exp(-1j * kinetic_symbol(grid) * h)
    static_phase = np.exp(-0.5j * h * static)
    # midpoint times mapped onto the design mesh
    u = (np.arange(n_steps) + 0.5) * h / mesh.dt
    idx = np.minimum(u.astype(int), mesh.steps - 1)
    wgt = u - idx
    values = trace.values
    limits = trace.limits if trace.limits is not None else values[[0, -1]]

    def row(i):
        if i == 0:
            return limits[0]
        if i == mesh.steps:
            return limits[1]
        return values[i]

    def v_mid(j):
        return (1 - wgt[j]) * row(idx[j]) + wgt[j] * row(idx[j] + 1)

    writer = None
    if dump is not None and dump_stride > 0:
        writer = csv.writer(dump)
        writer.writerow(["t", "x", "|psi|^2"])

    def record(t, state):
        for x, p in zip(grid.x, np.abs(state[0]) ** 2):
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(p))])

    if writer is not None:
        record(0.0, psi)
    vh = v_mid(0)
    for j in range(n_steps):
        # |psi| is unchanged by potential phases, so the nonlinear half
        # steps around the kinetic factor can use the same density
        phase = np.exp(-0.5j * h * (vh + g * np.abs(psi) ** 2)) * static_phase if g else \
            np.exp(-0.5j * h * vh) * static_phase
        psi = np.fft.ifft(np.fft.fft(psi * phase, axis=-1) * kin, axis=-1)
        vn = v_mid(j + 1) if j + 1 < n_steps else vh
        if g:
            psi *= np.exp(-0.5j * h * (vh + g * np.abs(psi) ** 2)) * static_phase
        else:
            psi *= np.exp(-0.5j * h * vh) * static_phase
        vh = vn
        if writer is not None and (j + 1) % dump_stride == 0:
            record((j + 1) * h, psi)

    drift = np.max(np.abs(norm(psi, grid) - n0))
    if drift > 1e-6:
        raise StabilityError(f"norm drift {drift:.2e}; reduce dt")
    return psi[0] if single else psi
