"""Pseudo-spectral 2D Navier-Stokes in vorticity form on the unit torus.

Time stepping: Crank-Nicolson on the diffusion term, second-order
Adams-Bashforth on advection + forcing (forward-Euler bootstrap), with the
2/3-rule mask on the advection product.  The advection DC mode is zeroed so
the discrete mean vorticity evolves exactly as mean(w0) + t * mean(f).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fields import Boundary, Field, Grid

CFL_LIMIT = 0.5


class CflError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class NsConfig:
    nu: float
    T: float
    dt: float
    n_snapshots: int = 10
    forcing: Field | None = None

    def __post_init__(self):
        if not (self.nu > 0 and self.T > 0 and self.dt > 0):
            raise ValueError("nu, T, dt must be positive")
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        if self.n_snapshots < 1:
            raise ValueError("need at least one snapshot")


@dataclass(frozen=True)
class NsTrajectory:
    snapshots: list[Field]
    times: list[float]

    def final(self) -> Field:
        return self.snapshots[-1]


def default_forcing(grid: Grid) -> Field:
    """0.1 (sin(2 pi (x+y)) + cos(2 pi (x+y)))."""
    xx = grid.xs()[None, :]
    yy = grid.ys()[:, None]
    phase = 2.0 * np.pi * (xx + yy)
    return Field(grid, 0.1 * (np.sin(phase) + np.cos(phase)))


def _wavenumbers(n: int):
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    kx = k[None, :]
    ky = k[:, None]
    ksq = kx**2 + ky**2
    return kx, ky, ksq


def vorticity_to_velocity(w: Field) -> Field:
    """Divergence-free velocity u = (psi_y, -psi_x) with Lap psi = -w, psi mean zero."""
    w.grid.require_periodic("vorticity_to_velocity")
    w.grid.require_square("vorticity_to_velocity")
    n = w.grid.nx
    kx, ky, ksq = _wavenumbers(n)
    w_hat = np.fft.fft2(w.values[:, :, 0])
    inv_ksq = np.zeros_like(ksq)
    inv_ksq[ksq > 0] = 1.0 / ksq[ksq > 0]
    psi_hat = w_hat * inv_ksq
    ux = np.fft.ifft2(1j * ky * psi_hat).real
    uy = np.fft.ifft2(-1j * kx * psi_hat).real
    return Field(w.grid, np.stack([ux, uy], axis=-1))


def solve_ns(w0: Field, cfg: NsConfig) -> NsTrajectory:
    w0.grid.require_periodic("solve_ns")
    w0.grid.require_square("solve_ns")
    if w0.channels != 1:
        raise ValueError("initial vorticity must be single-channel")
    grid = w0.grid
    n = grid.nx
    kx, ky, ksq = _wavenumbers(n)
    inv_ksq = np.zeros_like(ksq)
    inv_ksq[ksq > 0] = 1.0 / ksq[ksq > 0]
    m = np.fft.fftfreq(n, d=1.0 / n) * n
    dealias = (3 * np.abs(m[None, :]) < n) & (3 * np.abs(m[:, None]) < n)

    f_hat = 0.0
    if cfg.forcing is not None:
        if cfg.forcing.values.shape[:2] != (n, n):
            raise ValueError("forcing shape must match the grid")
        f_hat = np.fft.fft2(cfg.forcing.values[:, :, 0])

    dt, nu = cfg.dt, cfg.nu
    n_steps = max(1, int(round(cfg.T / dt)))
    snap_steps = [
        min(n_steps, max(1, int(round(j * cfg.T / (cfg.n_snapshots * dt)))))
        for j in range(1, cfg.n_snapshots + 1)
    ]
    snap_steps[-1] = n_steps

    w_hat = np.fft.fft2(w0.values[:, :, 0])
    cn_num = 1.0 - 0.5 * dt * nu * ksq
    cn_den = 1.0 + 0.5 * dt * nu * ksq

    def rhs_hat(w_hat):
        ux = np.fft.ifft2(1j * ky * inv_ksq * w_hat).real
        uy = np.fft.ifft2(-1j * kx * inv_ksq * w_hat).real
        wx = np.fft.ifft2(1j * kx * w_hat).real
        wy = np.fft.ifft2(1j * ky * w_hat).real
        speed = max(np.abs(ux).max(), np.abs(uy).max())
        adv_hat = np.fft.fft2(ux * wx + uy * wy) * dealias
        adv_hat[0, 0] = 0.0  # zero-mean advection, exact discrete mean balance
        return f_hat - adv_hat, speed

    snapshots, times = [], []
    s_prev = None
    next_snap = 0
    for step in range(1, n_steps + 1):
        s_hat, speed = rhs_hat(w_hat)
        cfl = speed * dt * n
        if cfl > CFL_LIMIT:
            raise CflError(f"advective CFL {cfl:.3f} exceeds {CFL_LIMIT} at step {step}")
        if s_prev is None:
            ab = s_hat
        else:
            ab = 1.5 * s_hat - 0.5 * s_prev
        w_hat = (cn_num * w_hat + dt * ab) / cn_den
        s_prev = s_hat
        if not np.isfinite(w_hat).all():
            raise DivergenceError(f"solution diverged (non-finite) at step {step}")
        while next_snap < len(snap_steps) and snap_steps[next_snap] == step:
            snapshots.append(Field(grid, np.fft.ifft2(w_hat).real))
            times.append(step * dt)
            next_snap += 1
    if not snapshots:
        snapshots.append(Field(grid, np.fft.ifft2(w_hat).real))
        times.append(n_steps * dt)
    return NsTrajectory(snapshots, times)
