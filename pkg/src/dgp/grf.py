"""Gaussian random fields with spectrum (-Lap + tau^2 I)^(-alpha) under Neumann BCs.

The Neumann Laplacian is realized in the orthonormal cosine basis
phi_0(x) = 1, phi_k(x) = sqrt(2) cos(pi k x), with eigenvalues pi^2 |k|^2.
A sample is  sum_k xi_k (pi^2(k1^2+k2^2) + tau^2)^(-alpha/2) phi_k1(x) phi_k2(y)
with xi_k iid standard normal, followed by the pointwise ellipticity map psi.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fields import Field, Grid
from .rng import RngStream


class PsiMode(enum.Enum):
    CLIP = "clip"      # x >= 0 -> 12, x < 0 -> 4
    EXP = "exp"
    IDENTITY = "identity"


CLIP_LOW = 4.0
CLIP_HIGH = 12.0


@dataclass(frozen=True)
class GrfSpec:
    alpha: float
    tau: float
    psi: PsiMode = PsiMode.IDENTITY

    def __post_init__(self):
        if not (self.alpha > 0 and self.tau > 0):
            raise ValueError(f"alpha and tau must be positive, got {self.alpha}, {self.tau}")


@dataclass(frozen=True)
class GrfHyperPrior:
    """Per-sample (alpha, tau) ranges; a range with lo == hi pins the value."""

    alpha_range: tuple[float, float]
    tau_range: tuple[float, float]
    psi: PsiMode = PsiMode.IDENTITY

    def __post_init__(self):
        for lo, hi in (self.alpha_range, self.tau_range):
            if lo > hi:
                raise ValueError(f"range ({lo}, {hi}) has lo > hi")

    def draw(self, rng: RngStream) -> GrfSpec:
        a_lo, a_hi = self.alpha_range
        t_lo, t_hi = self.tau_range
        alpha = a_lo if a_lo == a_hi else float(rng.uniform(a_lo, a_hi))
        tau = t_lo if t_lo == t_hi else float(rng.uniform(t_lo, t_hi))
        return GrfSpec(alpha, tau, self.psi)


def mode_std(spec: GrfSpec, k1: int, k2: int) -> float:
    """Standard deviation of the (k1, k2) cosine-mode coefficient."""
    lam = math.pi**2 * (k1 * k1 + k2 * k2) + spec.tau**2
    return lam ** (-spec.alpha / 2.0)


def cosine_basis(grid_points: np.ndarray, n_modes: int) -> np.ndarray:
    """Orthonormal evaluation matrix B[i, k] = phi_k(x_i)."""
    k = np.arange(n_modes)
    b = np.cos(np.pi * np.outer(grid_points, k))
    b[:, 1:] *= math.sqrt(2.0)
    return b


def apply_psi(f: Field, mode: PsiMode) -> Field:
    if mode is PsiMode.IDENTITY:
        return f
    if mode is PsiMode.CLIP:
        return f.with_values(np.where(f.values >= 0.0, CLIP_HIGH, CLIP_LOW))
    if mode is PsiMode.EXP:
        return f.with_values(np.exp(f.values))
    raise ValueError(f"unknown psi mode {mode}")


def sample_grf(spec: GrfSpec, grid: Grid, rng: RngStream) -> Field:
    grid.require_square("sample_grf")
    n = grid.nx
    xi = rng.standard_normal((n, n))  # xi[k1, k2]
    k = np.arange(n)
    lam = math.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2) + spec.tau**2
    coeff = xi * lam ** (-spec.alpha / 2.0)
    bx = cosine_basis(grid.xs(), n)
    by = cosine_basis(grid.ys(), n)
    # values[y, x] = sum_k1,k2 coeff[k1,k2] phi_k1(x) phi_k2(y)
    values = by @ coeff.T @ bx.T
    return apply_psi(Field(grid, values), spec.psi)
