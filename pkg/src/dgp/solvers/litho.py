"""Toy lithography imaging: Gaussian low-pass kernel plus resist blur/threshold.

The imaging step is a single fixed coherent kernel (a periodic, unit-mass
Gaussian of width sigma_optical pixels); resist development is a second
Gaussian blur followed by thresholding at tau (strict >, ties print as 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..fields import Field, Grid


@dataclass(frozen=True)
class LithoConfig:
    sigma_optical: float = 2.0
    sigma_resist: float = 1.0
    tau_resist: float = 0.4
    beta: float = 0.05

    def __post_init__(self):
        if not (self.sigma_optical > 0 and self.sigma_resist > 0 and self.beta > 0):
            raise ValueError("kernel widths and beta must be positive")
        if not (0.0 < self.tau_resist < 1.0):
            raise ValueError("tau_resist must lie strictly inside (0, 1)")


def gaussian_kernel_hat(grid: Grid, sigma_px: float) -> np.ndarray:
    """FFT of the unit-mass periodic Gaussian with width sigma in pixels (min-image)."""
    dx = np.arange(grid.nx)
    dy = np.arange(grid.ny)
    dx = np.minimum(dx, grid.nx - dx)
    dy = np.minimum(dy, grid.ny - dy)
    kern = np.exp(-(dx[None, :] ** 2 + dy[:, None] ** 2) / (2.0 * sigma_px**2))
    kern /= kern.sum()
    return np.fft.fft2(kern)


def _blur(values: np.ndarray, k_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(values) * k_hat).real


def litho_forward(mask: Field, cfg: LithoConfig, soft: bool = False) -> Field:
    mask.grid.require_periodic("litho_forward")
    vals = mask.values[:, :, 0]
    if vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9:
        raise ValueError("mask values must lie in [0, 1]")
    vals = np.clip(vals, 0.0, 1.0)
    intensity = _blur(vals, gaussian_kernel_hat(mask.grid, cfg.sigma_optical))
    resist = _blur(intensity, gaussian_kernel_hat(mask.grid, cfg.sigma_resist))
    if soft:
        out = expit((resist - cfg.tau_resist) / cfg.beta)
    else:
        out = (resist > cfg.tau_resist).astype(np.float64)
    return Field(mask.grid, out)
