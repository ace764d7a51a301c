"""Uniform 2D grids and multi-channel fields on the unit square.

Layout convention: field values are row-major arrays of shape (ny, nx, channels),
indexed [y, x, c].  Spectral coefficients use the full 2D spectrum with the
unnormalized forward transform (plain sum) and 1/(nx*ny) on the inverse, i.e.
numpy's default convention.  Mode (k1, k2) means k1 cycles in x and k2 in y,
so ``coeffs[k2, k1, c]``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Boundary(enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet_zero"
    NEUMANN = "neumann"


class GridError(ValueError):
    """Grid precondition violated (size, boundary type, squareness)."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0,1]^2.

    Periodic grids place points at j/n (the point x=1 is identified with x=0);
    non-periodic grids place points at j/(n-1) including both endpoints.
    """

    nx: int
    ny: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GridError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def hx(self) -> float:
        return 1.0 / self.nx if self.periodic else 1.0 / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 1.0 / self.ny if self.periodic else 1.0 / (self.ny - 1)

    def xs(self) -> np.ndarray:
        return np.arange(self.nx) * self.hx

    def ys(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    @property
    def npoints(self) -> int:
        return self.nx * self.ny

    def require_periodic(self, what: str) -> None:
        if not self.periodic:
            raise GridError(f"{what} requires a periodic grid, got {self.boundary.value}")

    def require_square(self, what: str) -> None:
        if self.nx != self.ny:
            raise GridError(f"{what} requires a square grid, got {self.nx}x{self.ny}")

    def with_boundary(self, boundary: Boundary) -> "Grid":
        return Grid(self.nx, self.ny, boundary)


def _check_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape[:2] != (grid.ny, grid.nx):
        raise ValueError(f"values shape {values.shape} does not match grid {grid.ny}x{grid.nx}")
    if values.ndim != 3 or values.shape[2] < 1:
        raise ValueError(f"values must be (ny, nx, channels), got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("field values must be finite")
    return values


@dataclass(frozen=True)
class Field:
    """Real multi-channel function sampled on a grid; values shape (ny, nx, channels)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _check_values(self.grid, self.values).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @staticmethod
    def constant(grid: Grid, value: float, channels: int = 1) -> "Field":
        return Field(grid, np.full((grid.ny, grid.nx, channels), float(value)))

    @staticmethod
    def zeros(grid: Grid, channels: int = 1) -> "Field":
        return Field.constant(grid, 0.0, channels)

    def channel(self, c: int) -> np.ndarray:
        return self.values[:, :, c]

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)


@dataclass(frozen=True)
class SpectralField:
    """Full 2D spectrum of a field; coeffs shape (ny, nx, channels), coeffs[k2, k1, c]."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim == 2:
            coeffs = coeffs[:, :, None]
        if coeffs.shape[:2] != (self.grid.ny, self.grid.nx) or coeffs.ndim != 3:
            raise ValueError(f"coeffs shape {coeffs.shape} does not match grid")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[2]


def fft2(f: Field) -> SpectralField:
    """Unnormalized forward 2D transform of each channel."""
    f.grid.require_periodic("fft2")
    if not np.isfinite(f.values).all():
        raise ValueError("fft2 input must be finite")
    coeffs = np.fft.fft2(f.values, axes=(0, 1))
    return SpectralField(f.grid, coeffs)


def ifft2(s: SpectralField) -> Field:
    """Inverse transform carrying 1/(nx*ny); rejects spectra that are not real-valued."""
    s.grid.require_periodic("ifft2")
    vals = np.fft.ifft2(s.coeffs, axes=(0, 1))
    scale = max(1.0, float(np.max(np.abs(vals.real))) if vals.size else 1.0)
    if np.max(np.abs(vals.imag)) > 1e-12 * scale:
        raise ValueError("spectrum is not Hermitian: inverse transform is not real")
    return Field(s.grid, np.ascontiguousarray(vals.real))


def _resize_axis(coeffs: np.ndarray, axis: int, n_new: int) -> np.ndarray:
    """Zero-pad or truncate one spectral axis, splitting/folding the Nyquist bin."""
    n = coeffs.shape[axis]
    if n_new == n:
        return coeffs
    shape = list(coeffs.shape)
    shape[axis] = n_new
    out = np.zeros(shape, dtype=np.complex128)

    def sl(arr, idx):
        index = [slice(None)] * arr.ndim
        index[axis] = idx
        return tuple(index)

    k_keep = (min(n, n_new) - 1) // 2  # strictly below the smaller Nyquist
    out[sl(out, slice(0, k_keep + 1))] = coeffs[sl(coeffs, slice(0, k_keep + 1))]
    if k_keep > 0:
        out[sl(out, slice(-k_keep, None))] = coeffs[sl(coeffs, slice(-k_keep, None))]

    small = min(n, n_new)
    if small % 2 == 0:
        nyq = small // 2
        if n_new > n:
            # upsample: old combined +/-Nyquist bin splits in half
            half = 0.5 * coeffs[sl(coeffs, nyq)]
            out[sl(out, nyq)] = half
            out[sl(out, n_new - nyq)] = half
        else:
            # downsample: +/-Nyquist of the smaller grid fold together
            out[sl(out, nyq)] = coeffs[sl(coeffs, nyq)] + coeffs[sl(coeffs, n - nyq)]
    return out


def resample_spectral(f: Field, new_grid: Grid) -> Field:
    """Resample by spectral zero-padding/truncation; exact on band-limited inputs."""
    f.grid.require_periodic("resample_spectral")
    new_grid.require_periodic("resample_spectral")
    if (new_grid.nx, new_grid.ny) == (f.grid.nx, f.grid.ny):
        return Field(new_grid, f.values)
    coeffs = np.fft.fft2(f.values, axes=(0, 1))
    coeffs = _resize_axis(coeffs, 0, new_grid.ny)
    coeffs = _resize_axis(coeffs, 1, new_grid.nx)
    coeffs *= (new_grid.nx * new_grid.ny) / (f.grid.nx * f.grid.ny)
    vals = np.fft.ifft2(coeffs, axes=(0, 1)).real
    return Field(new_grid, np.ascontiguousarray(vals))
