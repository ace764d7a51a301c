"""Darcy elliptic solve: -div(a grad u) = f with u = 0 on the boundary.

Five-point finite volumes on the n x n grid (boundary points included);
face coefficients are arithmetic means of the adjacent permeability values,
which keeps the interior system symmetric positive definite for a > 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..fields import Boundary, Field, Grid

CG_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class DarcyProblem:
    perm: Field
    source: Field | None = None  # defaults to f = 1

    def __post_init__(self):
        grid = self.perm.grid
        if grid.boundary is not Boundary.DIRICHLET_ZERO:
            raise ValueError("Darcy problems live on a DirichletZero grid")
        grid.require_square("solve_darcy")
        if grid.nx < 8:
            raise ValueError("Darcy grid must be at least 8x8")
        if self.perm.channels != 1:
            raise ValueError("permeability must be single-channel")
        if float(self.perm.values.min()) <= 0.0:
            raise ValueError("permeability must be strictly positive")
        if self.source is not None and self.source.values.shape != self.perm.values.shape:
            raise ValueError("source shape must match permeability")

    def source_values(self) -> np.ndarray:
        if self.source is None:
            return np.ones_like(self.perm.values[:, :, 0])
        return self.source.values[:, :, 0]


def assemble_darcy_system(p: DarcyProblem):
    """Interior system (A, b); unknowns ordered row-major over interior points."""
    a = p.perm.values[:, :, 0]
    f = p.source_values()
    n = p.perm.grid.nx
    h = p.perm.grid.hx
    m = n - 2

    ai = a[1:-1, 1:-1]
    a_e = 0.5 * (ai + a[1:-1, 2:])
    a_w = 0.5 * (ai + a[1:-1, :-2])
    a_n = 0.5 * (ai + a[2:, 1:-1])
    a_s = 0.5 * (ai + a[:-2, 1:-1])

    inv_h2 = 1.0 / (h * h)
    diag = (a_e + a_w + a_n + a_s).ravel() * inv_h2
    east = (-a_e * inv_h2).ravel()
    west = (-a_w * inv_h2).ravel()
    north = (-a_n * inv_h2).ravel()
    south = (-a_s * inv_h2).ravel()

    # zero the couplings that would cross a row boundary (neighbor is u = 0)
    east = east.reshape(m, m)
    east[:, -1] = 0.0
    west = west.reshape(m, m)
    west[:, 0] = 0.0

    mat = sp.diags(
        [diag, east.ravel()[:-1], west.ravel()[1:], north.ravel()[:-m], south.ravel()[m:]],
        [0, 1, -1, m, -m],
        format="csr",
    )
    b = f[1:-1, 1:-1].ravel().copy()
    return mat, b


def solve_darcy(p: DarcyProblem) -> Field:
    grid = p.perm.grid
    n = grid.nx
    mat, b = assemble_darcy_system(p)
    if not np.any(b):
        interior = np.zeros_like(b)
    else:
        maxiter = 10 * n * n
        interior, info = spla.cg(mat, b, rtol=CG_RTOL, atol=0.0, maxiter=maxiter)
        if info != 0:
            raise SolverError(f"CG did not reach rtol={CG_RTOL} within {maxiter} iterations")
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = interior.reshape(n - 2, n - 2)
    return Field(grid, u)
