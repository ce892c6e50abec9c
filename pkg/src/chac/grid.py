"""Uniform-grid discrete calculus on [0,1].

Finite differences are second-order centered stencils closed with ghost
nodes chosen per boundary setting:

* ``NEUMANN_DOUBLE`` (u_x = u_xxx = 0 at both ends): even reflection,
  u[-k] = u[k].  This makes the trapezoid-weighted D2/D4 matrices exactly
  symmetric (summation by parts), which downstream code relies on for
  building exactly symmetric operator matrices.
* ``INTEGRATED_DIRICHLET`` (u(0)=0, u(1)=M, u_xx=0 at both ends): odd
  reflection about the boundary value, u[-k] = 2 u[0] - u[k], so the
  discrete second derivative vanishes at the ends for any boundary data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateGridError


class BoundaryKind(enum.Enum):
    NEUMANN_DOUBLE = "neumann"
    INTEGRATED_DIRICHLET = "integrated"


@dataclass(frozen=True)
class Grid:
    """Uniform grid x_i = i/(n-1) on [0,1]."""

    n: int
    dx: float = field(init=False)
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n < 16:
            raise DegenerateGridError(f"need at least 16 nodes, got {self.n}")
        object.__setattr__(self, "dx", 1.0 / (self.n - 1))
        object.__setattr__(self, "nodes", np.linspace(0.0, 1.0, self.n))

    # -- quadrature -------------------------------------------------------

    def quad_weights(self) -> np.ndarray:
        """Composite Simpson weights if n is odd, trapezoid otherwise."""
        if self.n % 2 == 1:
            w = np.full(self.n, 2.0)
            w[1::2] = 4.0
            w[0] = w[-1] = 1.0
            return w * (self.dx / 3.0)
        return self.trapezoid_weights()

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.quad_weights(), np.asarray(values)))

    def inner(self, f, g) -> float:
        return self.integrate(np.asarray(f) * np.asarray(g))

    def l2_norm(self, f) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def antiderivative(self, f) -> np.ndarray:
        """Cumulative integral with value 0 at x=0 (trapezoid, exact on
        piecewise-linear integrands)."""
        return cumulative_trapezoid(np.asarray(f), dx=self.dx, initial=0.0)

    # -- ghost extension --------------------------------------------------

    def _extend(self, u, bc: BoundaryKind, width: int) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise DegenerateGridError("value vector does not match grid")
        if self.n < 5:
            raise DegenerateGridError("grid too coarse for stencils")
        left = u[1 : width + 1][::-1]
        right = u[-width - 1 : -1][::-1]
        if bc is BoundaryKind.NEUMANN_DOUBLE:
            return np.concatenate([left, u, right])
        return np.concatenate([2.0 * u[0] - left, u, 2.0 * u[-1] - right])

    # -- derivatives ------------------------------------------------------

    def diff1(self, u, bc: BoundaryKind) -> np.ndarray:
        v = self._extend(u, bc, 1)
        return (v[2:] - v[:-2]) / (2.0 * self.dx)

    def diff2(self, u, bc: BoundaryKind) -> np.ndarray:
        v = self._extend(u, bc, 1)
        return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / self.dx**2

    def diff4(self, u, bc: BoundaryKind) -> np.ndarray:
        v = self._extend(u, bc, 2)
        return (
            v[4:] - 4.0 * v[3:-1] + 6.0 * v[2:-2] - 4.0 * v[1:-3] + v[:-4]
        ) / self.dx**4

    # -- stencil matrices (Neumann closure, all n nodes) ------------------

    def d2_matrix_neumann(self) -> sp.csr_matrix:
        n, h2 = self.n, self.dx**2
        m = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="lil")
        m[0, 1] = 2.0
        m[n - 1, n - 2] = 2.0
        return (m / h2).tocsr()

    def d4_matrix_neumann(self) -> sp.csr_matrix:
        n, h4 = self.n, self.dx**4
        m = sp.diags(
            [1.0, -4.0, 6.0, -4.0, 1.0], [-2, -1, 0, 1, 2], shape=(n, n), format="lil"
        )
        m[0, 1], m[0, 2] = -8.0, 2.0
        m[1, 1] = 7.0
        m[n - 1, n - 2], m[n - 1, n - 3] = -8.0, 2.0
        m[n - 2, n - 2] = 7.0
        return (m / h4).tocsr()

    def conservative_d2_matrix_neumann(self, a: np.ndarray) -> sp.csr_matrix:
        """Matrix of phi -> (a phi')' with even-reflected coefficient a.

        Trapezoid-weighted, this matrix is exactly symmetric.
        """
        a = np.asarray(a, dtype=float)
        ah = 0.5 * (a[:-1] + a[1:])  # a at half nodes, length n-1
        n, h2 = self.n, self.dx**2
        lo = np.zeros(n - 1)
        hi = np.zeros(n - 1)
        dg = np.zeros(n)
        lo[:] = ah
        hi[:] = ah
        dg[1:-1] = -(ah[:-1] + ah[1:])
        # reflected ghosts: row 0 -> 2 a_{1/2} (u1 - u0), row n-1 mirrored
        dg[0] = -2.0 * ah[0]
        hi[0] = 2.0 * ah[0]
        dg[-1] = -2.0 * ah[-1]
        lo[-1] = 2.0 * ah[-1]
        return sp.diags([lo, dg, hi], [-1, 0, 1], format="csr") / h2

    # -- interior matrices (integrated Dirichlet closure) -----------------

    def d2_matrix_interior(self):
        """D2 on interior nodes with Dirichlet data; returns (matrix, bl, br)
        where the full action is  M v_int + bl*u(0) + br*u(1)."""
        m = self.n - 2
        h2 = self.dx**2
        mat = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr") / h2
        bl = np.zeros(m)
        br = np.zeros(m)
        bl[0] = 1.0 / h2
        br[-1] = 1.0 / h2
        return mat, bl, br

    def d4_matrix_interior(self):
        """D4 on interior nodes with u given at the ends and u_xx = 0 there
        (ghost u[-1] = 2u[0] - u[1]); returns (matrix, bl, br)."""
        m = self.n - 2
        h4 = self.dx**4
        mat = sp.diags(
            [1.0, -4.0, 6.0, -4.0, 1.0], [-2, -1, 0, 1, 2], shape=(m, m), format="lil"
        )
        mat[0, 0] = 5.0
        mat[m - 1, m - 1] = 5.0
        bl = np.zeros(m)
        br = np.zeros(m)
        bl[0] = -2.0 / h4
        bl[1] = 1.0 / h4
        br[-1] = -2.0 / h4
        br[-2] = 1.0 / h4
        return (mat / h4).tocsr(), bl, br

    def conservative_d2_matrix_interior(self, a: np.ndarray):
        """phi -> (a phi')' on interior nodes, phi(0)=phi(1)=0 data assumed
        handled by the caller through the returned boundary vectors."""
        a = np.asarray(a, dtype=float)
        ah = 0.5 * (a[:-1] + a[1:])
        m = self.n - 2
        h2 = self.dx**2
        lo = ah[1:-1]
        hi = ah[1:-1]
        dg = -(ah[:-1] + ah[1:])
        mat = sp.diags([lo, dg, hi], [-1, 0, 1], shape=(m, m), format="csr") / h2
        bl = np.zeros(m)
        br = np.zeros(m)
        bl[0] = ah[0] / h2
        br[-1] = ah[-1] / h2
        return mat, bl, br


class GridFunction:
    """Sampled real function on a Grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise DegenerateGridError(
                f"expected {grid.n} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DegenerateGridError("non-finite values in grid function")
        self.grid = grid
        self.values = values

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def __len__(self):
        return self.grid.n


def validate_layer_resolution(grid: Grid, eps: float, factor: float = 8.0) -> None:
    """Require dx <= eps/factor so layers of width O(eps) are resolved."""
    if grid.dx > eps / factor:
        raise DegenerateGridError(
            f"dx={grid.dx:.3g} too coarse for eps={eps:.3g}; need dx <= eps/{factor:g}"
        )
