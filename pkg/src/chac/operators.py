"""Discretized operators and quadratic forms of the mixed equation.

The evolution operator is

    A(u) = -delta * (eps^2 u_xx - f(u))_xx + mu * (eps^2 u_xx - f(u))
         = -delta * A1(u) + mu * A2(u),

A2 being the second-order (Allen-Cahn) part and A1 = (A2)_xx the
fourth-order (Cahn-Hilliard) part.  The symmetrized linearization S and
the integrated-problem operators of the mass-conserving setting are
assembled here as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .grid import BoundaryKind, Grid
from .manifold import ManifoldState
from .profiles import QUARTIC

NEU = BoundaryKind.NEUMANN_DOUBLE
INT = BoundaryKind.INTEGRATED_DIRICHLET


@dataclass(frozen=True)
class Coefficients:
    """eps-dependent weights of the two operator parts."""

    eps: float
    delta: float
    mu: float
    family: str = ""

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.delta <= 0:
            raise ConfigError("delta must be positive (the fourth-order part is always present)")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")

    @property
    def n_eps(self) -> float:
        return self.delta + self.mu

    @property
    def spectral_margin(self) -> float:
        """eps^2 mu / delta; the spectral condition asks this >= C0."""
        return self.eps**2 * self.mu / self.delta

    def satisfies_spectral(self, c0: float) -> bool:
        return self.spectral_margin >= c0

    @staticmethod
    def from_powers(eps: float, p: float, q: float) -> "Coefficients":
        """delta = eps^p, mu = eps^q."""
        return Coefficients(eps, eps**p, eps**q, family=f"delta=eps^{p}, mu=eps^{q}")


@dataclass
class FormReport:
    value: float
    components: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Nonlinear operator and linearization (pointwise, grid differencing)
# ---------------------------------------------------------------------------


def bistable_part(u, grid: Grid, eps: float, potential=QUARTIC):
    """A2(u) = eps^2 u_xx - f(u) with Neumann closure."""
    return eps**2 * grid.diff2(u, NEU) - potential.f(np.asarray(u))


def apply_A(u, coeffs: Coefficients, grid: Grid, potential=QUARTIC):
    """A(u) = -delta A1(u) + mu A2(u); returns (full, a1, a2)."""
    a2 = bistable_part(u, grid, coeffs.eps, potential)
    a1 = grid.diff2(a2, NEU)
    return -coeffs.delta * a1 + coeffs.mu * a2, a1, a2


def apply_L(state: ManifoldState, v, coeffs: Coefficients):
    """Linearization of apply_A at u^h; returns (full, l1, l2)."""
    pot = state.config.potential
    l2 = coeffs.eps**2 * state.grid.diff2(v, NEU) - pot.fp(state.uh) * np.asarray(v)
    l1 = state.grid.diff2(l2, NEU)
    return -coeffs.delta * l1 + coeffs.mu * l2, l1, l2


def fh_kernel(state: ManifoldState, v):
    """f^h = Integral_0^1 (tau - 1) f''(u^h + tau v) dtau.

    Closed form for the quartic (f'' = 6u): f^h = -3 u^h - v; the generic
    path quadratures over tau and is kept only for non-quartic potentials.
    """
    v = np.asarray(v, dtype=float)
    pot = state.config.potential
    if pot.name == "quartic":
        return -3.0 * state.uh - v
    taus, wts = np.polynomial.legendre.leggauss(8)
    taus = 0.5 * (taus + 1.0)
    wts = 0.5 * wts
    acc = np.zeros_like(state.uh)
    for t, w in zip(taus, wts):
        acc += w * (t - 1.0) * pot.fpp(state.uh + t * v)
    return acc


def fxi_kernel(state: ManifoldState, vt_x):
    """Mass-case kernel f^xi = Integral_0^1 (1-tau) W'''(u^h + tau vt_x) dtau;
    quartic closed form 3 u^h + vt_x."""
    vt_x = np.asarray(vt_x, dtype=float)
    pot = state.config.potential
    if pot.name == "quartic":
        return 3.0 * state.uh + vt_x
    taus, wts = np.polynomial.legendre.leggauss(8)
    taus = 0.5 * (taus + 1.0)
    wts = 0.5 * wts
    acc = np.zeros_like(state.uh)
    for t, w in zip(taus, wts):
        acc += w * (1.0 - t) * pot.fppp(state.uh + t * vt_x)
    return acc


def fprime_uh_xx(state: ManifoldState, x=None):
    """(f'(u^h))_xx from analytic profile fields."""
    pot = state.config.potential
    if x is None:
        u, ux, uxx = state.uh, state.uh_x, state.uh_xx
    else:
        f = state.fields_at(x)
        u, ux, uxx = f["uh"], f["uh_x"], f["uh_xx"]
    return pot.fppp(u) * ux**2 + pot.fpp(u) * uxx


# ---------------------------------------------------------------------------
# Symmetrized linearization S
# ---------------------------------------------------------------------------


class SOperator:
    """Discrete S phi = -delta(eps^2 phi'''' - (f'(u^h) phi')' - b/2 phi)
    + mu(eps^2 phi'' - f'(u^h) phi), b = (f'(u^h))_xx analytic.

    ``sym`` is the exactly symmetric matrix similar to the nodal action
    under the trapezoid inner product: sym = W^(1/2) op W^(-1/2).
    Eigenvectors of ``sym`` map back to nodal functions via from_sym().
    """

    def __init__(self, state: ManifoldState, coeffs: Coefficients):
        grid = state.grid
        pot = state.config.potential
        eps, delta, mu = coeffs.eps, coeffs.delta, coeffs.mu
        a = pot.fp(state.uh)
        b = fprime_uh_xx(state)
        d4 = grid.d4_matrix_neumann()
        d2 = grid.d2_matrix_neumann()
        cons = grid.conservative_d2_matrix_neumann(a)
        op = (
            -delta * (eps**2 * d4 - cons - 0.5 * sp.diags(b))
            + mu * (eps**2 * d2 - sp.diags(a))
        )
        self.op = op.tocsr()
        self.w = grid.trapezoid_weights()
        sw = np.sqrt(self.w)
        m = (self.op.toarray() * (1.0 / sw)[None, :]) * sw[:, None]
        self.sym = 0.5 * (m + m.T)
        self.presym_defect = float(np.max(np.abs(m - m.T)))
        self.state = state
        self.coeffs = coeffs

    def apply(self, v):
        return self.op @ np.asarray(v)

    def from_sym(self, psi):
        """Map eigenvector(s) of sym back to nodal functions."""
        return np.asarray(psi) / np.sqrt(self.w)[..., None] if np.ndim(psi) == 2 \
            else np.asarray(psi) / np.sqrt(self.w)

    def to_sym(self, v):
        return np.asarray(v) * np.sqrt(self.w)


def assemble_S(state: ManifoldState, coeffs: Coefficients) -> SOperator:
    return SOperator(state, coeffs)


# ---------------------------------------------------------------------------
# Quadratic forms
# ---------------------------------------------------------------------------


def form_Atilde(state: ManifoldState, v, coeffs: Coefficients) -> FormReport:
    """Atilde[v] = int delta(eps^2 v_xx^2 + f' v_x^2 - (f')_xx v^2 / 2)
    + mu(eps^2 v_x^2 + f' v^2)."""
    g = state.grid
    pot = state.config.potential
    v = np.asarray(v, dtype=float)
    vx = g.diff1(v, NEU)
    vxx = g.diff2(v, NEU)
    a = pot.fp(state.uh)
    b = fprime_uh_xx(state)
    eps = coeffs.eps
    ch_curv = eps**2 * g.integrate(vxx**2)
    ch_grad = g.integrate(a * vx**2)
    ch_pot = -0.5 * g.integrate(b * v**2)
    ac_grad = eps**2 * g.integrate(vx**2)
    ac_pot = g.integrate(a * v**2)
    comp = {
        "ch_curvature": coeffs.delta * ch_curv,
        "ch_gradient": coeffs.delta * ch_grad,
        "ch_potential": coeffs.delta * ch_pot,
        "ac_gradient": coeffs.mu * ac_grad,
        "ac_potential": coeffs.mu * ac_pot,
    }
    return FormReport(sum(comp.values()), comp)


def form_Btilde(v, coeffs: Coefficients, grid: Grid) -> FormReport:
    """Btilde[v] = int delta eps^2 v_xx^2 + (delta + mu eps^2) v_x^2
    + (delta + mu) v^2."""
    v = np.asarray(v, dtype=float)
    vx = grid.diff1(v, NEU)
    vxx = grid.diff2(v, NEU)
    eps = coeffs.eps
    comp = {
        "curvature": coeffs.delta * eps**2 * grid.integrate(vxx**2),
        "gradient": (coeffs.delta + coeffs.mu * eps**2) * grid.integrate(vx**2),
        "mass": (coeffs.delta + coeffs.mu) * grid.integrate(v**2),
    }
    return FormReport(sum(comp.values()), comp)


def form_B(v, eps: float, grid: Grid) -> FormReport:
    """B[v] = int eps^2 v_x^2 + v^2 (Neumann residual norm)."""
    v = np.asarray(v, dtype=float)
    vx = grid.diff1(v, NEU)
    comp = {
        "gradient": eps**2 * grid.integrate(vx**2),
        "mass": grid.integrate(v**2),
    }
    return FormReport(sum(comp.values()), comp)


def form_A_integrated(state: ManifoldState, vt) -> FormReport:
    """A_int[vt] = int eps^2 vt_xx^2 + W''(u^h) vt_x^2 (mass case)."""
    g = state.grid
    eps = state.config.eps
    pot = state.config.potential
    vt = np.asarray(vt, dtype=float)
    vx = g.diff1(vt, INT)
    vxx = g.diff2(vt, INT)
    comp = {
        "curvature": eps**2 * g.integrate(vxx**2),
        "gradient": g.integrate(pot.fp(state.uh) * vx**2),
    }
    return FormReport(sum(comp.values()), comp)


def form_B_integrated(vt, eps: float, grid: Grid) -> FormReport:
    """B_int[vt] = int eps^2 vt_xx^2 + vt_x^2 (mass-case residual norm)."""
    vt = np.asarray(vt, dtype=float)
    vx = grid.diff1(vt, INT)
    vxx = grid.diff2(vt, INT)
    comp = {
        "curvature": eps**2 * grid.integrate(vxx**2),
        "gradient": grid.integrate(vx**2),
    }
    return FormReport(sum(comp.values()), comp)


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------


def energy(u, eps: float, grid: Grid, potential=QUARTIC) -> float:
    """E(u) = int eps^2 u_x^2 / 2 + F(u)."""
    u = np.asarray(u, dtype=float)
    ux = grid.diff1(u, NEU)
    return grid.integrate(0.5 * eps**2 * ux**2 + potential.F(u))


def energy_dissipation(u, coeffs: Coefficients, grid: Grid, potential=QUARTIC) -> float:
    """The negative-definite right side of dE/dt:
    -delta ||(A2 u)_x||^2 - mu ||A2 u||^2."""
    a2 = bistable_part(u, grid, coeffs.eps, potential)
    a2x = grid.diff1(a2, NEU)
    return -coeffs.delta * grid.integrate(a2x**2) - coeffs.mu * grid.integrate(a2**2)


# ---------------------------------------------------------------------------
# Integrated (mass-conserving) operators
# ---------------------------------------------------------------------------


def mathcal_W(u, grid: Grid, potential=QUARTIC):
    """W(u)(x) = Integral_0^x W'(u(y)) dy."""
    return grid.antiderivative(potential.f(np.asarray(u)))


def apply_A_integrated(ut, grid: Grid, eps: float, potential=QUARTIC):
    """Integrated operators; returns (a1, a2) with
    a2 = eps^2 ut_xx - W(ut_x), a1 = -(a2)_xx computed pointwise."""
    ut = np.asarray(ut, dtype=float)
    u = grid.diff1(ut, INT)
    uxx = grid.diff2(ut, INT)
    a2 = eps**2 * uxx - mathcal_W(u, grid, potential)
    a1 = -(eps**2 * grid.diff4(ut, INT) - potential.fp(u) * uxx)
    return a1, a2


def apply_L_integrated(state: ManifoldState, vt):
    """Linearized integrated operators at u^h; returns (l1, l2)."""
    g = state.grid
    eps = state.config.eps
    pot = state.config.potential
    vt = np.asarray(vt, dtype=float)
    vx = g.diff1(vt, INT)
    vxx = g.diff2(vt, INT)
    lw = g.antiderivative(pot.fp(state.uh) * vx)
    l2 = eps**2 * vxx - lw
    l1 = -(
        eps**2 * g.diff4(vt, INT)
        - pot.fpp(state.uh) * state.uh_x * vx
        - pot.fp(state.uh) * vxx
    )
    return l1, l2


def assemble_L1_integrated(state: ManifoldState) -> np.ndarray:
    """Symmetric interior-node matrix of the linearized integrated CH
    operator L1 phi = -eps^2 phi'''' + (W''(u^h) phi')' with
    phi = phi'' = 0 at the ends.  Plain (uniform-weight) symmetric."""
    g = state.grid
    eps = state.config.eps
    a = state.config.potential.fp(state.uh)
    d4, _, _ = g.d4_matrix_interior()
    cons, _, _ = g.conservative_d2_matrix_interior(a)
    mat = (-(eps**2) * d4 + cons).toarray()
    return 0.5 * (mat + mat.T)
