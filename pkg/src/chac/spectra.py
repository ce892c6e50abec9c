"""Eigenvalue computations and constrained Rayleigh minimization.

Dense symmetric solves at desk scale (n <= 2048).  The spectral theorems
are checked through two quantities: the unconstrained spectrum of the
symmetrized linearization S (N near-zero eigenvalues against a gap), and
the minimum of -<S v, v>/||v||^2 over the orthogonal complement of the
tangent space span{tau_j}, which is positive iff the spectral condition
eps^2 mu >= C0 delta holds with margin.
"""

from __future__ import annotations

import types
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericError
from .grid import Grid
from .manifold import ManifoldState, MassManifoldState
from .operators import Coefficients, SOperator, assemble_S, assemble_L1_integrated, fprime_uh_xx
from .profiles import QUARTIC


@dataclass
class SpectralReport:
    eps: float
    delta: float
    mu: float
    eigenvalues: np.ndarray
    constrained_min: float | None
    gap_ratio: float | None
    c1: float
    residual_rel: float
    eta_candidate: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "delta": self.delta,
            "mu": self.mu,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "constrained_min": self.constrained_min,
            "gap_ratio": self.gap_ratio,
            "C1": self.c1,
            "residual_rel": self.residual_rel,
            "eta_candidate": self.eta_candidate,
        }


def uniform_state(grid: Grid, value: float = 1.0, eps: float = 0.05,
                  potential=QUARTIC):
    """Constant-state surrogate carrying just enough fields for operator
    assembly (analytic eigenfunctions cos(k pi x))."""
    st = types.SimpleNamespace()
    st.grid = grid
    st.uh = np.full(grid.n, float(value))
    st.uh_x = np.zeros(grid.n)
    st.uh_xx = np.zeros(grid.n)
    st.uh_xxx = np.zeros(grid.n)
    st.lb = None
    st.config = types.SimpleNamespace(potential=potential, eps=eps)
    return st


def _eigh_descending(sym: np.ndarray):
    lam, vec = sla.eigh(sym)
    return lam[::-1], vec[:, ::-1]


def _residual_rel(sym, lam, vec, k):
    scale = max(np.max(np.abs(lam)), 1.0)
    res = sym @ vec[:, :k] - vec[:, :k] * lam[None, :k]
    return float(np.max(np.linalg.norm(res, axis=0)) / scale)


def constrained_rayleigh_min(state: ManifoldState, coeffs: Coefficients,
                             s_op: SOperator | None = None) -> float:
    """min over v orthogonal to span{tau_j} of -<S v, v> / ||v||^2 (trapezoid
    inner product)."""
    s_op = s_op or assemble_S(state, coeffs)
    n_lay = state.config.n_layers
    t_mat = np.column_stack([s_op.to_sym(state.tau(j)) for j in range(n_lay)])
    # modified Gram-Schmidt with reorthogonalization
    q = np.zeros_like(t_mat)
    for j in range(n_lay):
        v = t_mat[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
        nv = np.linalg.norm(v)
        if nv < 1e-12 * np.linalg.norm(t_mat[:, j]):
            raise NumericError("tangent vectors are numerically rank deficient")
        q[:, j] = v / nv
    full, _ = sla.qr(q, mode="full")
    qc = full[:, n_lay:]
    proj = qc.T @ (-s_op.sym) @ qc
    proj = 0.5 * (proj + proj.T)
    vals = sla.eigvalsh(proj)
    return float(vals[0])


def eigen_S(state, coeffs: Coefficients, k: int = 12,
            with_constrained: bool = True) -> SpectralReport:
    """Top-k eigenvalues of the symmetrized linearization at the state."""
    s_op = assemble_S(state, coeffs)
    k = min(k, state.grid.n)
    lam, vec = _eigh_descending(s_op.sym)
    residual = _residual_rel(s_op.sym, lam, vec, k)
    c1 = float(np.max(np.abs(coeffs.eps**2 * fprime_uh_xx(state))))

    n_lay = getattr(getattr(state, "config", None), "n_layers", None)
    gap_ratio = None
    constrained = None
    if n_lay is not None and with_constrained:
        constrained = constrained_rayleigh_min(state, coeffs, s_op)
        head = np.max(np.abs(lam[:n_lay]))
        gap_ratio = float(abs(lam[n_lay]) / max(head, 1e-300))
    return SpectralReport(
        eps=coeffs.eps, delta=coeffs.delta, mu=coeffs.mu,
        eigenvalues=lam[:k], constrained_min=constrained,
        gap_ratio=gap_ratio, c1=c1, residual_rel=residual,
    )


def eigen_integrated(mass_state: MassManifoldState, k: int = 12) -> SpectralReport:
    """Spectrum of the discrete integrated linearized CH operator L1 with
    phi = phi'' = 0 at the ends, plus constrained positivity of the
    associated form over span{E_j}-perp."""
    state = mass_state.state
    eps = state.config.eps
    mat = assemble_L1_integrated(state)
    lam, vec = _eigh_descending(mat)
    k = min(k, mat.shape[0])
    residual = _residual_rel(mat, lam, vec, k)
    c1 = float(np.max(np.abs(eps**2 * fprime_uh_xx(state))))

    n_xi = mass_state.n_xi
    constrained = None
    if n_xi >= 1:
        e_mat = np.column_stack(
            [mass_state.tangent_E(j)[1:-1] for j in range(n_xi)]
        )
        q, _ = sla.qr(e_mat, mode="economic")
        full, _ = sla.qr(q, mode="full")
        qc = full[:, n_xi:]
        proj = qc.T @ (-mat) @ qc
        proj = 0.5 * (proj + proj.T)
        constrained = float(sla.eigvalsh(proj)[0])
    gap_ratio = None
    if n_xi >= 1:
        head = np.max(np.abs(lam[:n_xi]))
        gap_ratio = float(abs(lam[n_xi]) / max(head, 1e-300))
    return SpectralReport(
        eps=eps, delta=1.0, mu=0.0,
        eigenvalues=lam[:k], constrained_min=constrained,
        gap_ratio=gap_ratio, c1=c1, residual_rel=residual,
    )


def fit_eta(state: ManifoldState, delta: float, eps: float, mu_values) -> tuple:
    """Fit constrained_min ~= Lambda * (mu - C_min * delta * eps^-2) over a
    mu sweep at fixed state and delta.  Returns (Lambda, C_min, r2)."""
    mus = np.asarray(list(mu_values), dtype=float)
    vals = []
    for mu in mus:
        co = Coefficients(eps, delta, mu)
        vals.append(constrained_rayleigh_min(state, co))
    vals = np.array(vals)
    a = np.vstack([mus, np.ones_like(mus)]).T
    coef, res, _, _ = np.linalg.lstsq(a, vals, rcond=None)
    slope, intercept = coef
    ss_tot = float(np.sum((vals - vals.mean()) ** 2))
    r2 = 1.0 - float(res[0]) / ss_tot if res.size and ss_tot > 0 else 1.0
    lam_fit = float(slope)
    c_min = float(-intercept / (slope * delta * eps**-2)) if slope != 0 else np.nan
    return lam_fit, c_min, r2


def locate_cmin_threshold(state: ManifoldState, delta: float, eps: float,
                          c0_lo: float = 0.5, c0_hi: float = 64.0,
                          iters: int = 24) -> float:
    """Empirical spectral-condition threshold: the C0 (mu = C0 delta eps^-2)
    at which the constrained Rayleigh minimum changes sign."""

    def sgn(c0):
        co = Coefficients(eps, delta, c0 * delta * eps**-2)
        return constrained_rayleigh_min(state, co)

    f_lo, f_hi = sgn(c0_lo), sgn(c0_hi)
    tries = 0
    while f_lo > 0 and tries < 8:
        c0_lo *= 0.5
        f_lo = sgn(c0_lo)
        tries += 1
    while f_hi < 0 and tries < 16:
        c0_hi *= 2.0
        f_hi = sgn(c0_hi)
        tries += 1
    if f_lo > 0 or f_hi < 0:
        raise NumericError("failed to bracket the spectral threshold")
    for _ in range(iters):
        mid = 0.5 * (c0_lo + c0_hi)
        if sgn(mid) < 0:
            c0_lo = mid
        else:
            c0_hi = mid
    return 0.5 * (c0_lo + c0_hi)


def neumann_channel_gamma(coeffs: Coefficients, eta: float) -> float:
    """gamma(eps) = (delta^2 eps^-3 + mu^2 eps + eps^-4) / eta."""
    if eta <= 0:
        return float("inf")
    e = coeffs.eps
    return (coeffs.delta**2 * e**-3 + coeffs.mu**2 * e + e**-4) / eta


def mass_channel_gamma(coeffs: Coefficients) -> float:
    """gamma(eps) = mu^2/delta eps^-1 + delta eps^-5 + eps^-2 + mu^2/delta^2 eps."""
    e, d, m = coeffs.eps, coeffs.delta, coeffs.mu
    return m**2 / d / e + d * e**-5 + e**-2 + m**2 / d**2 * e


def eta_landscape(state: ManifoldState, exponent_pairs, c_min: float | None = None):
    """Tabulate the spectral condition over coefficient families
    delta = eps^p, mu = eps^q.  Each row reports the measured constrained
    minimum, the sign of mu - C_min delta eps^-2 (when C_min given), and
    the channel coefficient gamma(eps)."""
    eps = state.config.eps
    rows = []
    for p, q in exponent_pairs:
        coeffs = Coefficients.from_powers(eps, p, q)
        cmin_val = constrained_rayleigh_min(state, coeffs)
        margin = None
        if c_min is not None:
            margin = coeffs.mu - c_min * coeffs.delta * eps**-2
        rows.append(
            {
                "p": p,
                "q": q,
                "delta": coeffs.delta,
                "mu": coeffs.mu,
                "n_eps": coeffs.n_eps,
                "constrained_min": cmin_val,
                "condition_margin": margin,
                "gamma": neumann_channel_gamma(coeffs, cmin_val),
            }
        )
    return rows
