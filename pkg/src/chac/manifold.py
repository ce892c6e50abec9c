"""N-layer approximate states glued from bistable profiles.

u^h on the interval between layer midpoints m_j, m_{j+1} blends the two
neighboring profiles through a smooth cutoff ramp of width 2*eps centered
at the layer position h_j.  All derivative fields are assembled from
profile evaluators and cutoff derivatives (never by grid differencing), so
the bistable residual field stays meaningful at the exponentially small
scale alpha(r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, InfeasibleError, SolverFailure
from .grid import Grid
from .profiles import QUARTIC, Potential, solve_bistable

_BINOM = np.array(
    [
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [1, 2, 1, 0, 0],
        [1, 3, 3, 1, 0],
        [1, 4, 6, 4, 1],
    ],
    dtype=float,
)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# Smooth cutoff and its derivative jets
# ---------------------------------------------------------------------------


def _bump_jet(s):
    """exp(-1/s) for s > 0 (else 0) with derivatives up to order 4."""
    s = np.asarray(s, dtype=float)
    out = np.zeros((5,) + s.shape)
    ok = s > 1.45e-3  # below this exp(-1/s) underflows against any power
    si = 1.0 / np.where(ok, s, 1.0)
    g = np.where(ok, np.exp(-si), 0.0)
    out[0] = g
    out[1] = g * si**2
    out[2] = g * (si**4 - 2.0 * si**3)
    out[3] = g * (si**6 - 6.0 * si**5 + 6.0 * si**4)
    out[4] = g * (si**8 - 12.0 * si**7 + 36.0 * si**6 - 24.0 * si**5)
    out[:, ~ok] = 0.0
    return out


def _quotient_jet(a, b):
    """Jet of a/b given jets (order 4) of a and b."""
    q = np.zeros_like(a)
    q[0] = a[0] / b[0]
    for k in range(1, 5):
        acc = a[k].copy()
        for i in range(1, k + 1):
            acc -= _BINOM[k, i] * b[i] * q[k - i]
        q[k] = acc / b[0]
    return q


def cutoff_jet(t):
    """chi(t) with chi=0 for t<=-1, 1 for t>=1, C^inf in between, plus its
    first four derivatives; shape (5, len(t))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((5, t.size))
    out[0, t >= 1.0] = 1.0
    inside = (t > -1.0) & (t < 1.0)
    if np.any(inside):
        ti = t[inside]
        num = _bump_jet(1.0 + ti)
        den_b = _bump_jet(1.0 - ti)
        sgn = np.array([1.0, -1.0, 1.0, -1.0, 1.0])[:, None]
        den = num + sgn * den_b
        out[:, inside] = _quotient_jet(num, den)
    return out


def cutoff(t):
    return cutoff_jet(t)[0]


def gamma_jet(x, m_lo, m_hi, eps):
    """gamma(x) = chi((x-m_lo-eps)/eps) * [1 - chi((x-m_hi+eps)/eps)] and
    x-derivatives up to order 4 (already scaled by eps powers)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = cutoff_jet((x - m_lo - eps) / eps)
    bjet = cutoff_jet((x - m_hi + eps) / eps)
    b = -bjet
    b[0] = 1.0 - bjet[0]
    scale = eps ** -np.arange(5.0)
    a *= scale[:, None]
    b *= scale[:, None]
    out = np.zeros_like(a)
    for k in range(5):
        for i in range(k + 1):
            out[k] += _BINOM[k, i] * a[i] * b[k - i]
    return out


# ---------------------------------------------------------------------------
# Layer configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerConfig:
    """Admissible layer positions h_1 < ... < h_N with geometry derived per
    the midpoint convention (ell_1 = 2 h_1, ell_{N+1} = 2(1 - h_N))."""

    h: np.ndarray
    eps: float
    rho: float = 0.25
    potential: Potential = QUARTIC
    ell: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        object.__setattr__(self, "h", h)
        if h.ndim != 1 or h.size < 1:
            raise AdmissibilityError("need at least one layer position")
        if np.any(np.diff(h) <= 0):
            raise AdmissibilityError("layer positions must be strictly increasing")
        eps, rho = self.eps, self.rho
        clear = eps / (2.0 * rho)
        if not (h[0] > clear and h[-1] < 1.0 - clear):
            raise AdmissibilityError(
                f"boundary clearance violated: need {clear:.4g} < h_1, h_N < {1-clear:.4g}"
            )
        if h.size > 1 and np.min(np.diff(h)) <= eps / rho:
            raise AdmissibilityError(
                f"minimal gap {np.min(np.diff(h)):.4g} <= eps/rho = {eps/rho:.4g}"
            )
        ell = np.empty(h.size + 1)
        ell[0] = 2.0 * h[0]
        ell[1:-1] = np.diff(h)
        ell[-1] = 2.0 * (1.0 - h[-1])
        m = np.empty(h.size + 1)
        m[0] = 0.0
        m[1:-1] = 0.5 * (h[:-1] + h[1:])
        m[-1] = 1.0
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "m", m)

    @property
    def n_layers(self) -> int:
        return self.h.size

    @property
    def r_values(self) -> np.ndarray:
        return self.eps / self.ell

    @property
    def r(self) -> float:
        return float(np.max(self.r_values))


# ---------------------------------------------------------------------------
# Manifold state
# ---------------------------------------------------------------------------


class ManifoldState:
    """u^h and derived fields on a grid, with evaluators at arbitrary x."""

    def __init__(self, config: LayerConfig, grid: Grid):
        self.config = config
        self.grid = grid
        sgn = lambda i: -1 if (i % 2 == 0) else 1  # profile i carries (-1)^(i+1)
        self.profiles = [
            solve_bistable(config.eps, config.ell[i], sgn(i), potential=config.potential)
            for i in range(config.n_layers + 1)
        ]
        f = self.fields_at(grid.nodes)
        self.uh = f["uh"]
        self.uh_x = f["uh_x"]
        self.uh_xx = f["uh_xx"]
        self.uh_xxx = f["uh_xxx"]
        self.lb = f["lb"]
        self._tau_cache: dict = {}
        self._duh_cache: dict = {}

    # -- core field assembly ------------------------------------------------

    def _blend_defect(self, chi, pa, pb, um):
        """(1-chi) f(pa) + chi f(pb) - f(um), stably for the quartic."""
        pot = self.config.potential
        if isinstance(pot, type(QUARTIC)) or pot.name == "quartic":
            d = pb - pa
            return chi * (1.0 - chi) * d * d * (pa + pb + um)
        return (1.0 - chi) * pot.f(pa) + chi * pot.f(pb) - pot.f(um)

    def fields_at(self, x):
        """uh, uh_x, uh_xx, uh_xxx and the bistable residual lb at x."""
        cfg = self.config
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = x.size
        out = {k: np.zeros(n) for k in ("uh", "uh_x", "uh_xx", "uh_xxx", "lb")}
        idx = np.clip(np.searchsorted(cfg.m, x, side="right") - 1, 0, cfg.n_layers - 1)
        eps = cfg.eps
        for i in range(cfg.n_layers):
            sel = idx == i
            if not np.any(sel):
                continue
            xs = x[sel]
            t = (xs - cfg.h[i]) / eps
            c = cutoff_jet(t)
            pa = np.zeros((4, xs.size))
            pb = np.zeros((4, xs.size))
            ma = t < 1.0
            mb = t > -1.0
            if np.any(ma):
                pa[:, ma] = self._prof_fields(i, xs[ma] - cfg.m[i])
            if np.any(mb):
                pb[:, mb] = self._prof_fields(i + 1, xs[mb] - cfg.m[i + 1])
            d = pb - pa
            chi = c[0]
            uh = pa[0] + chi * d[0]
            uh = np.where(t >= 1.0, pb[0], np.where(t <= -1.0, pa[0], uh))
            c1 = c[1] / eps
            c2 = c[2] / eps**2
            c3 = c[3] / eps**3
            ux = pa[1] + c1 * d[0] + chi * d[1]
            ux = np.where(t >= 1.0, pb[1], np.where(t <= -1.0, pa[1], ux))
            uxx = pa[2] + c2 * d[0] + 2.0 * c1 * d[1] + chi * d[2]
            uxx = np.where(t >= 1.0, pb[2], np.where(t <= -1.0, pa[2], uxx))
            uxxx = pa[3] + c3 * d[0] + 3.0 * c2 * d[1] + 3.0 * c1 * d[2] + chi * d[3]
            uxxx = np.where(t >= 1.0, pb[3], np.where(t <= -1.0, pa[3], uxxx))
            blend = (t > -1.0) & (t < 1.0)
            lb = np.zeros(xs.size)
            if np.any(blend):
                lb_b = (
                    c[2][blend] * d[0][blend]
                    + 2.0 * eps * c1[blend] * d[1][blend]
                    + self._blend_defect(chi[blend], pa[0][blend], pb[0][blend], uh[blend])
                )
                lb[blend] = lb_b
            for key, val in zip(("uh", "uh_x", "uh_xx", "uh_xxx", "lb"),
                                (uh, ux, uxx, uxxx, lb)):
                out[key][sel] = val
        return out

    def _prof_fields(self, i, xloc):
        p = self.profiles[i]
        return np.vstack([p.phi(xloc), p.phi_x(xloc), p.phi_xx(xloc), p.phi_xxx(xloc)])

    # -- tangent vectors ------------------------------------------------------

    def gamma(self, j, x=None):
        x = self.grid.nodes if x is None else x
        cfg = self.config
        return gamma_jet(x, cfg.m[j], cfg.m[j + 1], cfg.eps)

    def tau(self, j):
        """tau_j = gamma_j * uh_x on the grid (cached)."""
        if j not in self._tau_cache:
            g = self.gamma(j)
            self._tau_cache[j] = g[0] * self.uh_x
        return self._tau_cache[j]

    def tau_jet_at(self, j, x, fields=None):
        """(tau, tau_x, tau_xx) at arbitrary x."""
        f = self.fields_at(x) if fields is None else fields
        g = self.gamma(j, x)
        tau = g[0] * f["uh_x"]
        tau_x = g[1] * f["uh_x"] + g[0] * f["uh_xx"]
        tau_xx = g[2] * f["uh_x"] + 2.0 * g[1] * f["uh_xx"] + g[0] * f["uh_xxx"]
        return tau, tau_x, tau_xx

    # -- h-derivatives of u^h ------------------------------------------------

    def duh(self, j):
        if j not in self._duh_cache:
            self._duh_cache[j] = self.duh_at(j, self.grid.nodes)
        return self._duh_cache[j]

    def _w_masked(self, i, xloc, need):
        out = np.zeros(xloc.size)
        if np.any(need):
            out[need] = self.profiles[i].w(xloc[need])
        return out

    def _wx_masked(self, i, xloc, need):
        out = np.zeros(xloc.size)
        if np.any(need):
            out[need] = self.profiles[i].w_x(xloc[need])
        return out

    def _piece_bounds(self, j):
        cfg = self.config
        h, m, eps = cfg.h, cfg.m, cfg.eps
        n_lay = cfg.n_layers
        h_prev = h[j - 1] if j >= 1 else -h[0]
        h_next = h[j + 1] if j + 1 < n_lay else 2.0 - h[-1]
        return h_prev, h_next

    def duh_at(self, j, x):
        """d u^h / d h_j at arbitrary x (five-piece analytic formula)."""
        cfg = self.config
        x = np.atleast_1d(np.asarray(x, dtype=float))
        eps, m, h = cfg.eps, cfg.m, cfg.h
        h_prev, h_next = self._piece_bounds(j)
        out = np.zeros(x.size)

        piece_a = (x >= max(h_prev - eps, 0.0) - 1e-15) & (x <= m[j])
        if np.any(piece_a):
            xa = x[piece_a]
            chi_prev = cutoff((xa - h_prev) / eps)
            out[piece_a] = chi_prev * self.profiles[j].w(xa - m[j])

        piece_b = (x > m[j]) & (x < m[j + 1])
        if np.any(piece_b):
            xb = x[piece_b]
            f = self.fields_at(xb)
            t = (xb - h[j]) / eps
            chi = cutoff(t)
            wj = self._w_masked(j, xb - m[j], t < 1.0)
            wj1 = self._w_masked(j + 1, xb - m[j + 1], t > -1.0)
            out[piece_b] = -f["uh_x"] + (1.0 - chi) * wj - chi * wj1

        piece_e = (x >= m[j + 1]) & (x <= min(h_next + eps, 1.0) + 1e-15)
        if np.any(piece_e):
            xe = x[piece_e]
            chi_next = cutoff((xe - h_next) / eps)
            out[piece_e] = -(1.0 - chi_next) * self.profiles[j + 1].w(xe - m[j + 1])
        return out

    def duh_x_at(self, j, x):
        """x-derivative of d u^h / d h_j (needed at boundary points for the
        mass-case tangents)."""
        cfg = self.config
        x = np.atleast_1d(np.asarray(x, dtype=float))
        eps, m, h = cfg.eps, cfg.m, cfg.h
        h_prev, h_next = self._piece_bounds(j)
        out = np.zeros(x.size)

        piece_a = (x >= max(h_prev - eps, 0.0) - 1e-15) & (x <= m[j])
        if np.any(piece_a):
            xa = x[piece_a]
            cj = cutoff_jet((xa - h_prev) / eps)
            wj = self.profiles[j].w(xa - m[j])
            wjx = self.profiles[j].w_x(xa - m[j])
            out[piece_a] = cj[1] / eps * wj + cj[0] * wjx

        piece_b = (x > m[j]) & (x < m[j + 1])
        if np.any(piece_b):
            xb = x[piece_b]
            f = self.fields_at(xb)
            cj = cutoff_jet((xb - h[j]) / eps)
            t = (xb - h[j]) / eps
            ma, mb = t < 1.0, t > -1.0
            wj = self._w_masked(j, xb - m[j], ma)
            wjx = self._wx_masked(j, xb - m[j], ma)
            wj1 = self._w_masked(j + 1, xb - m[j + 1], mb)
            wj1x = self._wx_masked(j + 1, xb - m[j + 1], mb)
            chix = cj[1] / eps
            out[piece_b] = (
                -f["uh_xx"]
                - chix * (wj + wj1)
                + (1.0 - cj[0]) * wjx
                - cj[0] * wj1x
            )

        piece_e = (x >= m[j + 1]) & (x <= min(h_next + eps, 1.0) + 1e-15)
        if np.any(piece_e):
            xe = x[piece_e]
            cj = cutoff_jet((xe - h_next) / eps)
            wj1 = self.profiles[j + 1].w(xe - m[j + 1])
            wj1x = self.profiles[j + 1].w_x(xe - m[j + 1])
            out[piece_e] = cj[1] / eps * wj1 - (1.0 - cj[0]) * wj1x
        return out

    # -- layer windows and fine quadrature ------------------------------------

    def layer_window(self, j):
        cfg = self.config
        return cfg.h[j] - cfg.eps, cfg.h[j] + cfg.eps

    def window_quad(self, j, integrand, panels: int = 16):
        """Integrate integrand(x) over the residual window of layer j with
        composite Gauss panels (integrand receives a node array)."""
        lo, hi = self.layer_window(j)
        edges = np.linspace(lo, hi, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * (edges[1] - edges[0])
        nodes = (mid + half * _GAUSS_X[None, :]).ravel()
        vals = np.asarray(integrand(nodes)).reshape(panels, -1)
        return float(np.sum(vals @ _GAUSS_W) * half)

    @property
    def alpha_max(self) -> float:
        return max(p.alpha for p in self.profiles)

    @property
    def beta_max(self) -> float:
        return max(p.beta for p in self.profiles)

    def mass(self, panels_per_interval: int = 24) -> float:
        """integral of u^h over [0,1] by per-interval Gauss panels."""
        cfg = self.config
        total = 0.0
        for i in range(cfg.n_layers):
            lo, hi = cfg.m[i], cfg.m[i + 1]
            edges = np.linspace(lo, hi, panels_per_interval + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
            half = 0.5 * (edges[1] - edges[0])
            nodes = (mid + half * _GAUSS_X[None, :]).ravel()
            vals = self.fields_at(nodes)["uh"].reshape(panels_per_interval, -1)
            total += float(np.sum(vals @ _GAUSS_W) * half)
        return total

    def duh_integral(self, j, panels: int = 24) -> float:
        """integral of d u^h / d h_j over [0,1] (d mass / d h_j)."""
        cfg = self.config
        h_prev, h_next = self._piece_bounds(j)
        lo = max(h_prev - cfg.eps, 0.0)
        hi = min(h_next + cfg.eps, 1.0)
        edges = np.linspace(lo, hi, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * (edges[1] - edges[0])
        nodes = (mid + half * _GAUSS_X[None, :]).ravel()
        vals = self.duh_at(j, nodes).reshape(panels, -1)
        return float(np.sum(vals @ _GAUSS_W) * half)


def build_uh(config: LayerConfig, grid: Grid) -> ManifoldState:
    return ManifoldState(config, grid)


def tangent_tau(state: ManifoldState, j: int) -> np.ndarray:
    if not 0 <= j < state.config.n_layers:
        raise IndexError("tangent index out of range")
    return state.tau(j)


def duh_dh(state: ManifoldState, j: int) -> np.ndarray:
    if not 0 <= j < state.config.n_layers:
        raise IndexError("derivative index out of range")
    return state.duh(j)


# ---------------------------------------------------------------------------
# Mass-constrained manifold
# ---------------------------------------------------------------------------


def solve_hN_for_mass(xi, mass, eps, rho=0.25, potential=QUARTIC, tol=1e-12,
                      max_iter=40):
    """Given xi = (h_1..h_{N-1}) find h_N with integral of u^h equal to mass.

    Returns (h_N, dhN_dxi) with the gradient from the implicit function
    theorem.  Newton iteration uses the quadrature mass derivative, which is
    2*(-1)^N + O(eps^{-1} beta) under this sign convention.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    n_lay = xi.size + 1
    lo_lim = (xi[-1] if xi.size else 0.0) + eps / rho
    hi_lim = 1.0 - eps / (2.0 * rho)
    if lo_lim >= hi_lim:
        raise InfeasibleError("no admissible window for the last layer")

    def assemble(h_last):
        h = np.concatenate([xi, [h_last]])
        cfg = LayerConfig(h, eps, rho, potential)
        # grid-free state: only evaluators are used
        st = ManifoldState.__new__(ManifoldState)
        st.config = cfg
        sgn = lambda i: -1 if (i % 2 == 0) else 1
        st.profiles = [
            solve_bistable(eps, cfg.ell[i], sgn(i), potential=potential)
            for i in range(n_lay + 1)
        ]
        st._tau_cache = {}
        st._duh_cache = {}
        return st

    h_last = np.clip(0.5 * (lo_lim + hi_lim), lo_lim + 1e-12, hi_lim - 1e-12)
    # crude bracket scan for a starting point
    cand = np.linspace(lo_lim + 1e-3 * eps, hi_lim - 1e-3 * eps, 9)
    vals = []
    for c in cand:
        try:
            vals.append(assemble(c).mass() - mass)
        except Exception:
            vals.append(np.nan)
    vals = np.array(vals)
    ok = np.isfinite(vals)
    if not np.any(ok):
        raise InfeasibleError("mass constraint infeasible on the admissible window")
    h_last = float(cand[ok][np.argmin(np.abs(vals[ok]))])

    st = None
    for _ in range(max_iter):
        st = assemble(h_last)
        res = st.mass() - mass
        if abs(res) <= tol:
            break
        dm = st.duh_integral(n_lay - 1)
        if abs(dm) < 1e-6:
            raise SolverFailure("degenerate mass derivative in h_N solve")
        step = -res / dm
        h_new = h_last + step
        if not (lo_lim < h_new < hi_lim):
            h_new = 0.5 * (h_last + (lo_lim if step < 0 else hi_lim))
        h_last = float(h_new)
    else:
        raise SolverFailure("mass-constraint Newton did not converge")

    dm_last = st.duh_integral(n_lay - 1)
    grad = np.array(
        [-st.duh_integral(k) / dm_last for k in range(n_lay - 1)]
    )
    return h_last, grad


class MassManifoldState:
    """Constant-mass manifold point: xi with implicit h_N, tangents E_j."""

    def __init__(self, xi, mass, eps, grid: Grid, rho=0.25, potential=QUARTIC,
                 tol=1e-12):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        self.xi = xi
        self.mass = float(mass)
        h_last, grad = solve_hN_for_mass(xi, mass, eps, rho, potential, tol)
        self.h_last = h_last
        self.dhN_dxi = grad
        h = np.concatenate([xi, [h_last]])
        self.state = build_uh(LayerConfig(h, eps, rho, potential), grid)
        self.grid = grid
        self._ej_cache: dict = {}

    @property
    def n_xi(self) -> int:
        return self.xi.size

    def u_xi(self, k):
        """d u^h / d xi_k on the constrained manifold."""
        st = self.state
        n_lay = st.config.n_layers
        return st.duh(k) + st.duh(n_lay - 1) * self.dhN_dxi[k]

    def _wbar(self, j):
        st, g = self.state, self.grid
        dj = st.duh(j) + st.duh(j + 1)
        wbar = g.antiderivative(dj)
        ends = np.array([0.0, 1.0])
        dslope = st.duh_x_at(j, ends) + st.duh_x_at(j + 1, ends)
        return wbar, float(dslope[0]), float(dslope[1])

    def tangent_E(self, j):
        """E_j = wbar_j - Q_j with the cubic Q_j matching wbar's boundary
        data so that E_j and (E_j)_xx vanish at x = 0, 1."""
        if j in self._ej_cache:
            return self._ej_cache[j]
        if not 0 <= j < self.n_xi:
            raise IndexError("mass tangent index out of range")
        x = self.grid.nodes
        wbar, a0, b1 = self._wbar(j)
        c1 = float(wbar[-1])
        q = (
            (-(x**3) / 6.0 + x**2 / 2.0 - x / 3.0) * a0
            + (x**3 - x) / 6.0 * b1
            + x * c1
        )
        ej = wbar - q
        self._ej_cache[j] = ej
        return ej

    def tangent_E_xx(self, j):
        """(E_j)_xx = (u_j^h + u_{j+1}^h)_x - Q_j''."""
        x = self.grid.nodes
        _, a0, b1 = self._wbar(j)
        slope = self.state.duh_x_at(j, x) + self.state.duh_x_at(j + 1, x)
        return slope - ((1.0 - x) * a0 + x * b1)


def tangent_E(mass_state: MassManifoldState, j: int) -> np.ndarray:
    return mass_state.tangent_E(j)
