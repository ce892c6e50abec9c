"""Stationary bistable layer profiles on an interval.

Solves the Dirichlet problem

    eps^2 phi'' = f(phi),   |x| < ell/2 + eps,    phi(-ell/2) = phi(ell/2) = 0,

with a double-well nonlinearity f = F', via the conserved first integral

    (eps^2/2) (phi')^2 = F(phi) - F(p),          p = phi(0).

Everything exponentially small lives here: the peak deficit beta = 1 - p,
the peak potential value alpha = F(p), and the slow ell-derivative
correction w used for d(u^h)/dh_j.  The solver is parameterized by
b := 1 - p throughout, so profiles remain meaningful even when beta is far
below machine epsilon relative to 1.

Coordinates: with y := sqrt(p - phi) the half-profile map is

    x(y) = eps * sqrt(2) * Integral_0^y G(s)^(-1/2) ds,
    G(s) := (F(p - s^2) - F(p)) / s^2,

whose integrand is smooth (the 1/sqrt turning-point singularity at phi = p
is removed by the substitution).  G develops a boundary layer of width
~sqrt(beta) at s = 0, resolved by geometrically refined quadrature panels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConventionError, SolverFailure, ThinLayerError

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)
_SQRT2 = math.sqrt(2.0)


class Potential:
    """Double equal-well potential F with f = F'.

    Only the quartic instance below is validated; the interface exists so
    the solvers stay generic over symmetric (odd-f) wells with minima at
    u = -1, +1 and F(+-1) = 0.
    """

    name = "generic"
    odd = True

    def f(self, u):
        raise NotImplementedError

    def fp(self, u):
        raise NotImplementedError

    def fpp(self, u):
        raise NotImplementedError

    def fppp(self, u):
        raise NotImplementedError

    def F(self, u):
        raise NotImplementedError

    # -- stable helpers in the deficit variable b = 1 - p ------------------

    def F_peak(self, b):
        """F(1 - b), stable for tiny b."""
        return self.F(1.0 - b)

    def minus_f_peak(self, b):
        """-f(1 - b) > 0, stable for tiny b."""
        return -self.f(1.0 - b)

    def g_poly(self, b):
        """Coefficients (c0, c2, c4, c6) of G(s); exact for quartic wells,
        a Taylor surrogate otherwise (used only to set quadrature scales)."""
        p = 1.0 - b
        return (self.minus_f_peak(b), 0.5 * self.fp(p), -self.fpp(p) / 6.0,
                self.fppp(p) / 24.0)

    def g_exact(self):
        """Whether g_poly is exact (quartic F)."""
        return False


class QuarticPotential(Potential):
    """f(u) = u^3 - u, F(u) = (u^2-1)^2 / 4, computed in factored form so
    values stay accurate near the wells u = +-1."""

    name = "quartic"

    def f(self, u):
        return u * (u - 1.0) * (u + 1.0)

    def fp(self, u):
        return 3.0 * u * u - 1.0

    def fpp(self, u):
        return 6.0 * u

    def fppp(self, u):
        return 6.0 * np.ones_like(np.asarray(u, dtype=float))

    def F(self, u):
        q = (u - 1.0) * (u + 1.0)
        return 0.25 * q * q

    def F_peak(self, b):
        return 0.25 * (b * (2.0 - b)) ** 2

    def minus_f_peak(self, b):
        return (1.0 - b) * b * (2.0 - b)

    def g_poly(self, b):
        c0 = self.minus_f_peak(b)
        c2 = 0.5 * (2.0 - 6.0 * b + 3.0 * b * b)
        c4 = -(1.0 - b)
        c6 = 0.25
        return (c0, c2, c4, c6)

    def g_exact(self):
        return True


QUARTIC = QuarticPotential()


# ---------------------------------------------------------------------------
# Asymptotic constants
# ---------------------------------------------------------------------------


class AsymptoticConvention(enum.Enum):
    """Decay-exponent convention for the alpha/beta asymptotics.

    PAPER_FPRIME takes A = f'(+-1) as printed; SQRT_FPRIME takes
    A = sqrt(f'(+-1)).  For the quartic only the square-root convention
    yields a convergent prefactor integral (the other leaves an
    uncancelled 1/(1-t) singularity); tests validate it against the
    profile solver.
    """

    PAPER_FPRIME = "fprime"
    SQRT_FPRIME = "sqrt_fprime"


@dataclass(frozen=True)
class AsymptoticConstants:
    a_plus: float
    a_minus: float
    k_plus: float
    k_minus: float
    convention: AsymptoticConvention


def _prefactor_integral(potential, a_exponent, well_sign):
    """K = 2 exp( int_0^1 [ A / sqrt(2 F(+-t)) - 1/(1-t) ] dt ).

    The integrand is finite at t=1 only if A equals sqrt(f'(+-1)); a
    mismatch is reported instead of silently integrating a divergence.
    """
    fp1 = potential.fp(well_sign * 1.0)
    if fp1 <= 0:
        raise ConventionError("potential has no positive curvature at the well")
    if abs(a_exponent / math.sqrt(fp1) - 1.0) > 1e-9:
        raise ConventionError(
            "prefactor integral diverges: exponent "
            f"{a_exponent:.6g} != sqrt(f'({well_sign:+d})) = {math.sqrt(fp1):.6g}"
        )

    def integrand(t):
        return a_exponent / np.sqrt(2.0 * potential.F(well_sign * t)) - 1.0 / (1.0 - t)

    # geometric panels accumulating toward the (cancelled) singularity at 1
    edges = [0.0]
    gap = 1.0
    while gap > 1e-9:
        gap *= 0.5
        edges.append(1.0 - gap)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total += half * float(np.dot(_GAUSS_W, integrand(mid + half * _GAUSS_X)))
    return 2.0 * math.exp(total)


def asymptotic_constants(
    convention: AsymptoticConvention = AsymptoticConvention.SQRT_FPRIME,
    potential: Potential = QUARTIC,
) -> AsymptoticConstants:
    fp_p, fp_m = potential.fp(1.0), potential.fp(-1.0)
    if convention is AsymptoticConvention.PAPER_FPRIME:
        a_p, a_m = fp_p, fp_m
    else:
        a_p, a_m = math.sqrt(fp_p), math.sqrt(fp_m)
    a_min = min(a_p, a_m)
    k_p = _prefactor_integral(potential, a_min, +1)
    k_m = _prefactor_integral(potential, a_min, -1)
    return AsymptoticConstants(a_p, a_m, k_p, k_m, convention)


def asymptotic_alpha_beta(r: float, constants: AsymptoticConstants):
    """Leading-order (alpha_hat, beta_hat) at ratio r = eps/ell."""
    if r <= 0:
        raise ValueError("r must be positive")
    a, k = constants.a_plus, constants.k_plus
    beta_hat = k * math.exp(-a / (2.0 * r))
    alpha_hat = 0.5 * k * k * a * a * math.exp(-a / r)
    return alpha_hat, beta_hat


# ---------------------------------------------------------------------------
# Orbit quadrature engine
# ---------------------------------------------------------------------------


class _Orbit:
    """Quadrature tables for one first-integral orbit at deficit b."""

    def __init__(self, b: float, potential: Potential):
        self.b = b
        self.pot = potential
        self.c0, self.c2, self.c4, self.c6 = potential.g_poly(b)
        if self.c0 <= 0.0:
            raise SolverFailure(f"non-positive orbit energy at b={b:.3g}")
        p = 1.0 - b
        self.sqrt_p = math.sqrt(p) if p > 0 else 0.0
        self._build_panels()
        self._psi_tables()
        self._j_cum = None

    # G(s) and G'(s)/s --------------------------------------------------

    def g(self, s):
        s2 = np.square(s)
        if self.pot.g_exact():
            return self.c0 + s2 * (self.c2 + s2 * (self.c4 + s2 * self.c6))
        p = 1.0 - self.b
        out = np.where(
            s2 > 1e-6,
            (self.pot.F(p - s2) - self.pot.F(p)) / np.where(s2 > 0, s2, 1.0),
            self.c0 + s2 * (self.c2 + s2 * self.c4),
        )
        return out

    def gp_over_s(self, s):
        s2 = np.square(s)
        if self.pot.g_exact():
            return 2.0 * self.c2 + s2 * (4.0 * self.c4 + 6.0 * s2 * self.c6)
        p = 1.0 - self.b
        phi = p - s2
        direct = -2.0 * (self.pot.f(phi) + self.g(s)) / np.where(s2 > 0, s2, 1.0)
        taylor = 2.0 * self.c2 + s2 * (4.0 * self.c4 + 6.0 * s2 * self.c6)
        return np.where(s2 > 1e-6, direct, taylor)

    # panels --------------------------------------------------------------

    def _build_panels(self):
        s_star = math.sqrt(self.c0 / (abs(self.c2) + 1.0))
        edges = [self.sqrt_p]
        e = self.sqrt_p
        floor = max(1e-3 * s_star, 1e-290)
        while e > floor:
            e *= 0.5
            edges.append(e)
        edges.append(0.0)
        self.edges = np.array(edges[::-1])

    def _panel_nodes(self):
        a = self.edges[:-1][:, None]
        bb = self.edges[1:][:, None]
        mid, half = 0.5 * (a + bb), 0.5 * (bb - a)
        return mid + half * _GAUSS_X[None, :], half[:, 0]

    def _psi_tables(self):
        nodes, half = self._panel_nodes()
        vals = 1.0 / np.sqrt(self.g(nodes))
        panel = (vals @ _GAUSS_W) * half
        self.psi_cum = np.concatenate([[0.0], np.cumsum(panel)])
        self.psi_total = float(self.psi_cum[-1])

    def _ensure_j(self):
        if self._j_cum is not None:
            return
        nodes, half = self._panel_nodes()
        vals = self.gp_over_s(nodes) * self.g(nodes) ** (-2.5)
        panel = (vals @ _GAUSS_W) * half
        rev = np.concatenate([[0.0], np.cumsum(panel[::-1])])[::-1]
        self._j_cum = rev  # J at edges: integral from edge to sqrt_p

    # point evaluation ------------------------------------------------------

    def _partial(self, lo, y, func):
        mid, half = 0.5 * (lo + y), 0.5 * (y - lo)
        nodes = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
        return (func(nodes) @ _GAUSS_W) * half

    def psi(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        k = np.clip(np.searchsorted(self.edges, y, side="right") - 1, 0,
                    len(self.edges) - 2)
        lo = self.edges[k]
        return self.psi_cum[k] + self._partial(lo, y, lambda s: 1.0 / np.sqrt(self.g(s)))

    def j_integral(self, y):
        """J(y) = int_y^{sqrt_p} (G'/s) G^(-5/2) ds."""
        self._ensure_j()
        y = np.atleast_1d(np.asarray(y, dtype=float))
        k = np.clip(np.searchsorted(self.edges, y, side="right") - 1, 0,
                    len(self.edges) - 2)
        hi = self.edges[k + 1]
        func = lambda s: self.gp_over_s(s) * self.g(s) ** (-2.5)
        partial = self._partial(y, hi, func)
        return self._j_cum[k + 1] + partial

    def invert(self, tau):
        """Solve psi(y) = tau for y in [0, sqrt_p], vectorized."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau > self.psi_total * (1.0 + 1e-9) + 1e-12):
            raise SolverFailure("inverse query beyond the quarter period")
        y = np.interp(tau, self.psi_cum, self.edges)
        for _ in range(6):
            res = self.psi(y) - tau
            y = np.clip(y - res * np.sqrt(self.g(y)), 0.0, self.sqrt_p)
            if np.max(np.abs(res)) < 1e-13 * (1.0 + np.max(tau)):
                break
        res = np.abs(self.psi(y) - tau)
        if np.max(res) > 1e-10 * (1.0 + np.max(tau)):
            raise SolverFailure("profile inversion did not converge")
        return y


# ---------------------------------------------------------------------------
# Peak solve
# ---------------------------------------------------------------------------


def _solve_deficit(r: float, potential: Potential, tol: float) -> float:
    """Find b = 1 - phi(0) with quarter-period condition Psi(sqrt_p) = 1/(2 sqrt2 r)."""
    target = 1.0 / (2.0 * _SQRT2 * r)

    def shoot(t):
        return _Orbit(math.exp(t), potential).psi_total - target

    # initial guess from the validated asymptotics, when available
    try:
        const = _cached_constants(potential)
        b0 = const.k_plus * math.exp(-const.a_plus / (2.0 * r))
        t0 = math.log(min(max(b0, 1e-270), 0.3))
    except ConventionError:
        t0 = math.log(0.05)

    lo, hi = t0 - 0.8, t0 + 0.8
    flo, fhi = shoot(lo), shoot(hi)
    tries = 0
    while flo * fhi > 0.0 and tries < 60:
        if abs(flo) < abs(fhi):
            lo -= 1.6
            flo = shoot(lo)
        else:
            hi = min(hi + 1.6, math.log(0.9))
            fhi = shoot(hi)
        tries += 1
    if flo * fhi > 0.0:
        raise SolverFailure(
            f"failed to bracket the profile peak at r={r:.4g} "
            f"(residuals {flo:.3g}, {fhi:.3g})"
        )
    t = brentq(shoot, lo, hi, xtol=max(tol, 1e-14), rtol=8.9e-16)
    return math.exp(t)


_CONST_CACHE: dict = {}


def _cached_constants(potential: Potential) -> AsymptoticConstants:
    key = potential.name
    if key not in _CONST_CACHE:
        _CONST_CACHE[key] = asymptotic_constants(
            AsymptoticConvention.SQRT_FPRIME, potential
        )
    return _CONST_CACHE[key]


# ---------------------------------------------------------------------------
# Profile object
# ---------------------------------------------------------------------------


class BistableProfile:
    """Solution phi(., ell, sign) of the bistable Dirichlet problem.

    Evaluators accept any |x| <= ell/2 + eps (+ small slack); the profile
    is even in x, and beyond its zero at ell/2 it continues along the same
    orbit, which for odd f is the point reflection through (ell/2, 0).
    """

    def __init__(self, eps, ell, sign, orbit: _Orbit, potential: Potential):
        self.eps = float(eps)
        self.ell = float(ell)
        self.sign = int(sign)
        self.r = self.eps / self.ell
        self.pot = potential
        self._orbit = orbit
        self.beta = orbit.b
        self.peak = sign * (1.0 - orbit.b)
        self.alpha = potential.F_peak(orbit.b)
        self._alpha_prime = None
        self.x_max = 0.5 * self.ell + self.eps

    # -- geometry helpers ---------------------------------------------------

    def _fold(self, x):
        """Map x to (xm, slope_sign, mirrored) with xm in [0, ell/2]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.abs(x) > self.x_max * (1.0 + 1e-9) + 1e-12):
            raise SolverFailure("profile evaluated outside its interval")
        ax = np.abs(x)
        mirrored = ax > 0.5 * self.ell
        xm = np.where(mirrored, self.ell - ax, ax)
        xm = np.clip(xm, 0.0, 0.5 * self.ell)
        return ax, xm, mirrored

    def _y_of(self, xm):
        return self._orbit.invert(xm / (self.eps * _SQRT2))

    # -- evaluators ---------------------------------------------------------

    def phi(self, x):
        ax, xm, mirrored = self._fold(x)
        y = self._y_of(xm)
        val = 1.0 - (self._orbit.b + y * y)
        val = np.where(mirrored, -val, val)
        return self.sign * val

    def phi_x(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        ax, xm, mirrored = self._fold(x_arr)
        y = self._y_of(xm)
        slope = -(_SQRT2 / self.eps) * y * np.sqrt(self._orbit.g(y))
        return self.sign * np.sign(x_arr) * slope

    def phi_xx(self, x):
        return self.pot.f(self.phi(x)) / self.eps**2

    def phi_xxx(self, x):
        return self.pot.fp(self.phi(x)) * self.phi_x(x) / self.eps**2

    def phi_xxxx(self, x):
        ph = self.phi(x)
        return (
            self.pot.fpp(ph) * self.phi_x(x) ** 2
            + self.pot.fp(ph) * self.pot.f(ph) / self.eps**2
        ) / self.eps**2

    # -- exponentially small derived quantities ------------------------------

    @property
    def alpha_prime(self):
        """d alpha / d r by centered differencing at relative step 1e-3."""
        if self._alpha_prime is None:
            eta = 1e-3
            r_hi, r_lo = self.r * (1.0 + eta), self.r * (1.0 - eta)
            a_hi = self.pot.F_peak(_solve_deficit(r_hi, self.pot, 1e-14))
            a_lo = self.pot.F_peak(_solve_deficit(r_lo, self.pot, 1e-14))
            self._alpha_prime = (a_hi - a_lo) / (r_hi - r_lo)
        return self._alpha_prime

    def _w_core(self, xm):
        """phi_x * Integral_{ell/2}^{x} phi_x^{-2} for the +1 profile, in the
        stable integrated-by-parts form; xm in [0, ell/2]."""
        orbit = self._orbit
        y = self._y_of(xm)
        gy = orbit.g(y)
        g_end = float(orbit.g(np.array([orbit.sqrt_p]))[0])
        c_end = g_end ** (-1.5) / orbit.sqrt_p
        jm = orbit.j_integral(y)
        core = 1.0 / gy - y * np.sqrt(gy) * (c_end + 1.5 * jm)
        return self.eps**2 * core

    def w(self, x):
        """Slow correction w(x, ell, sign); even in x, odd about x = ell/2."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        ax, xm, mirrored = self._fold(x_arr)
        scale = self.alpha_prime / (self.eps * self.ell**2)
        val = scale * self._w_core(xm)
        val = np.where(mirrored, -val, val)
        return self.sign * val

    def w_x(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        ax, xm, mirrored = self._fold(x_arr)
        scale = self.alpha_prime / (self.eps * self.ell**2)
        orbit = self._orbit
        out = np.empty_like(xm)
        near = xm < 0.1 * self.eps
        if np.any(near):
            # even function: w_x ~ x * f'(p) w(0) / eps^2 near the center
            w0 = scale * self.eps**2 / orbit.c0
            fp_peak = 2.0 * orbit.c2  # f'(p)
            out[near] = xm[near] * fp_peak * w0 / self.eps**2
        far = ~near
        if np.any(far):
            y = orbit.invert(xm[far] / (self.eps * _SQRT2))
            gy = orbit.g(y)
            g_end = float(orbit.g(np.array([orbit.sqrt_p]))[0])
            c_end = g_end ** (-1.5) / orbit.sqrt_p
            jm = orbit.j_integral(y)
            big_i = -(self.eps**3 / _SQRT2) * (
                gy ** (-1.5) / y - c_end - 1.5 * jm
            )
            slope = -(_SQRT2 / self.eps) * y * np.sqrt(gy)
            curv = self.pot.f(1.0 - (orbit.b + y * y)) / self.eps**2
            out[far] = scale * (curv * big_i + 1.0 / slope)
        # w even about 0 -> w_x odd; w odd about ell/2 -> w_x even there
        out = out * np.sign(np.atleast_1d(x_arr))
        out = np.where(mirrored, out, out)
        return self.sign * out

    def phi_ell(self, x):
        """Partial derivative of phi with respect to ell at fixed eps."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        return -0.5 * np.sign(x_arr) * self.phi_x(x_arr) + self.w(x_arr)

    # -- sampling & oracles ---------------------------------------------------

    def samples(self, n: int = 2049):
        """(x, phi, phi_x, w) on a uniform local grid over the full interval."""
        x = np.linspace(-self.x_max, self.x_max, n)
        return x, self.phi(x), self.phi_x(x), self.w(x)

    def residual_sup(self, n: int = 2049) -> float:
        """sup |eps^2 phi'' - f(phi)| with phi'' from a 6th-order finite
        difference of the stored phi_x samples (independent of the first
        integral used to build them)."""
        x = np.linspace(-self.x_max, self.x_max, n)
        h = x[1] - x[0]
        px = self.phi_x(x)
        ph = self.phi(x)
        stencil = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / (60.0 * h)
        d = np.zeros(n - 6)
        for k, c in enumerate(stencil):
            d += c * px[k : k + n - 6]
        res = self.eps**2 * d - self.pot.f(ph[3:-3])
        return float(np.max(np.abs(res)))

    def evenness_defect(self, n: int = 1025) -> float:
        x = np.linspace(0.0, self.x_max, n)
        return float(np.max(np.abs(self.phi(x) - self.phi(-x))))


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

_PROFILE_CACHE: dict = {}
R_MAX_DEFAULT = 0.25


def solve_bistable(
    eps: float,
    ell: float,
    sign: int = +1,
    tol: float = 1e-12,
    potential: Potential = QUARTIC,
    r_max: float = R_MAX_DEFAULT,
) -> BistableProfile:
    """Solve the bistable Dirichlet problem; results are cached by
    (eps, ell quantized to 1e-12, sign, potential)."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if eps <= 0 or ell <= 0 or tol <= 0:
        raise ValueError("eps, ell, tol must be positive")
    r = eps / ell
    if r > r_max:
        raise ThinLayerError(f"eps/ell = {r:.4g} exceeds r_max = {r_max:.4g}")
    key = (float(eps), int(round(ell / 1e-12)), sign, potential.name)
    hit = _PROFILE_CACHE.get(key)
    if hit is not None:
        return hit
    b = _solve_deficit(r, potential, tol)
    prof = BistableProfile(eps, ell, sign, _Orbit(b, potential), potential)
    if len(_PROFILE_CACHE) > 4096:
        _PROFILE_CACHE.clear()
    _PROFILE_CACHE[key] = prof
    return prof


def clear_profile_cache():
    _PROFILE_CACHE.clear()


def alpha_beta(profile: BistableProfile):
    """(alpha, beta) = (F(phi(0)), 1 -+ phi(0)) of an accepted profile."""
    return profile.alpha, profile.beta


def profile_bounds_report(profile: BistableProfile, n: int = 4097) -> dict:
    """Numerically evaluate the left sides of the classical profile bounds
    and report the implied constants (diagnostic, not ground truth)."""
    eps, ell = profile.eps, profile.ell
    x = np.linspace(-profile.x_max, profile.x_max, n)
    ph = profile.phi(x)
    px = profile.phi_x(x)
    pxx = profile.phi_xx(x)

    near_ends = np.abs(np.abs(x) - 0.5 * ell) <= eps
    near_center = np.abs(x) <= 2.0 * eps
    inner = np.abs(x) <= 0.5 * ell

    h = x[1] - x[0]
    total_variation = float(np.sum(np.abs(px[inner])) * h)
    l2_pxx = float(np.sum(pxx[inner] ** 2) * h)

    b = profile.beta
    report = {
        "r": profile.r,
        "alpha": profile.alpha,
        "beta": b,
        "sup_abs_phi_near_ends": float(np.max(np.abs(ph[near_ends]))),
        "min_F_near_ends": float(np.min(profile.pot.F(ph[near_ends]))),
        "int_abs_phi_x": total_variation,
        "eps3_int_phi_xx_sq": eps**3 * l2_pxx,
        "well_deficit_over_beta": float(
            np.max(np.abs(1.0 - profile.sign * ph[near_center])) / b
        ),
        "eps_phi_x_over_beta": float(np.max(np.abs(px[near_center])) * eps / b),
        "sup_w_eps_over_beta": float(np.max(np.abs(profile.w(x))) * eps / b),
        "sup_w_near_ends_eps_over_alpha": float(
            np.max(np.abs(profile.w(x[near_ends]))) * eps / profile.alpha
        ),
        "sup_wx_eps2_r_over_beta": float(
            np.max(np.abs(profile.w_x(x))) * eps**2 * profile.r / b
        ),
    }
    return report
