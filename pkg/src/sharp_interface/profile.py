"""Standing-wave profile and the scalar interface coefficients.

The profile solves ``(P(u))'' = W'(u)`` on the line with u(-inf) = rho_minus,
u(+inf) = rho_plus and u(0) at the midpoint of the wells. It is built from the
first integral ``v' = sqrt(2 Wtilde(u))``: the position xi is a quadrature in
the logit variable ``w = log((u - rho_minus) / (rho_plus - u))``, in which the
integrand is smooth and tends to the constants ``1/gamma_pm`` at the ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import expit

from .errors import ConsistencyError, DomainError, TailError, UnderflowError
from .model import ModelFunctions, gauss_integrate

TAIL_PATCH_DISTANCE = 1e-10
_PANEL = 0.25
_PANEL_NODES = 16


@dataclass(frozen=True)
class XiGrid:
    """Uniform grid on [-L, L] with an odd number of points (xi = 0 included)."""

    L: float = 40.0
    n: int = 8193

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise DomainError(f"grid point count must be odd and >= 3, got {self.n}")
        if not self.L > 0:
            raise DomainError(f"half-width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        k = np.arange(self.n) - (self.n - 1) // 2
        return k * self.h

    def refined(self) -> "XiGrid":
        return XiGrid(self.L, 2 * self.n - 1)

    def extended(self, extra: float) -> "XiGrid":
        """Same spacing, half-width ``L + extra`` (rounded to whole cells)."""
        cells = int(round(extra / self.h))
        return XiGrid(self.L + cells * self.h, self.n + 2 * cells)


@dataclass(frozen=True)
class WaveProfile:
    grid: XiGrid
    u: np.ndarray
    v: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    dddu: np.ndarray
    dv: np.ndarray
    ddv: np.ndarray
    dddv: np.ndarray
    gamma: float
    rho_minus: float = 0.0
    rho_plus: float = 1.0
    gamma_minus: float = float("nan")
    gamma_plus: float = float("nan")
    s_minus: np.ndarray | None = None
    s_plus: np.ndarray | None = None

    @property
    def xi(self) -> np.ndarray:
        return self.grid.points

    def inner(self, f, g) -> float:
        """Line inner product with uniform weight h."""
        return float(self.grid.h * np.dot(f, g))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.xi, self.u, self.v, self.du, self.dv, self.ddv])
        np.savetxt(path, data, delimiter=",", header="xi,u,v,du,dv,ddv", comments="", fmt="%.17g")


class _XiMap:
    """xi as a function of the logit coordinate w, by composite Gauss-Legendre panels."""

    def __init__(self, model: ModelFunctions, w_max: float):
        self.model = model
        self.delta = model.rho_plus - model.rho_minus
        npan = int(np.ceil(w_max / _PANEL))
        self.edges = np.arange(-npan, npan + 1) * _PANEL
        self.x, self.wts = np.polynomial.legendre.leggauss(_PANEL_NODES)
        left, right = self.edges[:-1], self.edges[1:]
        mid = 0.5 * (left + right)
        vals = self.integrand(mid[:, None] + 0.5 * _PANEL * self.x)
        panel = 0.5 * _PANEL * (vals @ self.wts)
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        self.cum = cum - cum[npan]  # xi(0) = 0

    def distances(self, w):
        return self.delta * expit(w), self.delta * expit(-w)

    def integrand(self, w):
        m = self.model
        sm, sp = self.distances(w)
        u = np.where(sm <= sp, m.rho_minus + sm, m.rho_plus - sp)
        wt = m.wtilde_split(sm, sp)
        return m.P(u, 1) * sm * sp / (self.delta * np.sqrt(2.0 * wt))

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        k = np.clip(np.floor((w - self.edges[0]) / _PANEL).astype(int), 0, len(self.edges) - 2)
        a = self.edges[k]
        part = gauss_integrate(self.integrand, a, w, _PANEL_NODES)
        return self.cum[k] + part

    def invert(self, xi, iters: int = 50, tol: float = 1e-14):
        xi = np.asarray(xi, dtype=float)
        w = np.interp(xi, self.cum, self.edges)
        for _ in range(iters):
            step = (self(w) - xi) / self.integrand(w)
            w = w - step
            if np.max(np.abs(step), initial=0.0) < tol:
                break
        return w


def _profile_from_distances(model: ModelFunctions, sm, sp):
    u = np.where(sm <= sp, model.rho_minus + sm, model.rho_plus - sp)
    dv = np.sqrt(2.0 * np.maximum(model.wtilde_split(sm, sp), 0.0))
    P1, P2, P3 = model.P(u, 1), model.P(u, 2), model.P(u, 3)
    du = dv / P1
    ddv = model.dW_split(sm, sp)
    ddu = (ddv - P2 * du**2) / P1
    dddv = model.dW(u, 1) * du
    dddu = (dddv - P3 * du**3 - 3.0 * P2 * du * ddu) / P1
    return dict(u=u, v=model.P(u), du=du, ddu=ddu, dddu=dddu, dv=dv, ddv=ddv, dddv=dddv)


def solve_profile(model: ModelFunctions, grid: XiGrid | None = None) -> WaveProfile:
    """Sample the standing wave on ``grid``.

    Beyond the points where u comes within 1e-10 of a well the linearized
    exponential tail is used; its agreement with the quadrature one unit
    inside the patch point is checked.

    Raises
    ------
    DomainError
        If the half-width is shorter than one decay length.
    TailError
        If the exponential tail disagrees with the quadrature by more than 1e-8.
    """
    grid = grid or XiGrid()
    gm, gp = model.gamma("minus"), model.gamma("plus")
    if grid.L < 1.0 / min(gm, gp):
        raise DomainError(f"L={grid.L} is shorter than the decay length {1.0 / min(gm, gp):.3g}")
    delta = model.rho_plus - model.rho_minus
    w_patch = np.log(delta / TAIL_PATCH_DISTANCE - 1.0)
    xmap = _XiMap(model, w_patch + 2.0)
    xi_patch_p = float(xmap(w_patch))
    xi_patch_m = float(xmap(-w_patch))
    c_plus = TAIL_PATCH_DISTANCE * np.exp(gp * xi_patch_p)
    c_minus = TAIL_PATCH_DISTANCE * np.exp(-gm * xi_patch_m)

    # tail consistency one unit inside each patch point
    for xp, c, g, side in ((xi_patch_p, c_plus, gp, 1), (xi_patch_m, c_minus, gm, -1)):
        probe = xp - side
        sm, sp = xmap.distances(xmap.invert(np.array([probe])))
        s_quad = sp[0] if side > 0 else sm[0]
        s_tail = c * np.exp(-g * probe) if side > 0 else c * np.exp(g * probe)
        if abs(s_tail / s_quad - 1.0) > 1e-8:
            raise TailError(f"tail mismatch {abs(s_tail / s_quad - 1.0):.3e} at xi={probe:.3f}")

    xi = grid.points
    sm = np.empty_like(xi)
    sp = np.empty_like(xi)
    mid = (xi > xi_patch_m) & (xi < xi_patch_p)
    sm[mid], sp[mid] = xmap.distances(xmap.invert(xi[mid]))
    hi = xi >= xi_patch_p
    sp[hi] = c_plus * np.exp(-gp * xi[hi])
    sm[hi] = delta - sp[hi]
    lo = xi <= xi_patch_m
    sm[lo] = c_minus * np.exp(gm * xi[lo])
    sp[lo] = delta - sm[lo]
    fields = _profile_from_distances(model, sm, sp)
    prof = WaveProfile(
        grid=grid, gamma=min(gm, gp), rho_minus=model.rho_minus, rho_plus=model.rho_plus,
        gamma_minus=gm, gamma_plus=gp, s_minus=sm, s_plus=sp, **fields,
    )
    fit = fit_decay(prof)
    return replace(prof, gamma=fit.gamma) if np.isfinite(fit.gamma) else prof


class ProfileInterpolant:
    """Evaluate u and its first two derivatives at arbitrary xi.

    Inside [-L, L] cubic Hermite interpolation of the sampled analytic
    derivatives is used; outside, the exponential tails fitted at the ends.
    """

    def __init__(self, profile: WaveProfile):
        x = profile.xi
        self.L = profile.grid.L
        self.rm, self.rp = profile.rho_minus, profile.rho_plus
        self.gm, self.gp = profile.gamma_minus, profile.gamma_plus
        self._u = CubicHermiteSpline(x, profile.u, profile.du)
        self._du = CubicHermiteSpline(x, profile.du, profile.ddu)
        self._ddu = CubicHermiteSpline(x, profile.ddu, profile.dddu)
        sp_end = profile.s_plus[-1] if profile.s_plus is not None else self.rp - profile.u[-1]
        sm_end = profile.s_minus[0] if profile.s_minus is not None else profile.u[0] - self.rm
        self.cp = sp_end * np.exp(self.gp * self.L)
        self.cm = sm_end * np.exp(self.gm * self.L)

    def __call__(self, xi):
        """Return (u, u', u'') at ``xi``."""
        xi = np.asarray(xi, dtype=float)
        inside = np.abs(xi) <= self.L
        xc = np.clip(xi, -self.L, self.L)
        u, du, ddu = self._u(xc), self._du(xc), self._ddu(xc)
        if not np.all(inside):
            ep = self.cp * np.exp(-self.gp * np.maximum(xi, self.L))
            em = self.cm * np.exp(self.gm * np.minimum(xi, -self.L))
            hi, lo = xi > self.L, xi < -self.L
            u = np.where(hi, self.rp - ep, np.where(lo, self.rm + em, u))
            du = np.where(hi, self.gp * ep, np.where(lo, self.gm * em, du))
            ddu = np.where(hi, -self.gp**2 * ep, np.where(lo, self.gm**2 * em, ddu))
        return u, du, ddu


@dataclass
class ResidualReport:
    ode_residual: float
    identity_residual: float
    monotonicity_violations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def profile_residuals(profile: WaveProfile, model: ModelFunctions) -> ResidualReport:
    """Pointwise residuals of the profile equation and of its first integral."""
    u = profile.u
    ode = np.max(np.abs(profile.ddv + model.B(u) - model.D(u)))
    wt = model.wtilde(u)
    ident = np.max(np.abs(profile.dv - np.sqrt(2.0 * np.maximum(wt, 0.0))))
    violations = int(np.count_nonzero(np.diff(u) <= 0))
    return ResidualReport(float(ode), float(ident), violations)


class DecayFit(NamedTuple):
    gamma: float
    C: float
    residual: float
    reliable: bool
    gamma_max: float


def _tail_slope(x, y):
    A = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    return coef[1], np.exp(coef[0])


def fit_decay_samples(xi, values, lo: float, hi: float, floor: float = 0.0):
    """Exponential envelope fit of ``|values|`` on both tails ``lo <= |xi| <= hi``.

    Returns ``(gamma, C, residual)`` where gamma is the slower of the two tail
    rates and the residual is the relative slope mismatch between the inner and
    outer halves of the window.
    """
    a = np.abs(values)
    rates, consts, resid = [], [], []
    for side in (1, -1):
        sel = (side * xi >= lo) & (side * xi <= hi) & (a > max(floor, 1e-290))
        if np.count_nonzero(sel) < 4:
            raise UnderflowError(f"fewer than 4 usable tail samples on side {side:+d}")
        x, y = side * xi[sel], a[sel]
        g, c = _tail_slope(x, y)
        half = x <= np.median(x)
        g_in, _ = _tail_slope(x[half], y[half]) if np.count_nonzero(half) >= 2 else (g, c)
        g_out, _ = _tail_slope(x[~half], y[~half]) if np.count_nonzero(~half) >= 2 else (g, c)
        rates.append(g)
        consts.append(c)
        resid.append(abs(g_in - g_out) / abs(g))
    return min(rates), max(consts), max(resid)


def fit_decay(profile: WaveProfile) -> DecayFit:
    """Least-squares decay rate of |v'| on both tails.

    The fit is flagged unreliable when the slope mismatch between the inner
    and outer halves of the tail window exceeds 0.1.
    """
    L = profile.grid.L
    g, c, r = fit_decay_samples(profile.xi, profile.dv, L / 2, L)
    gmax = min(profile.gamma_minus, profile.gamma_plus)
    return DecayFit(float(g), float(c), float(r), bool(r <= 0.1), float(gmax))


@dataclass(frozen=True)
class Coefficients:
    theta1: float
    theta2: float
    nu: float
    mu: float
    theta: float
    theta1_rho: float = float("nan")
    theta2_rho: float = float("nan")
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"theta1": self.theta1, "theta2": self.theta2, "nu": self.nu, "mu": self.mu, "theta": self.theta}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def rho_integrals(model: ModelFunctions, panels: int = 16):
    """(int sqrt(2 Wtilde), int P' sqrt(2 Wtilde)) over [rho_minus, rho_plus]."""
    edges = np.linspace(model.rho_minus, model.rho_plus, panels + 1)
    delta = model.rho_plus - model.rho_minus

    def root(r):
        return np.sqrt(2.0 * np.maximum(model.wtilde_split(r - model.rho_minus, model.rho_plus - r), 0.0))

    t1 = gauss_integrate(root, edges[:-1], edges[1:]).sum()
    t2 = gauss_integrate(lambda r: model.P(r, 1) * root(r), edges[:-1], edges[1:]).sum()
    return float(t1), float(t2)


def compute_coefficients(profile: WaveProfile, model: ModelFunctions, op, tol: float = 1e-6) -> Coefficients:
    """theta1, theta2 by two routes; nu from the discrete operator; mu and theta.

    The line-integral values are reported because they are the ones consistent
    with the discrete operator used by the corrector.
    """
    t1_rho, t2_rho = rho_integrals(model)
    t1 = profile.inner(profile.du, profile.dv)
    t2 = profile.inner(profile.dv, profile.dv)
    for name, a, b in (("theta1", t1, t1_rho), ("theta2", t2, t2_rho)):
        if abs(a - b) > tol * abs(b):
            raise ConsistencyError(f"{name}: line {a:.12g} vs rho-quadrature {b:.12g}")
    nu = -0.5 * profile.inner(op.L_dv, profile.dv)
    return Coefficients(t1, t2, nu, nu / t1**2, t2 / t1, t1_rho, t2_rho)
