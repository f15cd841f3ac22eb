"""Optimal first-order corrector and the associated quadratic cost.

For interface data (a, b) = (time derivative of d, Laplacian of d) the cost
density of a corrector profile Q is ``<F_Q, (-L)^{-1} F_Q>`` with

    F_Q = u' a - v' b - 2 v'' Q' - v' Q''.

The minimizer has ``Q' = (1/v'^2) int_{-inf}^{xi} psi v'`` where
``psi = u' a - v' b - (lambda/2) L v'`` and lambda enforces ``psi ⊥ v'``.
Everything is linear in (a, b), so two basis solves suffice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import QuadratureError, ShapeError
from .linop import LineOperator
from .model import ModelFunctions
from .profile import WaveProfile

VANISHING_DV = 1e-10


def lambda_coeff(a: float, b: float, profile: WaveProfile, op: LineOperator) -> float:
    """Multiplier 2 (theta2 b - theta1 a) / (2 nu) from the discrete inner products."""
    t1 = profile.inner(profile.du, profile.dv)
    t2 = profile.inner(profile.dv, profile.dv)
    two_nu = -profile.inner(op.L_dv, profile.dv)
    return 2.0 * (t2 * b - t1 * a) / two_nu


def endpoint_limits(model: ModelFunctions, a: float, b: float, lam: float):
    """Closed-form limits of Q_min' at xi -> -inf and xi -> +inf."""
    out = []
    for r, sign in ((model.rho_minus, 1.0), (model.rho_plus, -1.0)):
        P1 = model.P(r, 1)
        W2 = model.dW(r, 1)
        K = (a / P1 - b) - 0.5 * lam * (2.0 * model.sigma(r) * W2 / P1 - (model.B(r) + model.D(r)))
        out.append(float(sign * K * np.sqrt(P1 / (4.0 * W2))))
    return tuple(out)


def _slope_from_source(psi, profile: WaveProfile, tol: float = 1e-8):
    """Q' = (1/v'^2) int_{-inf}^{xi} psi v' and Q'' from the ODE.

    The running integral is accumulated from the nearer end of the line so
    that the exponentially small values in each tail keep relative precision.
    Returns (dQ, ddQ, total) where total is the full-line integral.
    """
    h = profile.grid.h
    dv = profile.dv
    g = psi * dv
    t_left = g[0] / (2.0 * profile.gamma_minus)
    t_right = g[-1] / (2.0 * profile.gamma_plus)
    left = t_left + cumulative_simpson(g, dx=h, initial=0.0)
    right = -(t_right + cumulative_simpson(g[::-1], dx=h, initial=0.0)[::-1])
    total = left[-1] + t_right
    scale = max(np.max(np.abs(g)), 1.0)
    if abs(total) > tol * scale:
        raise QuadratureError(f"source not orthogonal to v': full-line integral {total:.3e}")
    c = (profile.grid.n - 1) // 2
    running = np.concatenate([left[: c + 1], right[c + 1 :]])
    ok = dv > VANISHING_DV
    dQ = np.zeros_like(dv)
    dQ[ok] = running[ok] / dv[ok] ** 2
    ddQ = np.zeros_like(dv)
    ddQ[ok] = (psi[ok] - 2.0 * profile.ddv[ok] * dQ[ok]) / dv[ok]
    return dQ, ddQ, ok, total


def _continue_tails(dQ, ok, limits):
    """Fill dQ where v' has underflowed.

    The last resolved value is continued; it agrees with the closed-form limit
    up to the O(h^2) discretization error and keeps Q' continuous. Without any
    resolved tail node the closed-form limit itself is used.
    """
    idx = np.flatnonzero(ok)
    c = (dQ.size - 1) // 2
    lo = idx[0] if idx.size and idx[0] < c else None
    hi = idx[-1] if idx.size and idx[-1] > c else None
    dQ[: (lo if lo is not None else c)] = dQ[lo] if lo is not None else limits[0]
    dQ[(hi + 1 if hi is not None else c + 1) :] = dQ[hi] if hi is not None else limits[1]


def _integrate_from_center(dQ, h):
    c = (dQ.size - 1) // 2
    Q = np.empty_like(dQ)
    Q[c:] = cumulative_simpson(dQ[c:], dx=h, initial=0.0)
    Q[: c + 1] = -cumulative_simpson(dQ[: c + 1][::-1], dx=h, initial=0.0)[::-1]
    return Q


def f_of_q(a: float, b: float, Q, profile: WaveProfile) -> np.ndarray:
    """F = u' a - v' b - 2 v'' Q' - v' Q'' for Q given as (Q, dQ, ddQ)."""
    _, dQ, ddQ = Q
    n = profile.grid.n
    if np.shape(dQ) != (n,) or np.shape(ddQ) != (n,):
        raise ShapeError("corrector derivatives must be sampled on the profile grid")
    return profile.du * a - profile.dv * b - 2.0 * profile.ddv * dQ - profile.dv * ddQ


class CostDensity(NamedTuple):
    full: float
    half: float


def cost_density(a: float, b: float, Q, profile: WaveProfile, op: LineOperator) -> CostDensity:
    """<F, (-L)^{-1} F> (full) and half of it."""
    F = f_of_q(a, b, Q, profile)
    full = -op.inner(F, op.solve(F))
    return CostDensity(full, 0.5 * full)


@dataclass(frozen=True, eq=False)
class CorrectorBasis:
    xi: np.ndarray
    Q_A: np.ndarray
    Q_B: np.ndarray
    dQ_A: np.ndarray
    dQ_B: np.ndarray
    ddQ_A: np.ndarray
    ddQ_B: np.ndarray
    H_A: np.ndarray
    H_B: np.ndarray
    lambda_A: float
    lambda_B: float
    limits_A: tuple
    limits_B: tuple
    orthogonality_residual: float = 0.0

    def Q(self, a: float, b: float):
        """(Q, Q', Q'') of the minimizer for data (a, b)."""
        return (
            a * self.Q_A + b * self.Q_B,
            a * self.dQ_A + b * self.dQ_B,
            a * self.ddQ_A + b * self.ddQ_B,
        )

    def lam(self, a: float, b: float) -> float:
        return a * self.lambda_A + b * self.lambda_B

    def to_csv(self, path) -> None:
        data = np.column_stack([self.xi, self.Q_A, self.Q_B, self.dQ_A, self.dQ_B, self.H_A, self.H_B])
        np.savetxt(path, data, delimiter=",", header="xi,Q_A,Q_B,dQ_A,dQ_B,H_A,H_B", comments="", fmt="%.17g")


def qmin_basis(profile: WaveProfile, op: LineOperator, model: ModelFunctions, offset: float = 0.0) -> CorrectorBasis:
    """Basis profiles of the optimal corrector and of the first-order maximizer.

    Parameters
    ----------
    offset : float
        Additive constant of Q (the minimizer is unique only up to it); it
        does not affect any cost value.
    """
    h = profile.grid.h
    parts = {}
    resid = 0.0
    for key, (a, b) in (("A", (1.0, 0.0)), ("B", (0.0, 1.0))):
        lam = lambda_coeff(a, b, profile, op)
        psi = profile.du * a - profile.dv * b - 0.5 * lam * op.L_dv
        resid = max(resid, abs(profile.inner(psi, profile.dv)))
        dQ, ddQ, ok, _ = _slope_from_source(psi, profile)
        lim_m, lim_p = endpoint_limits(model, a, b, lam)
        _continue_tails(dQ, ok, (lim_m, lim_p))
        Q = _integrate_from_center(dQ, h) + offset
        F = f_of_q(a, b, (Q, dQ, ddQ), profile)
        H = op.solve(-F)
        parts[key] = (Q, dQ, ddQ, H, lam, (lim_m, lim_p))
    A, B = parts["A"], parts["B"]
    return CorrectorBasis(
        xi=profile.xi, Q_A=A[0], Q_B=B[0], dQ_A=A[1], dQ_B=B[1], ddQ_A=A[2], ddQ_B=B[2],
        H_A=A[3], H_B=B[3], lambda_A=A[4], lambda_B=B[4], limits_A=A[5], limits_B=B[5],
        orthogonality_residual=resid,
    )


def h1_solve(a: float, b: float, basis: CorrectorBasis) -> np.ndarray:
    """First-order maximizer profile for data (a, b)."""
    return a * basis.H_A + b * basis.H_B


def separable_qstar(profile: WaveProfile, op: LineOperator, model: ModelFunctions):
    """Q* with Q*' = (1/u'^2) int (u' + |u'|^2 L u' / <-L u', u'>) u'.

    For P(u) = u/2 the minimizer factorizes as Q_min(a, b) = (2a - b) Q*.
    Returns (Q*, Q*').
    """
    du = profile.du
    u = profile.u
    Lu = op.apply(du)
    exact = 2.0 * model.sigma(u) * profile.dddu + 2.0 * model.sigma(u, 1) * du * profile.ddu
    exact -= (model.B(u) + model.D(u)) * du
    Lu[0], Lu[-1] = exact[0], exact[-1]
    weight = profile.inner(du, du) / (-profile.inner(Lu, du))
    source = du + weight * Lu
    h = profile.grid.h
    g = source * du
    left = g[0] / (2.0 * profile.gamma_minus) + cumulative_simpson(g, dx=h, initial=0.0)
    right = -(g[-1] / (2.0 * profile.gamma_plus) + cumulative_simpson(g[::-1], dx=h, initial=0.0)[::-1])
    c = (du.size - 1) // 2
    running = np.concatenate([left[: c + 1], right[c + 1 :]])
    ok = du > VANISHING_DV
    dQ = np.empty_like(du)
    dQ[ok] = running[ok] / du[ok] ** 2
    # closed-form tail slope: L u' ~ (2 sigma gamma^2 - (B + D)) u' at each well
    limits = []
    for r, g_, sign in ((model.rho_minus, profile.gamma_minus, 1.0), (model.rho_plus, profile.gamma_plus, -1.0)):
        K = 1.0 + weight * (2.0 * model.sigma(r) * g_**2 - (model.B(r) + model.D(r)))
        limits.append(sign * K / (2.0 * g_))
    _continue_tails(dQ, ok, limits)
    return _integrate_from_center(dQ, h), dQ


class CorrectorInterpolant:
    """Evaluate basis profiles at arbitrary xi; Q is continued linearly past the grid."""

    def __init__(self, basis: CorrectorBasis):
        x = basis.xi
        self.L = x[-1]
        self._q = {}
        for key, Q, dQ, ddQ, lim in (
            ("A", basis.Q_A, basis.dQ_A, basis.ddQ_A, basis.limits_A),
            ("B", basis.Q_B, basis.dQ_B, basis.ddQ_B, basis.limits_B),
        ):
            self._q[key] = (
                CubicHermiteSpline(x, Q, dQ),
                CubicHermiteSpline(x, dQ, ddQ),
                CubicSpline(x, ddQ),
                (Q[0], dQ[0]),
                (Q[-1], dQ[-1]),
            )
        self._h = {"A": CubicSpline(x, basis.H_A), "B": CubicSpline(x, basis.H_B)}

    def q(self, key: str, xi):
        """(Q, Q', Q'') of basis function ``key`` ('A' or 'B')."""
        fq, fdq, fddq, (q0, s0), (q1, s1) = self._q[key]
        xi = np.asarray(xi, dtype=float)
        xc = np.clip(xi, -self.L, self.L)
        Q, dQ, ddQ = fq(xc), fdq(xc), fddq(xc)
        hi, lo = xi > self.L, xi < -self.L
        if np.any(hi) or np.any(lo):
            Q = np.where(hi, q1 + s1 * (xi - self.L), np.where(lo, q0 + s0 * (xi + self.L), Q))
            dQ = np.where(hi, s1, np.where(lo, s0, dQ))
            ddQ = np.where(hi | lo, 0.0, ddQ)
        return Q, dQ, ddQ

    def H(self, key: str, xi):
        xi = np.asarray(xi, dtype=float)
        out = self._h[key](np.clip(xi, -self.L, self.L))
        return np.where(np.abs(xi) > self.L, 0.0, out)
