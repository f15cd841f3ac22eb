"""Model functions (P, B, D, sigma), the derived potentials and their validation.

A model is a quadruple of scalar functions on [0, 1]. The double-well potential
W is determined by ``W' = D - B`` and normalized by ``W(rho_minus) = 0``; the
tilted potential is ``Wtilde(rho) = int_{rho_minus}^{rho} W'(s) P'(s) ds``.
Every scalar function is a ratio of polynomials so that derivatives of any
order are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb
from typing import Any, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    BalanceError,
    ConfigError,
    DominationError,
    PositivityError,
    RootCountError,
)

# distance to a well below which Taylor expansions replace direct evaluation
NEAR_WELL = 1e-4
SAMPLE_POINTS = 10_001

_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def gauss_integrate(func, a, b, nodes: int = 40):
    """Gauss-Legendre quadrature of ``func`` on [a, b], vectorized over a and b."""
    if nodes == 40:
        x, w = _GL_X, _GL_W
    else:
        x, w = np.polynomial.legendre.leggauss(nodes)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)[..., None]
    half = 0.5 * (b - a)[..., None]
    vals = func(mid + half * x)
    return (half[..., 0]) * (vals @ w)


def _trim(c) -> tuple:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    c = npoly.polytrim(c, 0.0) if c.size > 1 else c
    return tuple(float(v) for v in c)


@dataclass(frozen=True)
class ScalarFunction:
    """Ratio of polynomials in ascending-power coefficient form.

    ``kind`` only records how the function was specified; evaluation always
    uses ``numerator / denominator``.
    """

    numerator: tuple
    denominator: tuple = (1.0,)
    kind: str = "polynomial-coefficients"

    def __post_init__(self):
        object.__setattr__(self, "numerator", _trim(self.numerator))
        object.__setattr__(self, "denominator", _trim(self.denominator))
        if not any(self.denominator):
            raise ConfigError("denominator polynomial is identically zero")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "ScalarFunction":
        return cls(tuple(coefficients))

    @classmethod
    def constant(cls, value: float) -> "ScalarFunction":
        return cls((float(value),))

    @property
    def is_polynomial(self) -> bool:
        return len(self.denominator) == 1

    def __call__(self, x, order: int = 0):
        fn = _derivative(self, order) if order else self
        num = npoly.polyval(x, fn.numerator)
        if fn.is_polynomial:
            return num / fn.denominator[0]
        return num / npoly.polyval(x, fn.denominator)

    def derivative(self, order: int = 1) -> "ScalarFunction":
        return _derivative(self, order)

    # arithmetic used to assemble B and D from Wtilde
    def _coerce(self, other) -> "ScalarFunction":
        if isinstance(other, ScalarFunction):
            return other
        return ScalarFunction.constant(float(other))

    def __add__(self, other):
        o = self._coerce(other)
        if self.denominator == o.denominator:
            return _rational(npoly.polyadd(self.numerator, o.numerator), self.denominator)
        num = npoly.polyadd(
            npoly.polymul(self.numerator, o.denominator),
            npoly.polymul(o.numerator, self.denominator),
        )
        return _rational(num, npoly.polymul(self.denominator, o.denominator))

    __radd__ = __add__

    def __neg__(self):
        return _rational(-np.asarray(self.numerator), self.denominator)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        return _rational(
            npoly.polymul(self.numerator, o.numerator),
            npoly.polymul(self.denominator, o.denominator),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return _rational(
            npoly.polymul(self.numerator, o.denominator),
            npoly.polymul(self.denominator, o.numerator),
        )

    def to_dict(self) -> dict:
        if self.is_polynomial:
            coeffs = [c / self.denominator[0] for c in self.numerator]
            return {"kind": "polynomial-coefficients", "coefficients": coeffs}
        return {
            "kind": "rational-of-polynomials",
            "numerator": list(self.numerator),
            "denominator": list(self.denominator),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScalarFunction":
        kind = doc.get("kind", "polynomial-coefficients")
        if kind == "polynomial-coefficients":
            return cls(tuple(doc["coefficients"]))
        if kind == "rational-of-polynomials":
            if "numerator" in doc:
                return cls(tuple(doc["numerator"]), tuple(doc["denominator"]), kind)
            num, den = doc["coefficients"]
            return cls(tuple(num), tuple(den), kind)
        raise ConfigError(f"cannot build a standalone scalar function of kind {kind!r}")


def _rational(num, den) -> ScalarFunction:
    kind = "polynomial-coefficients" if len(_trim(den)) == 1 else "rational-of-polynomials"
    return ScalarFunction(tuple(np.atleast_1d(num)), tuple(np.atleast_1d(den)), kind)


@lru_cache(maxsize=None)
def _derivative(fn: ScalarFunction, order: int) -> ScalarFunction:
    if order == 0:
        return fn
    prev = _derivative(fn, order - 1)
    if prev.is_polynomial:
        return ScalarFunction(tuple(npoly.polyder(prev.numerator)), prev.denominator)
    n, d = prev.numerator, prev.denominator
    num = npoly.polysub(npoly.polymul(npoly.polyder(n), d), npoly.polymul(n, npoly.polyder(d)))
    return _rational(num, npoly.polymul(d, d))


def _sign_change_roots(f, lo: float = 0.0, hi: float = 1.0, n: int = SAMPLE_POINTS):
    """Roots of ``f`` on (lo, hi) located at sign changes and refined by bisection."""
    x = np.linspace(lo, hi, n)
    y = f(x)
    s = np.sign(y)
    roots = []
    nz = np.flatnonzero(s != 0)
    for i, j in zip(nz[:-1], nz[1:]):
        if s[i] == s[j]:
            continue
        if j > i + 1:
            # an exact zero lies on the sample grid between opposite signs
            roots.append(float(x[(i + j) // 2]) if j == i + 2 else float(x[i + 1]))
            continue
        a, b = x[i], x[j]
        fa = y[i]
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = f(m)
            if fm == 0.0 or b - a < 1e-15:
                a = b = m
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        roots.append(float(0.5 * (a + b)))
    return roots


@dataclass(frozen=True)
class ModelFunctions:
    """Immutable model quadruple with lazily derived wells and potentials."""

    P: ScalarFunction
    B: ScalarFunction
    D: ScalarFunction
    sigma: ScalarFunction
    name: str = ""
    # optional closed form of Wtilde (up to a constant), used for evaluation only
    wtilde_closed: ScalarFunction | None = field(default=None, compare=False)

    @cached_property
    def dW(self) -> ScalarFunction:
        """W' = D - B."""
        return self.D - self.B

    @cached_property
    def roots(self) -> tuple:
        r = _sign_change_roots(self.dW)
        if len(r) != 3:
            raise RootCountError(f"W' has {len(r)} sign changes in (0,1), expected 3: {r}")
        return tuple(r)

    @property
    def rho_minus(self) -> float:
        return self.roots[0]

    @property
    def rho_star(self) -> float:
        return self.roots[1]

    @property
    def rho_plus(self) -> float:
        return self.roots[2]

    def W1(self, rho, order: int = 0):
        """Derivative of W of order ``1 + order``."""
        return self.dW(rho, order)

    def _wtilde_derivs(self, well: float) -> list:
        # Wtilde^{(k)}(well) for k = 2, 3, 4 via Leibniz on W' P'
        out = []
        for k in (2, 3, 4):
            out.append(sum(comb(k - 1, j) * self.dW(well, j) * self.P(well, k - j) for j in range(k)))
        return out

    @cached_property
    def _well_data(self) -> dict:
        return {"minus": self._wtilde_derivs(self.rho_minus), "plus": self._wtilde_derivs(self.rho_plus)}

    @cached_property
    def balance(self) -> float:
        """int_{rho_minus}^{rho_plus} W' P' d rho, i.e. Wtilde(rho_plus)."""
        f = lambda r: self.dW(r) * self.P(r, 1)
        return float(
            gauss_integrate(f, self.rho_minus, self.rho_star, 64)
            + gauss_integrate(f, self.rho_star, self.rho_plus, 64)
        )

    @property
    def _plus_offset(self) -> float:
        # Wtilde(rho_plus); quadrature noise of a balanced model is dropped so
        # that values near rho_plus keep their relative precision
        return self.balance if abs(self.balance) > 1e-14 else 0.0

    @cached_property
    def _shifted_polys(self):
        """Wtilde and W' re-expanded about each well when both are polynomials.

        Returns None for rational models. The constant and linear terms, which
        vanish analytically at a well, are set to exactly zero so values near
        the wells keep full relative precision.
        """
        Poly = np.polynomial.Polynomial
        dW = Poly(self.dW.numerator) / self.dW.denominator[0] if self.dW.is_polynomial else None
        if self.wtilde_closed is not None and self.wtilde_closed.is_polynomial:
            anti = Poly(self.wtilde_closed.numerator) / self.wtilde_closed.denominator[0]
        elif dW is not None and self.P.is_polynomial:
            dP = Poly(self.P.derivative(1).numerator) / self.P.denominator[0]
            anti = (dW * dP).integ()
        else:
            return None
        out = {}
        for side, r, sgn in (("minus", self.rho_minus, 1.0), ("plus", self.rho_plus, -1.0)):
            shift = Poly([r, sgn])
            wt = (anti(shift) - anti(r)).coef.copy()
            wt[:2] = 0.0
            if dW is not None:
                dw = dW(shift).coef.copy()
                dw[:1] = 0.0
            else:
                dw = None
            out[side] = (wt, dw)
        return out

    def wtilde_split(self, s_minus, s_plus):
        """Wtilde at the point with distances ``s_minus`` to rho_minus and ``s_plus`` to rho_plus.

        The nearer well is used as the base point so that values of order
        s**2 keep full relative precision.
        """
        s_minus = np.asarray(s_minus, dtype=float)
        s_plus = np.asarray(s_plus, dtype=float)
        shape = np.broadcast(s_minus, s_plus).shape
        sm = np.broadcast_to(s_minus, shape)
        sp = np.broadcast_to(s_plus, shape)
        near_minus = np.abs(sm) <= np.abs(sp)
        polys = self._shifted_polys
        if polys is not None:
            lo = np.polynomial.polynomial.polyval(sm, polys["minus"][0])
            hi = self._plus_offset + np.polynomial.polynomial.polyval(sp, polys["plus"][0])
            return np.where(near_minus, lo, hi)
        out = np.empty(shape)
        f = lambda r: self.dW(r) * self.P(r, 1)
        rm, rp = self.rho_minus, self.rho_plus
        d2m, d3m, d4m = self._well_data["minus"]
        d2p, d3p, d4p = self._well_data["plus"]
        for mask, s, well, sign, (d2, d3, d4), off in (
            (near_minus, sm, rm, 1.0, (d2m, d3m, d4m), 0.0),
            (~near_minus, sp, rp, -1.0, (d2p, d3p, d4p), self._plus_offset),
        ):
            if not np.any(mask):
                continue
            ss = s[mask]
            res = ss * ss * (d2 / 2 + ss * (sign * d3 / 6 + ss * d4 / 24))
            far = np.abs(ss) >= NEAR_WELL
            if np.any(far):
                res[far] = gauss_integrate(f, np.full(np.count_nonzero(far), well), well + sign * ss[far])
            out[mask] = off + res
        return out

    def wtilde(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.wtilde_split(rho - self.rho_minus, self.rho_plus - rho)

    def dW_split(self, s_minus, s_plus):
        """W' evaluated with the same near-well strategy as :meth:`wtilde_split`."""
        s_minus = np.asarray(s_minus, dtype=float)
        s_plus = np.asarray(s_plus, dtype=float)
        near_minus = np.abs(s_minus) <= np.abs(s_plus)
        polys = self._shifted_polys
        if polys is not None and polys["minus"][1] is not None:
            lo = np.polynomial.polynomial.polyval(s_minus, polys["minus"][1])
            hi = np.polynomial.polynomial.polyval(s_plus, polys["plus"][1])
            return np.where(near_minus, lo, hi)
        rm, rp = self.rho_minus, self.rho_plus
        direct = np.where(near_minus, self.dW(rm + s_minus), self.dW(rp - s_plus))
        tm = s_minus * (self.dW(rm, 1) + s_minus * (self.dW(rm, 2) / 2 + s_minus * self.dW(rm, 3) / 6))
        tp = -s_plus * (self.dW(rp, 1) - s_plus * (self.dW(rp, 2) / 2 - s_plus * self.dW(rp, 3) / 6))
        out = np.where(np.abs(s_minus) < NEAR_WELL, tm, direct)
        return np.where(np.abs(s_plus) < NEAR_WELL, tp, out)

    def W(self, rho):
        """Potential normalized by W(rho_minus) = 0."""
        rho = np.asarray(rho, dtype=float)
        return gauss_integrate(self.dW, np.full_like(rho, self.rho_minus), rho)

    def P_inverse(self, alpha, tol: float = 1e-13):
        """Inverse of the increasing function P by vectorized bisection on [0, 1]."""
        alpha = np.asarray(alpha, dtype=float)
        lo = np.zeros_like(alpha)
        hi = np.ones_like(alpha)
        while np.max(hi - lo, initial=0.0) > tol:
            mid = 0.5 * (lo + hi)
            below = self.P(mid) < alpha
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def gamma(self, side: str) -> float:
        """Linear decay rate sqrt(W''/P') at the well on ``side`` ('minus' or 'plus')."""
        r = self.rho_minus if side == "minus" else self.rho_plus
        return float(np.sqrt(self.dW(r, 1) / self.P(r, 1)))

    @property
    def gamma_max_v(self) -> float:
        return min(self.gamma("minus"), self.gamma("plus"))

    def to_dict(self) -> dict:
        return {
            "P": self.P.to_dict(),
            "B": self.B.to_dict(),
            "D": self.D.to_dict(),
            "sigma": self.sigma.to_dict(),
        }


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    roots: tuple = ()
    balance: float = float("nan")
    gamma_max_v: float = float("nan")
    well_depth_gap: float = float("nan")
    first_error: type | None = None

    @property
    def accepted(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "roots": list(self.roots),
            "balance": self.balance,
            "gamma_max_v": self.gamma_max_v,
            "well_depth_gap": self.well_depth_gap,
            "error": self.first_error.__name__ if self.first_error else None,
        }


def validate_model(model: ModelFunctions, tol: float = 1e-10, raise_on_failure: bool = True) -> ValidationReport:
    """Check the structural assumptions on a model.

    Parameters
    ----------
    model : ModelFunctions
    tol : float
        Tolerance for the balance integral and the vanishing checks.
    raise_on_failure : bool
        If True the first failing check raises its error class; otherwise the
        report is returned with ``accepted == False``.
    """
    rep = ValidationReport()
    x = np.linspace(0.0, 1.0, SAMPLE_POINTS)

    def fail(name, detail, err):
        rep.checks.append(CheckResult(name, False, detail))
        if rep.first_error is None:
            rep.first_error = err
        if raise_on_failure:
            raise err(f"{name}: {detail}")

    # A1
    p0 = float(model.P(0.0))
    dP = model.P(x, 1)
    if abs(p0) > tol or np.min(dP) <= 0:
        fail("A1", f"P(0)={p0:.3e}, min P'={np.min(dP):.3e}", PositivityError)
    else:
        rep.checks.append(CheckResult("A1", True, f"min P'={np.min(dP):.6g}"))
    # A2, with B and D individually positive
    mins = {k: float(np.min(getattr(model, k)(x))) for k in ("B", "D", "sigma")}
    if min(mins.values()) <= 0:
        bad = [k for k, v in mins.items() if v <= 0]
        fail("A2", f"nonpositive on [0,1]: {bad} (minima {mins})", PositivityError)
    else:
        rep.checks.append(CheckResult("A2", True, f"minima {mins}"))
    # A3
    try:
        roots = model.roots
    except RootCountError as exc:
        fail("A3", str(exc), RootCountError)
        return rep
    rep.roots = roots
    rm, rs, rp = roots
    w2 = [float(model.dW(r, 1)) for r in roots]
    Wx = model.W(x)
    Wp = float(model.W(rp))
    rep.well_depth_gap = Wp
    left_ok = np.all(Wx[x <= rs] >= -tol)
    right_ok = np.all(Wx[x >= rs] >= Wp - tol)
    if w2[0] <= 0 or w2[2] <= 0 or not (left_ok and right_ok):
        fail("A3", f"W''(wells)={w2[0]:.3e},{w2[2]:.3e}; sided minima {left_ok},{right_ok}", RootCountError)
    else:
        rep.checks.append(CheckResult("A3", True, f"roots {roots}"))
    rep.gamma_max_v = model.gamma_max_v if w2[0] > 0 and w2[2] > 0 else float("nan")
    # A4
    rep.balance = model.balance
    if abs(rep.balance) > tol:
        fail("A4", f"balance integral {rep.balance:.3e} exceeds {tol:.1e}", BalanceError)
        return rep
    rep.checks.append(CheckResult("A4", True, f"balance integral {rep.balance:.3e}"))
    # derived consequences
    inner = np.linspace(rm, rp, 2001)[1:-1]
    wt = model.wtilde(inner)
    wt2 = w2[2] * float(model.P(rp, 1))
    ok = bool(np.all(wt > 0) and wt2 > 0)
    rep.checks.append(CheckResult("Wtilde-positive", ok, f"min={np.min(wt):.3e}, Wtilde''(rho+)={wt2:.3e}"))
    alphas = model.P(np.array([rm, rp]))
    rinv = model.P_inverse(alphas)
    f_val = model.dW(rinv)
    f_der = model.dW(rinv, 1) / model.P(rinv, 1)
    ok = bool(np.all(np.abs(f_val) <= 1e3 * tol) and np.all(f_der > 0))
    rep.checks.append(CheckResult("f-wells", ok, f"f={f_val.tolist()}, f'={f_der.tolist()}"))
    if not ok and raise_on_failure:
        raise RootCountError("derived well checks failed")
    return rep


def build_quasilinear_from_wtilde(P, Wtilde, S_sum, sigma=None, name: str = "") -> ModelFunctions:
    """Assemble B = (S - W')/2 and D = (S + W')/2 with W' = Wtilde'/P'.

    The balance condition then holds by construction because the balance
    integral equals Wtilde(rho_plus) - Wtilde(rho_minus).
    """
    P, Wtilde = _as_fn(P), _as_fn(Wtilde)
    S = _as_fn(S_sum)
    sigma = _as_fn(sigma) if sigma is not None else ScalarFunction.constant(0.5)
    x = np.linspace(0.0, 1.0, SAMPLE_POINTS)
    if np.min(P(x, 1)) <= 0:
        raise PositivityError("P' must be positive on [0,1]")
    dP = P.derivative(1)
    dW = Wtilde.derivative(1) / dP
    margin = S(x) - np.abs(dW(x))
    if np.min(margin) <= 0:
        i = int(np.argmin(margin))
        raise DominationError(f"S_sum={S(x[i]):.4g} does not dominate |W'|={abs(dW(x[i])):.4g} at rho={x[i]:.4g}")
    B = (S - dW) * 0.5
    D = (S + dW) * 0.5
    return ModelFunctions(P, B, D, sigma, name=name, wtilde_closed=Wtilde)


def _as_fn(obj) -> ScalarFunction:
    if isinstance(obj, ScalarFunction):
        return obj
    if isinstance(obj, dict):
        return ScalarFunction.from_dict(obj)
    if np.isscalar(obj):
        return ScalarFunction.constant(float(obj))
    return ScalarFunction.polynomial(obj)


# 1/2 (rho - 1/4)^2 (3/4 - rho)^2 expanded in ascending powers
REFERENCE_WTILDE = (0.5 * 9 / 256, 0.5 * -3 / 8, 0.5 * 11 / 8, 0.5 * -2.0, 0.5 * 1.0)


def reference_model() -> ModelFunctions:
    """P = rho, W = (rho-1/4)^2 (3/4-rho)^2 / 2, B + D = 1, sigma = 1/2."""
    return build_quasilinear_from_wtilde([0.0, 1.0], REFERENCE_WTILDE, 1.0, name="reference")


def half_flux_model() -> ModelFunctions:
    """P = rho/2 with the reference Wtilde and B + D = 1."""
    return build_quasilinear_from_wtilde([0.0, 0.5], REFERENCE_WTILDE, 1.0, name="half-flux")


def model_from_dict(doc: dict) -> ModelFunctions:
    """Parse either the (P, B, D, sigma) or the (P, Wtilde, S_sum) document form."""
    name = doc.get("name", "")
    if "Wtilde" in doc:
        sigma = doc.get("sigma")
        return build_quasilinear_from_wtilde(
            _as_fn(doc["P"]), _as_fn(doc["Wtilde"]), _as_fn(doc.get("S_sum", 1.0)),
            _as_fn(sigma) if sigma is not None else None, name=name,
        )
    missing = [k for k in ("P", "B", "D", "sigma") if k not in doc]
    if missing:
        raise ConfigError(f"model document lacks {missing}")
    return ModelFunctions(*(_as_fn(doc[k]) for k in ("P", "B", "D", "sigma")), name=name)


def load_model(path) -> ModelFunctions:
    with open(path) as fh:
        doc: dict[str, Any] = json.load(fh)
    return model_from_dict(doc)
