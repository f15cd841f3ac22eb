"""Prescribed interface motions on the unit torus and their distance functions.

Two families are supported: a pair of points on the circle (1D) and a circle
in the square torus (2D). The regularized signed distance is ``d = G(s)``
where ``s`` is the exact signed distance (negative inside) and ``G`` is the
identity for ``|s| <= kappa``, constant ``+-1.5 kappa`` for ``|s| >= 2 kappa``
and a quintic blend in between, so that d is C^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, CutLocusError, ResolutionError


@dataclass(frozen=True)
class Path1D:
    """Scalar trajectory of time with two analytic derivatives.

    kinds: ``static`` (value), ``linear`` (value, speed), ``polynomial``
    (coefficients, ascending) and ``mcf`` (r0, theta) for the shrinking circle
    r(t) = sqrt(r0^2 - 2 theta t).
    """

    kind: str
    params: tuple

    @classmethod
    def static(cls, value: float) -> "Path1D":
        return cls("static", (float(value),))

    @classmethod
    def linear(cls, value: float, speed: float) -> "Path1D":
        return cls("linear", (float(value), float(speed)))

    @classmethod
    def polynomial(cls, coefficients) -> "Path1D":
        return cls("polynomial", tuple(float(c) for c in coefficients))

    @classmethod
    def mcf(cls, r0: float, theta: float) -> "Path1D":
        return cls("mcf", (float(r0), float(theta)))

    def __call__(self, t):
        """(value, first derivative, second derivative) at time t."""
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "static":
            z = np.zeros_like(t)
            return p[0] + z, z, z
        if k == "linear":
            z = np.zeros_like(t)
            return p[0] + p[1] * t, p[1] + z, z
        if k == "polynomial":
            c = np.polynomial.Polynomial(p)
            return c(t), c.deriv(1)(t), c.deriv(2)(t)
        if k == "mcf":
            r0, theta = p
            arg = r0**2 - 2.0 * theta * t
            if np.any(arg <= 0):
                raise CutLocusError("mean-curvature circle has collapsed within the time horizon")
            r = np.sqrt(arg)
            return r, -theta / r, -(theta**2) / r**3
        raise ConfigError(f"unknown trajectory kind {k!r}")

    def to_dict(self) -> dict:
        k, p = self.kind, self.params
        if k == "static":
            return {"kind": k, "r0": p[0]}
        if k == "linear":
            return {"kind": k, "x0": p[0], "speed": p[1]}
        if k == "polynomial":
            return {"kind": k, "coefficients": list(p)}
        return {"kind": k, "r0": p[0], "theta": p[1]}

    @classmethod
    def from_dict(cls, doc: dict, theta: float | None = None) -> "Path1D":
        k = doc.get("kind")
        if k == "static":
            return cls.static(doc.get("r0", doc.get("x0", doc.get("value"))))
        if k == "linear":
            return cls.linear(doc.get("x0", doc.get("r0")), doc["speed"])
        if k == "polynomial":
            return cls.polynomial(doc["coefficients"])
        if k == "mcf":
            th = doc.get("theta", theta)
            if th is None:
                raise ConfigError("mcf radius needs theta (from the document or the model coefficients)")
            return cls.mcf(doc["r0"], th)
        raise ConfigError(f"unknown trajectory kind {k!r}")


def _s5(tau, order: int = 0):
    """Quintic smoothstep 10 t^3 - 15 t^4 + 6 t^5 and its derivatives, clamped to [0, 1]."""
    t = np.clip(tau, 0.0, 1.0)
    inside = (tau > 0) & (tau < 1)
    if order == 0:
        return t**3 * (10 - 15 * t + 6 * t**2)
    if order == 1:
        return np.where(inside, 30 * t**2 * (1 - t) ** 2, 0.0)
    if order == 2:
        return np.where(inside, 60 * t - 180 * t**2 + 120 * t**3, 0.0)
    return np.where(inside, 60 - 360 * t + 360 * t**2, 0.0)


def saturation(s, kappa: float):
    """G(s) and its first four derivatives."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    sg = np.where(s < 0, -1.0, 1.0)
    tau = (a - kappa) / kappa
    t = np.clip(tau, 0.0, 1.0)
    integral = t - 2.5 * t**4 + 3 * t**5 - t**6
    G = np.where(a <= kappa, s, sg * kappa * (1.0 + integral))
    G1 = 1.0 - _s5(tau)
    G2 = -sg * _s5(tau, 1) / kappa
    G3 = -_s5(tau, 2) / kappa**2
    G4 = -sg * _s5(tau, 3) / kappa**3
    return G, G1, G2, G3, G4


class DistanceJet(NamedTuple):
    """Regularized distance and the derivatives the ansatz consumes.

    ``a = dt_d`` and ``b = lap_d`` are the corrector data; their gradients,
    Laplacians and time derivatives are included. Gradients have shape
    (N, dim).
    """

    d: np.ndarray
    grad_d: np.ndarray
    lap_d: np.ndarray
    dt_d: np.ndarray
    grad_a: np.ndarray
    lap_a: np.ndarray
    dt_a: np.ndarray
    grad_b: np.ndarray
    lap_b: np.ndarray
    dt_b: np.ndarray


def _wrap(x):
    return x - np.floor(x + 0.5)


@dataclass(frozen=True)
class FlowField:
    kind: str
    paths: tuple
    T: float
    kappa: float
    center: tuple = (0.5, 0.5)
    dim: int = field(init=False)

    def __post_init__(self):
        if self.kind not in ("front-pair-1d", "circle-2d"):
            raise ConfigError(f"unknown flow kind {self.kind!r}")
        object.__setattr__(self, "dim", 1 if self.kind == "front-pair-1d" else 2)
        ts = np.linspace(0.0, self.T, 257)
        if self.kind == "circle-2d":
            r = self.paths[0](ts)[0]
            if np.min(r) <= 0 or np.max(r) >= 0.25:
                raise CutLocusError(f"radius range [{np.min(r):.4g}, {np.max(r):.4g}] leaves (0, 1/4)")
            if self.kappa > np.min(r) / 2 or np.max(r) + 2 * self.kappa >= 0.5:
                raise CutLocusError(f"tube half-width {self.kappa} overlaps the center or the cut locus")
        else:
            sep = np.mod(self.paths[1](ts)[0] - self.paths[0](ts)[0], 1.0)
            half = np.minimum(sep, 1.0 - sep) / 2
            if np.min(half) <= 0 or 2 * self.kappa >= np.min(half):
                raise CutLocusError(f"tube half-width {self.kappa} too wide for front separation")

    @classmethod
    def circle(cls, radius: Path1D, T: float, center=(0.5, 0.5), kappa: float | None = None) -> "FlowField":
        if kappa is None:
            r = radius(np.linspace(0.0, T, 257))[0]
            kappa = 0.45 * float(np.min(r))
        return cls("circle-2d", (radius,), float(T), float(kappa), tuple(center))

    @classmethod
    def front_pair(cls, p1: Path1D, p2: Path1D, T: float, kappa: float | None = None) -> "FlowField":
        if kappa is None:
            ts = np.linspace(0.0, T, 257)
            sep = np.mod(p2(ts)[0] - p1(ts)[0], 1.0)
            kappa = 0.48 * float(np.min(np.minimum(sep, 1.0 - sep))) / 2
        return cls("front-pair-1d", (p1, p2), float(T), float(kappa), (0.0,))

    def jet(self, t: float, X) -> DistanceJet:
        """Evaluate the regularized distance jet at points X of shape (N, dim)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.kind == "circle-2d":
            return self._circle_jet(t, X)
        return self._pair_jet(t, X[:, 0])

    def _circle_jet(self, t, X):
        r, rd, rdd = (float(v) for v in self.paths[0](t))
        rel = _wrap(X - np.asarray(self.center))
        rho = np.hypot(rel[:, 0], rel[:, 1])
        safe = np.where(rho > 0, rho, 1.0)
        e = rel / safe[:, None]
        G, G1, G2, G3, G4 = saturation(rho - r, self.kappa)
        inv = np.where(rho > 0, 1.0 / safe, 0.0)
        lap_d = G2 + G1 * inv
        f1 = G3 + G2 * inv - G1 * inv**2
        f2 = G4 + G3 * inv - 2 * G2 * inv**2 + 2 * G1 * inv**3
        return DistanceJet(
            d=G,
            grad_d=G1[:, None] * e,
            lap_d=lap_d,
            dt_d=-rd * G1,
            grad_a=(-rd * G2)[:, None] * e,
            lap_a=-rd * (G3 + G2 * inv),
            dt_a=-rdd * G1 + rd**2 * G2,
            grad_b=f1[:, None] * e,
            lap_b=f2 + f1 * inv,
            dt_b=-rd * (G3 + G2 * inv),
        )

    def _pair_jet(self, t, x):
        p1, v1, w1 = (float(v) for v in self.paths[0](t))
        p2, v2, w2 = (float(v) for v in self.paths[1](t))
        d1 = _wrap(x - p1)
        d2 = _wrap(x - p2)
        first = np.abs(d1) < np.abs(d2)
        s = np.where(first, -d1, d2)
        sx = np.where(first, -1.0, 1.0)
        st = np.where(first, v1, -v2)
        stt = np.where(first, w1, -w2)
        G, G1, G2, G3, G4 = saturation(s, self.kappa)
        col = lambda v: v[:, None]
        return DistanceJet(
            d=G,
            grad_d=col(G1 * sx),
            lap_d=G2,
            dt_d=G1 * st,
            grad_a=col(G2 * sx * st),
            lap_a=G3 * st,
            dt_a=G2 * st**2 + G1 * stt,
            grad_b=col(G3 * sx),
            lap_b=G4,
            dt_b=G3 * st,
        )

    def interface_data(self, t: float):
        """Points of the interface with their (a, b) data and measure weights.

        Returns ``(a, b, weight)`` arrays: for the front pair two points of unit
        mass, for the circle the single value with weight 2 pi r.
        """
        if self.kind == "circle-2d":
            r, rd, _ = (float(v) for v in self.paths[0](t))
            return np.array([-rd]), np.array([1.0 / r]), np.array([2.0 * np.pi * r])
        _, v1, _ = self.paths[0](t)
        _, v2, _ = self.paths[1](t)
        return np.array([float(v1), -float(v2)]), np.zeros(2), np.ones(2)

    def to_dict(self) -> dict:
        if self.kind == "circle-2d":
            return {"kind": self.kind, "center": list(self.center), "radius": self.paths[0].to_dict(),
                    "T": self.T, "kappa": self.kappa}
        return {"kind": self.kind, "positions": [p.to_dict() for p in self.paths], "T": self.T, "kappa": self.kappa}


def flow_from_dict(doc: dict, theta: float | None = None) -> FlowField:
    kind = doc.get("kind")
    T = float(doc["T"])
    if kind == "circle-2d":
        return FlowField.circle(Path1D.from_dict(doc["radius"], theta), T, tuple(doc.get("center", (0.5, 0.5))),
                                doc.get("kappa"))
    if kind == "front-pair-1d":
        p1, p2 = (Path1D.from_dict(p, theta) for p in doc["positions"])
        return FlowField.front_pair(p1, p2, T, doc.get("kappa"))
    raise ConfigError(f"unknown flow kind {kind!r}")


def signed_distance(flow: FlowField, t: float, x):
    """(d, grad d, lap d, dt d) at the points ``x``."""
    j = flow.jet(t, x)
    return j.d, j.grad_d, j.lap_d, j.dt_d


def time_nodes(T: float, n: int = 16, panels: int = 1):
    """Composite Gauss-Legendre nodes and weights on [0, T]."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def s_ac(flow: FlowField, coeffs, T: float | None = None, nodes: int = 16, panels: int = 1) -> float:
    """Limit energy int_0^T int_Gamma (dt d - theta lap d)^2 / (4 mu)."""
    T = flow.T if T is None else T
    ts, ws = time_nodes(T, nodes, panels)
    total = 0.0
    for t, w in zip(ts, ws):
        a, b, m = flow.interface_data(t)
        total += w * np.sum(m * (a - coeffs.theta * b) ** 2) / (4.0 * coeffs.mu)
    return float(total)


@dataclass
class ConvergenceReport:
    eps: list
    values: list
    target: float
    errors: list
    order: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def fit_order(eps, errors) -> float:
    """Least-squares slope of log(error) against log(eps)."""
    eps = np.asarray(eps, dtype=float)
    err = np.abs(np.asarray(errors, dtype=float))
    ok = err > 0
    if np.count_nonzero(ok) < 2:
        return float("inf")
    return float(np.polyfit(np.log(eps[ok]), np.log(err[ok]), 1)[0])


def _line_integral(A: Callable, x, xi_max: float = 80.0, panels: int = 64):
    """int_R A(x, xi) d xi for each row of x, split at xi = 0."""
    gx, gw = np.polynomial.legendre.leggauss(20)
    edges = np.concatenate([-np.geomspace(xi_max, 1e-3, panels // 2), [0.0], np.geomspace(1e-3, xi_max, panels // 2)])
    mids = 0.5 * (edges[1:] + edges[:-1])
    halves = 0.5 * np.diff(edges)
    xi = (mids[:, None] + halves[:, None] * gx).ravel()
    wts = (halves[:, None] * gw).ravel()
    vals = A(np.repeat(x[:, None, :], xi.size, axis=1), xi[None, :])
    return np.broadcast_to(vals, (x.shape[0], xi.size)) @ wts


def coarea_target(flow: FlowField, t: float, A: Callable, samples: int = 512) -> float:
    """int_Gamma int_R A(x, xi) d xi dH."""
    if flow.kind == "circle-2d":
        r = float(flow.paths[0](t)[0])
        ang = 2 * np.pi * np.arange(samples) / samples
        pts = np.asarray(flow.center) + r * np.column_stack([np.cos(ang), np.sin(ang)])
        return float(2 * np.pi * r * np.mean(_line_integral(A, pts)))
    pts = np.array([[float(flow.paths[0](t)[0])], [float(flow.paths[1](t)[0])]])
    return float(np.sum(_line_integral(A, pts)))


def coarea_check(flow: FlowField, t: float, A: Callable, eps_ladder, cells_per_eps: float | None = None,
                 decay_probe: float = 60.0) -> ConvergenceReport:
    """Compare (1/eps) int A(x, d/eps) dx with its co-area limit along ``eps_ladder``.

    ``A(x, xi)`` takes x of shape (..., dim) and xi of matching leading shape.
    The midpoint rule sees the kink of A at xi = 0 as an O((h/eps)^2) error at
    fixed cells per eps, so 1D runs default to a finer 64 cells per eps (2D: 10).

    Raises
    ------
    ResolutionError
        If fewer than 8 grid cells span one eps.
    ValueError
        If A does not decay in xi.
    """
    probe_x = np.zeros((1, 1, flow.dim)) + 0.5
    far = np.abs(A(probe_x, np.array([[decay_probe, -decay_probe]])))
    near = np.abs(A(probe_x, np.array([[0.0]])))
    if np.max(far) > 1e-6 * max(float(np.max(near)), 1e-300):
        raise ValueError("integrand does not decay in xi")
    if cells_per_eps is None:
        cells_per_eps = 64.0 if flow.dim == 1 else 10.0
    if cells_per_eps < 8:
        raise ResolutionError(f"{cells_per_eps} cells per eps is below the minimum of 8")
    target = coarea_target(flow, t, A)
    vals = []
    for eps in eps_ladder:
        n = int(np.ceil(cells_per_eps / eps))
        if 1.0 / n > eps / 8:
            raise ResolutionError(f"grid spacing {1.0 / n:.3g} under-resolves eps={eps}")
        x1 = (np.arange(n) + 0.5) / n
        if flow.dim == 1:
            X = x1[:, None]
        else:
            X = np.stack(np.meshgrid(x1, x1, indexing="ij"), axis=-1).reshape(-1, 2)
        acc = 0.0
        for chunk in np.array_split(np.arange(X.shape[0]), max(1, X.shape[0] // 1_000_000)):
            d = flow.jet(t, X[chunk]).d
            acc += np.sum(np.broadcast_to(A(X[chunk], d / eps), d.shape))
        vals.append(float(acc / n**flow.dim / eps))
    errs = [abs(v - target) / abs(target) for v in vals]
    return ConvergenceReport(list(map(float, eps_ladder)), vals, target, errs, fit_order(eps_ladder, errs))


def finite_difference_check(flow: FlowField, rng: np.random.Generator, n: int = 100, h: float = 1e-3):
    """Compare analytic lap d and dt d with centered differences at random tube points.

    Returns the maximum errors at spacings h and h/2 for both quantities.
    """
    pts, ts = [], []
    while len(pts) < n:
        t = rng.uniform(0.0, flow.T)
        x = rng.uniform(0.0, 1.0, flow.dim)
        if abs(flow.jet(t, x[None]).d[0]) < 0.9 * flow.kappa:
            pts.append(x)
            ts.append(t)
    pts = np.array(pts)
    out = {}
    for hh in (h, h / 2):
        lap_err, dt_err = 0.0, 0.0
        for x, t in zip(pts, ts):
            j = flow.jet(t, x[None])
            d0 = j.d[0]
            lap = 0.0
            for k in range(flow.dim):
                e = np.zeros(flow.dim)
                e[k] = hh
                lap += (flow.jet(t, (x + e)[None]).d[0] - 2 * d0 + flow.jet(t, (x - e)[None]).d[0]) / hh**2
            dt = (flow.jet(t + hh, x[None]).d[0] - flow.jet(t - hh, x[None]).d[0]) / (2 * hh)
            lap_err = max(lap_err, abs(lap - j.lap_d[0]))
            dt_err = max(dt_err, abs(dt - j.dt_d[0]))
        out[hh] = (lap_err, dt_err)
    return out
