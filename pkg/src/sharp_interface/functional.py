"""Rate functional of the layered ansatz and its epsilon-ladder studies.

The ansatz is ``phi = u(d/eps + eps Q(t, x, d/eps)) + eps R(t, x)``. For each
time slice the maximizer H of the concave functional

    J(H) = (1/eps) int [H (dt phi - lap P(phi)) - sigma(phi) |grad H|^2]
           - (1/eps^3) int [B(phi)(e^H - 1) + D(phi)(e^-H - 1)]

solves ``dt phi + div(2 sigma grad H) - lap P(phi) - (B e^H - D e^-H)/eps^2 = 0``
and the rate is J(H_max). Spatial sums use a periodic flux-form grid; the same
edge weights appear in the operator and in |grad H|^2, so the discrete J at
the discrete maximizer equals the closed-form value up to the Newton residual.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from .corrector import CorrectorBasis, CorrectorInterpolant, cost_density, qmin_basis
from .errors import NewtonDivergence, RangeError, ResolutionError, StiffnessWarning
from .geometry import FlowField, fit_order, s_ac, time_nodes
from .linop import LineOperator, assemble
from .model import ModelFunctions
from .profile import Coefficients, ProfileInterpolant, WaveProfile, XiGrid, compute_coefficients, solve_profile

MIN_CELLS_PER_EPS = 8


@dataclass(frozen=True, eq=False)
class LayerContext:
    """Everything eps-independent: profile, operator, coefficients and corrector basis."""

    model: ModelFunctions
    profile: WaveProfile
    op: LineOperator
    coeffs: Coefficients
    basis: CorrectorBasis
    u_eval: ProfileInterpolant
    q_eval: CorrectorInterpolant


def build_context(model: ModelFunctions, grid: XiGrid | None = None) -> LayerContext:
    profile = solve_profile(model, grid or XiGrid())
    op = assemble(profile, model)
    coeffs = compute_coefficients(profile, model, op)
    basis = qmin_basis(profile, op, model)
    return LayerContext(model, profile, op, coeffs, basis, ProfileInterpolant(profile), CorrectorInterpolant(basis))


CORRECTORS = {"qmin": np.eye(2), "zero": np.zeros((2, 2))}


def corrector_matrix(Q) -> np.ndarray:
    """2x2 matrix M with (c_A, c_B) = M (a, b); accepts 'qmin', 'zero' or a matrix."""
    if isinstance(Q, str):
        return CORRECTORS[Q].copy()
    M = np.asarray(Q, dtype=float)
    if M.shape != (2, 2):
        raise ValueError("custom corrector must be a 2x2 matrix")
    return M


@dataclass(frozen=True)
class PerturbationField:
    """R(t, x) = amplitude * eps**exponent * prod_k (1 + cos 2 pi (x_k - c_k)) / 2."""

    amplitude: float = 0.0
    exponent: float = 0.5
    center: tuple = (0.5, 0.5)

    def evaluate(self, eps: float, X):
        X = np.atleast_2d(X)
        dim = X.shape[1]
        scale = self.amplitude * eps**self.exponent
        k = 2 * np.pi
        c = np.asarray(self.center[:dim])
        f = 0.5 * (1 + np.cos(k * (X - c)))
        df = -0.5 * k * np.sin(k * (X - c))
        ddf = -0.5 * k**2 * np.cos(k * (X - c))
        R = scale * np.prod(f, axis=1)
        grad = np.empty_like(X)
        lap = np.zeros(X.shape[0])
        for j in range(dim):
            others = np.prod(np.delete(f, j, axis=1), axis=1) if dim > 1 else 1.0
            grad[:, j] = scale * df[:, j] * others
            lap += scale * ddf[:, j] * others
        return R, grad, lap, np.zeros_like(R)

    @property
    def active(self) -> bool:
        return self.amplitude != 0.0


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Node grid x_i = i / n on the unit torus of dimension 1 or 2."""

    dim: int
    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def points(self) -> np.ndarray:
        x = np.arange(self.n) / self.n
        if self.dim == 1:
            return x[:, None]
        return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)

    @property
    def cell(self) -> float:
        return self.h**self.dim

    def edges(self):
        """Index pairs (i, j) of every nearest-neighbour edge, each counted once."""
        idx = np.arange(self.size).reshape((self.n,) * self.dim)
        pairs = [(idx.ravel(), np.roll(idx, -1, axis=k).ravel()) for k in range(self.dim)]
        return np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs])


@dataclass(frozen=True, eq=False)
class AnsatzField:
    context: LayerContext
    flow: FlowField
    eps: float
    Q: object = "qmin"
    R: PerturbationField = field(default_factory=PerturbationField)
    cells_per_eps: float = 32.0
    n: int | None = None

    @property
    def M(self) -> np.ndarray:
        return corrector_matrix(self.Q)

    @property
    def grid(self) -> PeriodicGrid:
        n = self.n or int(np.ceil(self.cells_per_eps / self.eps))
        if 1.0 / n > self.eps / MIN_CELLS_PER_EPS:
            raise ResolutionError(f"{n} cells per unit length under-resolve eps={self.eps}")
        return PeriodicGrid(self.flow.dim, n)

    def with_eps(self, eps: float) -> "AnsatzField":
        return AnsatzField(self.context, self.flow, eps, self.Q, self.R, self.cells_per_eps, self.n)


@dataclass
class PhiField:
    phi: np.ndarray
    dt_phi: np.ndarray
    grad_phi: np.ndarray
    lap_phi: np.ndarray
    source: np.ndarray  # dt phi - lap P(phi)
    xi: np.ndarray
    a: np.ndarray
    b: np.ndarray


def build_phi(ansatz: AnsatzField, t: float, X=None) -> PhiField:
    """Sample the ansatz and its exact derivatives by the chain rule.

    Raises
    ------
    RangeError
        If some sample leaves (0, 1).
    """
    ctx, eps, M = ansatz.context, ansatz.eps, ansatz.M
    X = ansatz.grid.points if X is None else np.atleast_2d(X)
    j = ansatz.flow.jet(t, X)
    xi = j.d / eps
    Q = np.zeros_like(xi)
    Qx = np.zeros_like(xi)
    Qxx = np.zeros_like(xi)
    gradQ = np.zeros_like(j.grad_d)
    lapQ = np.zeros_like(xi)
    grad_Qx = np.zeros_like(j.grad_d)
    dtQ = np.zeros_like(xi)
    for k, key in enumerate("AB"):
        ca, cb = M[k]
        if ca == 0.0 and cb == 0.0:
            continue
        qk, dqk, ddqk = ctx.q_eval.q(key, xi)
        c = ca * j.dt_d + cb * j.lap_d
        gc = ca * j.grad_a + cb * j.grad_b
        Q += c * qk
        Qx += c * dqk
        Qxx += c * ddqk
        gradQ += gc * qk[:, None]
        lapQ += (ca * j.lap_a + cb * j.lap_b) * qk
        grad_Qx += gc * dqk[:, None]
        dtQ += (ca * j.dt_a + cb * j.dt_b) * qk
    z = xi + eps * Q
    gd2 = np.sum(j.grad_d**2, axis=1)
    grad_z = j.grad_d / eps + eps * gradQ + Qx[:, None] * j.grad_d
    lap_z = j.lap_d / eps + eps * lapQ + 2 * np.sum(grad_Qx * j.grad_d, axis=1) + Qxx * gd2 / eps + Qx * j.lap_d
    dt_z = j.dt_d / eps + eps * dtQ + Qx * j.dt_d
    u, du, ddu = ctx.u_eval(z)
    phi, dt_phi, grad_phi, lap_phi = u, du * dt_z, du[:, None] * grad_z, ddu * np.sum(grad_z**2, axis=1) + du * lap_z
    if ansatz.R.active:
        R, gR, lR, tR = ansatz.R.evaluate(eps, X)
        phi = phi + eps * R
        dt_phi = dt_phi + eps * tR
        grad_phi = grad_phi + eps * gR
        lap_phi = lap_phi + eps * lR
    if np.any(phi <= 0) or np.any(phi >= 1):
        raise RangeError(f"ansatz leaves (0,1): range [{np.min(phi):.4g}, {np.max(phi):.4g}]")
    P = ctx.model.P
    lapP = P(phi, 2) * np.sum(grad_phi**2, axis=1) + P(phi, 1) * lap_phi
    return PhiField(phi, dt_phi, grad_phi, lap_phi, dt_phi - lapP, xi, j.dt_d, j.lap_d)


def first_order_basis(context: LayerContext, M) -> tuple:
    """Node profiles (H_a, H_b) of the first-order maximizer for corrector matrix M."""
    M = corrector_matrix(M)
    if np.allclose(M, np.eye(2)):
        return context.basis.H_A, context.basis.H_B
    p, B = context.profile, context.basis
    dQ = (B.dQ_A, B.dQ_B)
    ddQ = (B.ddQ_A, B.ddQ_B)
    out = []
    for col, base in ((0, p.du), (1, -p.dv)):
        F = base.copy()
        for k in range(2):
            F -= M[k, col] * (2 * p.ddv * dQ[k] + p.dv * ddQ[k])
        out.append(context.op.solve(-F))
    return tuple(out)


def h1_field(ansatz: AnsatzField, t: float, X=None, phi: PhiField | None = None) -> np.ndarray:
    """eps * H1(t, x, d/eps) on the spatial grid."""
    ctx = ansatz.context
    if phi is None:
        phi = build_phi(ansatz, t, X)
    if np.allclose(ansatz.M, np.eye(2)):
        ha, hb = ctx.q_eval.H("A", phi.xi), ctx.q_eval.H("B", phi.xi)
    else:
        xi_nodes = ctx.profile.xi
        L = xi_nodes[-1]
        inside = np.abs(phi.xi) <= L
        ha, hb = (np.where(inside, np.interp(phi.xi, xi_nodes, Hk), 0.0) for Hk in first_order_basis(ctx, ansatz.M))
    return ansatz.eps * (phi.a * ha + phi.b * hb)


# numerically stable pieces of the integrands
def _f_plus(H):
    """1 - e^H + H e^H, with its Taylor series for small |H|."""
    H = np.asarray(H, dtype=float)
    small = np.abs(H) < 0.1
    out = np.empty_like(H)
    hs = H[small]
    series = np.zeros_like(hs)
    fact = 1.0
    power = hs * hs
    for k in range(2, 14):
        fact *= k
        series += (k - 1) * power / fact
        power = power * hs
    out[small] = series
    hb = H[~small]
    out[~small] = hb * np.exp(hb) - np.expm1(hb)
    return out


@dataclass
class SliceOperator:
    grid: PeriodicGrid
    phi: PhiField
    sigma_edge: np.ndarray
    Bphi: np.ndarray
    Dphi: np.ndarray
    eps: float
    _edges: tuple = None
    _div: sp.csr_matrix = None

    @classmethod
    def build(cls, ansatz: AnsatzField, phi: PhiField) -> "SliceOperator":
        g = ansatz.grid
        m = ansatz.context.model
        i, j = g.edges()
        s = m.sigma(phi.phi)
        sig_e = 0.5 * (s[i] + s[j])
        # div(2 sigma grad .) as a symmetric sparse matrix
        w = 2.0 * sig_e / g.h**2
        A = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                          shape=(g.size, g.size)).tocsr()
        A = A - sp.diags(np.asarray(A.sum(axis=1)).ravel())
        return cls(g, phi, sig_e, m.B(phi.phi), m.D(phi.phi), ansatz.eps, (i, j), A)

    def residual(self, H):
        e = np.exp(H)
        return self.phi.source + self._div @ H - (self.Bphi * e - self.Dphi / e) / self.eps**2

    def jacobian(self, H):
        e = np.exp(H)
        return self._div - sp.diags((self.Bphi * e + self.Dphi / e) / self.eps**2)

    def grad_energy(self, H) -> float:
        i, j = self._edges
        return float(np.sum(self.sigma_edge * (H[j] - H[i]) ** 2) * self.grid.h ** (self.grid.dim - 2))

    def S(self, H) -> float:
        cell = self.grid.cell
        reac = np.sum(self.Bphi * _f_plus(H) + self.Dphi * _f_plus(-H)) * cell
        return self.grad_energy(H) / self.eps + reac / self.eps**3

    def J(self, H) -> float:
        cell = self.grid.cell
        lin = np.sum(H * self.phi.source) * cell
        reac = np.sum(self.Bphi * np.expm1(H) + self.Dphi * np.expm1(-H)) * cell
        return (lin - self.grad_energy(H)) / self.eps - reac / self.eps**3

    def dJ(self, H, direction) -> float:
        """Gateaux derivative of J at H along ``direction``."""
        return float(np.sum(self.residual(H) * direction) * self.grid.cell / self.eps)


@dataclass
class MaximizerField:
    t: float
    H: np.ndarray
    iterations: int
    residual: float
    slice_op: SliceOperator = field(repr=False)
    H1: np.ndarray = field(repr=False, default=None)

    @property
    def decomposition_error(self) -> float:
        return float(np.max(np.abs(self.H - self.H1)))


def _linear_solve(Jac, rhs, dim):
    if dim == 1:
        return spsolve(Jac.tocsc(), rhs)
    diag = -Jac.diagonal()
    pre = sp.diags(1.0 / diag)
    x, info = cg(-Jac, -rhs, M=pre, rtol=1e-13, atol=0.0, maxiter=20_000)
    return x


def solve_hmax(ansatz: AnsatzField, t: float, tol: float = 1e-9, max_iter: int = 25) -> MaximizerField:
    """Newton iteration for the maximizer on one time slice, started at eps * H1.

    Raises
    ------
    NewtonDivergence
        If the residual has not dropped below ``tol`` after ``max_iter`` steps.
    """
    if ansatz.eps**2 < 1e-12:
        warnings.warn("eps^-2 reaction scale approaches double-precision limits", StiffnessWarning)
    phi = build_phi(ansatz, t)
    op = SliceOperator.build(ansatz, phi)
    H1 = h1_field(ansatz, t, phi=phi)
    H = H1.copy()
    r = op.residual(H)
    res = float(np.max(np.abs(r)))
    it = 0
    while res > tol:
        if it >= max_iter or not np.isfinite(res):
            raise NewtonDivergence(f"Newton stalled at residual {res:.3e} after {it} steps", res, it)
        H = H - _linear_solve(op.jacobian(H), r, op.grid.dim)
        r = op.residual(H)
        res = float(np.max(np.abs(r)))
        it += 1
    return MaximizerField(t, H, it, res, op, H1)


def _map(fn, items, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def solve_slices(ansatz: AnsatzField, nodes: int = 16, workers: int = 1):
    ts, ws = time_nodes(ansatz.flow.T, nodes)
    slices = _map(lambda t: solve_hmax(ansatz, t), ts, workers)
    return slices, ws


def evaluate_S_direct(ansatz: AnsatzField, slices=None, weights=None, workers: int = 1) -> float:
    """Rate of the ansatz from the maximizers, integrated in time by Gauss-Legendre."""
    if slices is None:
        slices, weights = solve_slices(ansatz, workers=workers)
    return float(sum(w * s.slice_op.S(s.H) for s, w in zip(slices, weights)))


def evaluate_J(ansatz: AnsatzField, H_of_slice, slices=None, weights=None) -> float:
    """J for the test field ``H_of_slice(k, slice) -> node array`` on each slice.

    The slice operators of ``slices`` (solved or not) supply phi and the grid.
    """
    if slices is None:
        slices, weights = solve_slices(ansatz)
    return float(sum(w * s.slice_op.J(H_of_slice(k, s)) for k, (s, w) in enumerate(zip(slices, weights))))


def stationarity(slices, weights, directions) -> float:
    """Largest |dJ(H_max)[eta]| over the given direction fields (one array per slice each)."""
    worst = 0.0
    for eta in directions:
        val = sum(w * s.slice_op.dJ(s.H, e) for s, w, e in zip(slices, weights, eta))
        worst = max(worst, abs(val))
    return worst


def evaluate_S_asymptotic(ansatz: AnsatzField, nodes: int = 16) -> float:
    """int_0^T int_Gamma half-cost(dt d, lap d) dH dt with the chosen corrector."""
    ctx, M = ansatz.context, ansatz.M
    B = ctx.basis
    ts, ws = time_nodes(ansatz.flow.T, nodes)
    total = 0.0
    for t, w in zip(ts, ws):
        a, b, m = ansatz.flow.interface_data(t)
        for ai, bi, mi in zip(a, b, m):
            cA, cB = M @ np.array([ai, bi])
            Q = (cA * B.Q_A + cB * B.Q_B, cA * B.dQ_A + cB * B.dQ_B, cA * B.ddQ_A + cB * B.ddQ_B)
            total += w * mi * cost_density(ai, bi, Q, ctx.profile, ctx.op).half
    return float(total)


@dataclass
class RateReport:
    mode: str
    eps_ladder: list
    S_direct: list
    S_asym: list
    S_ac: float
    rel_err: list
    order: float
    newton_iters: list
    wall_time: list
    decomposition_error: list = field(default_factory=list)
    liminf_ok: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        e = self.rel_err
        return all(b < a for a, b in zip(e[:-1], e[1:]))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["monotone"] = self.monotone
        return d

    def rows(self):
        for i, eps in enumerate(self.eps_ladder):
            yield (eps, self.S_direct[i], self.S_asym[i], self.S_ac, self.rel_err[i], self.newton_iters[i])


MODES = ("direct-1d", "asymptotic-2d", "direct-2d-slow")


def convergence_study(template: AnsatzField, eps_ladder, mode: str = "direct-1d", workers: int = 1,
                      liminf_tol: float = 0.02, slow: bool = False, nodes: int = 16) -> RateReport:
    """Run the ansatz along a decreasing eps ladder and compare with the limit energy."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    eps_ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(eps_ladder[:-1], eps_ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    if mode == "direct-2d-slow" and not slow:
        raise ValueError("direct-2d-slow requires the slow flag")
    target = s_ac(template.flow, template.context.coeffs, nodes=nodes)
    direct, asym, iters, walls, dec = [], [], [], [], []
    for eps in eps_ladder:
        t0 = time.perf_counter()
        ans = template.with_eps(eps)
        if mode == "direct-2d-slow" and ans.n is None:
            ans = AnsatzField(ans.context, ans.flow, eps, ans.Q, ans.R, ans.cells_per_eps,
                              max(512, int(np.ceil(MIN_CELLS_PER_EPS / eps))))
        s_asym = evaluate_S_asymptotic(ans, nodes)
        if mode == "asymptotic-2d":
            direct.append(float("nan"))
            iters.append(0)
            dec.append(float("nan"))
        else:
            slices, ws = solve_slices(ans, nodes, workers)
            direct.append(evaluate_S_direct(ans, slices, ws))
            iters.append(max(s.iterations for s in slices))
            dec.append(max(s.decomposition_error for s in slices))
        asym.append(s_asym)
        walls.append(time.perf_counter() - t0)
    values = asym if mode == "asymptotic-2d" else direct
    if target != 0:
        rel = [abs(v - target) / abs(target) for v in values]
    else:
        rel = [abs(v) for v in values]
    report = RateReport(mode, eps_ladder, direct, asym, target, rel, fit_order(eps_ladder, rel), iters, walls, dec)
    is_qmin = isinstance(template.Q, str) and template.Q == "qmin"
    if values and (not is_qmin or template.R.active):
        report.liminf_ok = bool(values[-1] >= target * (1 - liminf_tol))
    return report


def taylor_remainder(ansatz: AnsatzField, t: float) -> float:
    """sup |phi - u(d/eps) - eps u'(d/eps) Q - eps R| on the grid."""
    phi = build_phi(ansatz, t)
    ctx = ansatz.context
    X = ansatz.grid.points
    u, du, _ = ctx.u_eval(phi.xi)
    Q = np.zeros_like(phi.xi)
    for k, key in enumerate("AB"):
        ca, cb = ansatz.M[k]
        Q += (ca * phi.a + cb * phi.b) * ctx.q_eval.q(key, phi.xi)[0]
    R = ansatz.R.evaluate(ansatz.eps, X)[0] if ansatz.R.active else 0.0
    return float(np.max(np.abs(phi.phi - u - ansatz.eps * du * Q - ansatz.eps * R)))
