"""Measured quantities behind the acceptance criteria.

Each ``criterion_*`` function computes its metrics, compares them against the
tolerances in ``TOLERANCES`` and records the wall time against its budget.
The command line runs them all in dependency order; the test suite re-checks
the recorded metrics independently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .corrector import cost_density, endpoint_limits, separable_qstar
from .functional import (
    AnsatzField, PerturbationField, build_context, convergence_study, evaluate_J, evaluate_S_direct,
    solve_slices, stationarity,
)
from .geometry import FlowField, Path1D, coarea_check, finite_difference_check
from .linop import assemble
from .model import half_flux_model, reference_model
from .profile import XiGrid, fit_decay, profile_residuals, solve_profile

TOLERANCES = {
    "profile_sup": 1e-8,
    "profile_ode": 1e-8,
    "decay_window": 0.01,
    "coeff_rel": 1e-6,
    "half_flux_theta": 1e-8,
    "self_adjoint": 1e-12,
    "coercivity": 1e-10,
    "roundtrip": 1e-8,
    "refinement_order": 1.9,
    "truncation": 1e-8,
    "minimality_rel": 1e-6,
    "lower_bound": 1e-6,
    "endpoint_limit": 1e-4,
    "separable": 1e-6,
    "newton_iters": 10,
    "variational_rel": 1e-8,
    "stationarity": 1e-6,
    "decomposition_order": 1.8,
    "rate_rel": 0.05,
    "asym_circle_rel": 1e-6,
    "asym_mcf_abs": 1e-10,
    "liminf_rel": 0.02,
    "coarea_rel": 0.01,
    "fd_order": 1.8,
}

BUDGETS = {1: 1.0, 2: 5.0, 3: 10.0, 4: 30.0, 5: 120.0, 6: 300.0, 7: 30.0, 8: 300.0, 9: 60.0, 10: 900.0}

NAMES = {
    1: "profile oracle",
    2: "coefficients",
    3: "line operator",
    4: "corrector minimality",
    5: "maximizer (1D direct)",
    6: "rate convergence (1D translating pair)",
    7: "rate, 2D asymptotic circles",
    8: "liminf robustness",
    9: "co-area and distance derivatives",
    10: "full suite runtime",
}

RATE_LADDER = (0.04, 0.02, 0.01, 0.005)
DECOMPOSITION_LADDER = (0.04, 0.02, 0.01)
COAREA_LADDER = (0.02, 0.01, 0.005)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({'; '.join(self.failures)})" if self.failures else ""
        return f"[{status}] criterion {self.number}: {self.name} ({self.runtime:.2f}s / {self.budget:.0f}s){extra}"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class _Checker:
    def __init__(self, number: int):
        self.number = number
        self.metrics: dict = {}
        self.failures: list = []
        self.t0 = time.perf_counter()

    def require(self, label: str, ok: bool) -> None:
        if not ok:
            self.failures.append(label)

    def done(self, runtime: float | None = None) -> CriterionResult:
        rt = time.perf_counter() - self.t0 if runtime is None else runtime
        budget = BUDGETS[self.number]
        self.require(f"runtime {rt:.2f}s over {budget:.0f}s", rt < budget)
        return CriterionResult(self.number, NAMES[self.number], not self.failures, rt, budget, self.metrics,
                               self.failures)


def translating_pair(speed: float = 0.3, T: float = 0.05) -> FlowField:
    return FlowField.front_pair(Path1D.linear(0.25, speed), Path1D.linear(0.75, speed), T)


def static_pair(T: float = 0.05) -> FlowField:
    return FlowField.front_pair(Path1D.static(0.25), Path1D.static(0.75), T)


def static_circle(r0: float = 0.15, T: float = 0.05) -> FlowField:
    return FlowField.circle(Path1D.static(r0), T)


def mcf_circle(theta: float = 1.0, r0: float = 0.2, T: float = 0.01) -> FlowField:
    return FlowField.circle(Path1D.mcf(r0, theta), T)


def smooth_bump(xi, center: float, width: float):
    """C-infinity bump exp(-1/(1-r^2)) with r = (xi - center)/width and its two derivatives."""
    r = (np.asarray(xi, dtype=float) - center) / width
    inside = np.abs(r) < 1
    q = np.where(inside, 1 - r**2, 1.0)
    g = -1.0 / q
    b = np.where(inside, np.exp(g), 0.0)
    g1 = -2 * r / q**2
    g2 = -(2 + 6 * r**2) / q**3
    return b, b * g1 / width, b * (g2 + g1**2) / width**2


def random_admissible_q(rng: np.random.Generator, profile, basis, bumps: int = 3):
    """Random corrector with bounded slope and linear growth: basis combination plus smooth bumps."""
    cA, cB = rng.uniform(-2, 2, 2)
    Q = cA * basis.Q_A + cB * basis.Q_B
    dQ = cA * basis.dQ_A + cB * basis.dQ_B
    ddQ = cA * basis.ddQ_A + cB * basis.ddQ_B
    for _ in range(bumps):
        b, b1, b2 = smooth_bump(profile.xi, rng.uniform(-8, 8), rng.uniform(1, 6))
        amp = rng.normal()
        Q, dQ, ddQ = Q + amp * b, dQ + amp * b1, ddQ + amp * b2
    return Q, dQ, ddQ


def fourier_directions(rng: np.random.Generator, X, count: int, modes: int = 4):
    """Random smooth periodic fields normalized to unit sup norm."""
    X = np.atleast_2d(X)
    out = []
    for _ in range(count):
        f = np.zeros(X.shape[0])
        for k in range(1, modes + 1):
            for j in range(X.shape[1]):
                c, s = rng.normal(size=2)
                f += c * np.cos(2 * np.pi * k * X[:, j]) + s * np.sin(2 * np.pi * k * X[:, j])
        out.append(f / np.max(np.abs(f)))
    return out


# individual criteria

def criterion_profile() -> CriterionResult:
    c = _Checker(1)
    tol = TOLERANCES
    model = reference_model()
    prof = solve_profile(model, XiGrid(40.0, 8193))
    runtime = time.perf_counter() - c.t0
    err = float(np.max(np.abs(prof.u - (0.5 + 0.25 * np.tanh(prof.xi / 4)))))
    res = profile_residuals(prof, model)
    fit = fit_decay(prof)
    c.metrics.update(tanh_error=err, ode_residual=res.ode_residual, decay_gamma=fit.gamma,
                     gamma_max_v=model.gamma_max_v, monotonicity_violations=res.monotonicity_violations)
    c.require("tanh sup error", err < tol["profile_sup"])
    c.require("ODE residual", res.ode_residual < tol["profile_ode"])
    c.require("decay rate window", abs(fit.gamma - 0.5) <= tol["decay_window"])
    c.require("decay rate below gamma_max_v", fit.gamma <= model.gamma_max_v)
    return c.done(runtime)


def criterion_coefficients() -> CriterionResult:
    c = _Checker(2)
    ctx = build_context(reference_model())
    k = ctx.coeffs
    target = {"theta1": 1 / 48, "theta2": 1 / 48, "nu": 7 / 640, "mu": 25.2, "theta": 1.0}
    rel = {name: abs(getattr(k, name) - v) / v for name, v in target.items()}
    half = build_context(half_flux_model()).coeffs
    c.metrics.update(values=k.to_dict(), rel_errors=rel, half_flux_theta=half.theta)
    for name, e in rel.items():
        c.require(f"{name} relative error {e:.2e}", e <= TOLERANCES["coeff_rel"])
    c.require("half-flux theta", abs(half.theta - 0.5) <= TOLERANCES["half_flux_theta"])
    return c.done()


def _operator_for(L: float, n: int):
    model = reference_model()
    prof = solve_profile(model, XiGrid(L, n))
    return prof, assemble(prof, model)


def criterion_operator(rng: np.random.Generator) -> CriterionResult:
    c = _Checker(3)
    prof, op = _operator_for(40.0, 8193)
    n = prof.grid.n
    sym, coer = 0.0, np.inf
    for _ in range(100):
        psi, phi = rng.normal(size=n), rng.normal(size=n)
        a = op.inner(op.apply(psi), phi)
        b = op.inner(psi, op.apply(phi))
        sym = max(sym, abs(a - b) / (np.sqrt(op.inner(psi, psi) * op.inner(phi, phi))))
        coer = min(coer, -op.inner(op.apply(psi), psi) / op.inner(psi, psi))
    w = rng.normal(size=n)
    roundtrip = float(np.max(np.abs(op.apply(op.solve(w)) - w)) / np.max(np.abs(w)))
    # refinement ladder with a fixed smooth right-hand side
    sols = []
    for m in (2049, 4097, 8193):
        p, o = (prof, op) if m == n else _operator_for(40.0, m)
        sols.append(o.solve(p.du * np.exp(-np.abs(p.xi) / 4)))
    e1 = np.max(np.abs(sols[0] - sols[1][::2]))
    e2 = np.max(np.abs(sols[1] - sols[2][::2]))
    order = float(np.log2(e1 / e2))
    # truncation: same spacing on a longer line
    pl, ol = _operator_for(50.0, 10241)
    wl = pl.du * np.exp(-np.abs(pl.xi) / 4)
    psi_long = ol.solve(wl)
    psi_short = sols[2]
    inner = np.abs(prof.xi) <= 20.0
    shift = (pl.grid.n - n) // 2
    trunc = float(np.max(np.abs(psi_short[inner] - psi_long[shift : shift + n][inner])))
    c.metrics.update(self_adjoint=sym, coercivity=float(coer), coercivity_bound=op.coercivity_bound,
                     roundtrip=roundtrip, refinement_order=order, truncation=trunc)
    c.require("self-adjointness", sym <= TOLERANCES["self_adjoint"])
    c.require("coercivity", coer >= op.coercivity_bound - TOLERANCES["coercivity"])
    c.require("roundtrip", roundtrip <= TOLERANCES["roundtrip"])
    c.require("refinement order", order >= TOLERANCES["refinement_order"])
    c.require("truncation insensitivity", trunc <= TOLERANCES["truncation"])
    return c.done()


def criterion_corrector(rng: np.random.Generator) -> CriterionResult:
    c = _Checker(4)
    ctx = build_context(reference_model())
    k, B, p, op = ctx.coeffs, ctx.basis, ctx.profile, ctx.op
    scale = 1 / (2 * k.mu)
    worst = 0.0
    grid = np.linspace(-2, 2, 7)
    for a in grid:
        for b in grid:
            full = cost_density(a, b, B.Q(a, b), p, op).full
            target = (a - k.theta * b) ** 2 / (2 * k.mu)
            worst = max(worst, abs(full - target) / max(target, scale))
    margin = np.inf
    for _ in range(50):
        a, b = rng.uniform(-2, 2, 2)
        Q = random_admissible_q(rng, p, B)
        full = cost_density(a, b, Q, p, op).full
        margin = min(margin, full - (a - k.theta * b) ** 2 / (2 * k.mu))
    model = ctx.model
    lim_err = 0.0
    for key, (a, b), dQ in (("A", (1.0, 0.0), B.dQ_A), ("B", (0.0, 1.0), B.dQ_B)):
        lm, lp = endpoint_limits(model, a, b, B.lam(a, b))
        lim_err = max(lim_err, abs(dQ[0] - lm), abs(dQ[-1] - lp))
    half = build_context(half_flux_model())
    qstar, dqstar = separable_qstar(half.profile, half.op, half.model)
    sep = max(np.max(np.abs(half.basis.dQ_A - 2 * dqstar)), np.max(np.abs(half.basis.dQ_B + dqstar)),
              np.max(np.abs(half.basis.Q_A - 2 * qstar)), np.max(np.abs(half.basis.Q_B + qstar)))
    sep_rel = float(sep / max(np.max(np.abs(half.basis.Q_A)), 1.0))
    c.metrics.update(minimality_rel=worst, lower_bound_margin=float(margin), endpoint_error=float(lim_err),
                     separable_dQ_error=float(max(np.max(np.abs(half.basis.dQ_A - 2 * dqstar)),
                                                  np.max(np.abs(half.basis.dQ_B + dqstar)))),
                     separable_rel=sep_rel)
    c.require("minimality lattice", worst <= TOLERANCES["minimality_rel"])
    c.require("random lower bound", margin >= -TOLERANCES["lower_bound"])
    c.require("endpoint limits", lim_err <= TOLERANCES["endpoint_limit"])
    c.require("separable form", sep_rel <= TOLERANCES["separable"])
    return c.done()


def maximizer_diagnostics(ctx, flow, ladder, rng, workers: int = 1, directions: int = 10):
    """Per-eps Newton iterations, J/S mismatch, stationarity and decomposition error."""
    rows = []
    for eps in ladder:
        ans = AnsatzField(ctx, flow, eps)
        slices, ws = solve_slices(ans, workers=workers)
        S = evaluate_S_direct(ans, slices, ws)
        J = evaluate_J(ans, lambda i, s: s.H, slices, ws)
        dirs = [[e] * len(slices) for e in fourier_directions(rng, ans.grid.points, directions)]
        rows.append({
            "eps": eps, "S": S, "J": J, "rel_JS": abs(J - S) / abs(S),
            "iterations": max(s.iterations for s in slices),
            "residual": max(s.residual for s in slices),
            "stationarity": stationarity(slices, ws, dirs),
            "decomposition": max(s.decomposition_error for s in slices),
        })
    return rows


def criterion_maximizer(rng: np.random.Generator, workers: int = 1) -> CriterionResult:
    from .geometry import fit_order

    c = _Checker(5)
    ctx = build_context(reference_model())
    rows = maximizer_diagnostics(ctx, translating_pair(), RATE_LADDER, rng, workers)
    dec = {r["eps"]: r["decomposition"] for r in rows}
    order = fit_order(DECOMPOSITION_LADDER, [dec[e] for e in DECOMPOSITION_LADDER])
    c.metrics.update(rows=rows, decomposition_order=order)
    c.require("Newton iterations", max(r["iterations"] for r in rows) <= TOLERANCES["newton_iters"])
    c.require("J = S", max(r["rel_JS"] for r in rows) <= TOLERANCES["variational_rel"])
    c.require("stationarity", max(r["stationarity"] for r in rows) <= TOLERANCES["stationarity"])
    c.require("decomposition order", order >= TOLERANCES["decomposition_order"])
    return c.done()


def criterion_rate(workers: int = 1):
    c = _Checker(6)
    ctx = build_context(reference_model())
    rep = convergence_study(AnsatzField(ctx, translating_pair(), RATE_LADDER[0]), RATE_LADDER, workers=workers)
    c.metrics.update(report=rep.to_dict(), closed_form=0.05 * 0.3**2 / (2 * 25.2))
    c.require("final relative error", rep.rel_err[-1] <= TOLERANCES["rate_rel"])
    c.require("monotone decrease", rep.monotone)
    return c.done(), rep


def criterion_asymptotic_2d() -> CriterionResult:
    c = _Checker(7)
    ctx = build_context(reference_model())
    k = ctx.coeffs
    r0, T = 0.15, 0.05
    static = convergence_study(AnsatzField(ctx, static_circle(r0, T), 0.02), [0.02, 0.01, 0.005], "asymptotic-2d")
    closed = np.pi * k.theta**2 * T / (2 * k.mu * r0)
    rel = max(abs(v - closed) / closed for v in static.S_asym)
    mcf = convergence_study(AnsatzField(ctx, mcf_circle(k.theta), 0.02), [0.02, 0.01, 0.005], "asymptotic-2d")
    c.metrics.update(static_S_asym=static.S_asym, closed_form=closed, static_rel=rel, mcf_S_asym=mcf.S_asym,
                     mcf_S_ac=mcf.S_ac)
    c.require("static circle", rel <= TOLERANCES["asym_circle_rel"])
    c.require("MCF circle", max(abs(v) for v in mcf.S_asym) <= TOLERANCES["asym_mcf_abs"])
    return c.done()


def criterion_liminf(workers: int = 1) -> CriterionResult:
    c = _Checker(8)
    ctx = build_context(reference_model())
    runs = {}
    for label, R in (("zero", PerturbationField()), ("zero+bump", PerturbationField(1.0, 0.5))):
        rep = convergence_study(AnsatzField(ctx, translating_pair(), RATE_LADDER[0], "zero", R), RATE_LADDER,
                                workers=workers, liminf_tol=TOLERANCES["liminf_rel"])
        runs[label] = {"S_direct": rep.S_direct, "S_ac": rep.S_ac, "liminf_ok": rep.liminf_ok}
        c.require(f"liminf {label}", rep.S_direct[-1] >= rep.S_ac * (1 - TOLERANCES["liminf_rel"]))
    c.metrics.update(runs=runs)
    return c.done()


def _A1(x, xi):
    return np.exp(-np.abs(xi))


def _A2(x, xi):
    return (1 + 0.5 * np.sin(2 * np.pi * x[..., 0])) * np.exp(-np.abs(xi) / 2)


def criterion_coarea(rng: np.random.Generator) -> CriterionResult:
    c = _Checker(9)
    pair = coarea_check(translating_pair(), 0.02, _A1, COAREA_LADDER)
    circ = coarea_check(static_circle(0.15, 0.05), 0.0, _A2, COAREA_LADDER)
    fd = {}
    # cubic-in-time fronts so that the centered time difference is not exact
    wobble = FlowField.front_pair(Path1D.polynomial((0.25, 0.3, 1.0, 20.0)),
                                  Path1D.polynomial((0.75, -0.3, 1.0, -20.0)), 0.05)
    for label, flow in (("pair", wobble), ("circle", mcf_circle(1.0))):
        res = finite_difference_check(flow, rng)
        (h1, (l1, t1)), (h2, (l2, t2)) = sorted(res.items(), reverse=True)
        fd[label] = {"lap_errors": [l1, l2], "dt_errors": [t1, t2],
                     "lap_order": float(np.log2(l1 / l2)) if l2 > 0 else float("inf"),
                     "dt_order": float(np.log2(t1 / t2)) if t2 > 0 else float("inf")}
    c.metrics.update(pair=pair.to_dict(), circle=circ.to_dict(), finite_differences=fd)
    c.require("1D co-area", pair.errors[-1] <= TOLERANCES["coarea_rel"])
    c.require("2D co-area", circ.errors[-1] <= TOLERANCES["coarea_rel"])
    for label, v in fd.items():
        for q in ("lap", "dt"):
            errs = v[f"{q}_errors"]
            # an exact difference quotient (error at roundoff level) also counts as O(h^2)
            ok = v[f"{q}_order"] >= TOLERANCES["fd_order"] or max(errs) < 1e-9
            c.require(f"{label} {q} finite differences", ok)
    return c.done()


CRITERIA = (1, 2, 3, 4, 5, 6, 7, 8, 9)


def run_acceptance(seed: int = 0, workers: int = 1, only=None, log=print):
    """Run criteria 1-9 in dependency order and criterion 10 on their total wall time."""
    rng = np.random.default_rng(seed)
    results = []
    t0 = time.perf_counter()
    for k in CRITERIA:
        if only is not None and k not in only:
            continue
        if k == 1:
            r = criterion_profile()
        elif k == 2:
            r = criterion_coefficients()
        elif k == 3:
            r = criterion_operator(rng)
        elif k == 4:
            r = criterion_corrector(rng)
        elif k == 5:
            r = criterion_maximizer(rng, workers)
        elif k == 6:
            r, _ = criterion_rate(workers)
        elif k == 7:
            r = criterion_asymptotic_2d()
        elif k == 8:
            r = criterion_liminf(workers)
        else:
            r = criterion_coarea(rng)
        results.append(r)
        if log:
            log(r.line())
    if only is None or 10 in only:
        c = _Checker(10)
        total = time.perf_counter() - t0
        c.metrics.update(total_runtime=total)
        r = c.done(total)
        results.append(r)
        if log:
            log(r.line())
    return results
