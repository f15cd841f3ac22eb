"""Command line entry point: ``sharp-interface <command> [--config PATH] [--out DIR] ...``.

Commands: validate, profile, coefficients, corrector, rate, coarea, all. Each
writes a JSON report and CSV plot data to the output directory and exits 0 only
if every check of its suite passes; otherwise ``failures.json`` names the
violated invariants.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import (
    mcf_circle, random_admissible_q, run_acceptance, static_circle, static_pair, translating_pair,
)
from .corrector import cost_density, endpoint_limits
from .errors import ConfigError, SharpInterfaceError
from .functional import MODES, AnsatzField, LayerContext, PerturbationField, build_context, convergence_study
from .geometry import coarea_check, flow_from_dict
from .io import hash_object, sha256_file, write_csv, write_json
from .model import half_flux_model, load_model, model_from_dict, reference_model, validate_model
from .profile import XiGrid, fit_decay, profile_residuals, solve_profile

COMMANDS = ("validate", "profile", "coefficients", "corrector", "rate", "coarea", "all")
BUILTIN_MODELS = {"reference": reference_model, "half-flux": half_flux_model}
BUILTIN_FLOWS = {
    "translating-pair": translating_pair,
    "static-pair": static_pair,
    "static-circle": static_circle,
    "mcf-circle": mcf_circle,
}
CHECK_ERRORS = {"A1": "PositivityError", "A2": "PositivityError", "A3": "RootCountError", "A4": "BalanceError"}
DEFAULT_TOLERANCES = {
    "ode_residual": 1e-8,
    "minimality": 1e-6,
    "lower_bound": 1e-6,
    "endpoint": 1e-4,
    "orthogonality": 1e-8,
    "rate_rel": 0.05,
    "rate_abs": 1e-4,
    "asymptotic_rel": 1e-6,
    "asymptotic_abs": 1e-10,
    "coarea_rel": 0.01,
}


@dataclass
class ExperimentConfig:
    model: object = "reference"
    flow: object = "translating-pair"
    xi_grid: dict = field(default_factory=lambda: {"L": 40.0, "n": 8193})
    corrector: object = "qmin"
    perturbation: dict = field(default_factory=lambda: {"amplitude": 0.0, "exponent": 0.5})
    eps_ladder: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    mode: str = "direct-1d"
    cells_per_eps: float = 32.0
    coarea: dict = field(default_factory=lambda: {"t": 0.0, "eps_ladder": [0.02, 0.01, 0.005]})
    tolerances: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def load(cls, path=None) -> "ExperimentConfig":
        if path is None:
            cfg = cls()
        else:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file {path} does not exist")
            with open(path) as fh:
                doc = json.load(fh)
            unknown = set(doc) - (set(cls.__dataclass_fields__) - {"base_dir"})
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
            cfg = cls(**doc, base_dir=path.parent)
        cfg.validate()
        return cfg

    def _path(self, ref) -> Path:
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        for key in ("model", "flow"):
            ref = getattr(self, key)
            builtin = BUILTIN_MODELS if key == "model" else BUILTIN_FLOWS
            if isinstance(ref, str) and ref not in builtin and not self._path(ref).exists():
                raise ConfigError(f"{key} file {ref} does not exist")
        for name in ("eps_ladder",):
            lad = [float(e) for e in getattr(self, name)]
            if any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad[:-1], lad[1:])):
                raise ConfigError(f"{name} must be positive and strictly decreasing")
        lad = [float(e) for e in self.coarea.get("eps_ladder", [])]
        if any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad[:-1], lad[1:])):
            raise ConfigError("coarea.eps_ladder must be positive and strictly decreasing")
        if any(float(v) <= 0 for v in self.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    def grid(self) -> XiGrid:
        return XiGrid(float(self.xi_grid.get("L", 40.0)), int(self.xi_grid.get("n", 8193)))

    @property
    def tol(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "base_dir"}

    def load_model(self):
        if isinstance(self.model, dict):
            return model_from_dict(self.model)
        if self.model in BUILTIN_MODELS:
            return BUILTIN_MODELS[self.model]()
        return load_model(self._path(self.model))

    def load_flow(self, theta: float):
        if isinstance(self.flow, dict):
            return flow_from_dict(self.flow, theta)
        if self.flow in BUILTIN_FLOWS:
            fn = BUILTIN_FLOWS[self.flow]
            return fn(theta) if self.flow == "mcf-circle" else fn()
        with open(self._path(self.flow)) as fh:
            return flow_from_dict(json.load(fh), theta)

    def _hash_ref(self, ref, loader) -> str:
        if isinstance(ref, str) and (ref not in BUILTIN_MODELS and ref not in BUILTIN_FLOWS):
            return sha256_file(self._path(ref))
        return hash_object(loader())

    def hashes(self) -> dict:
        model = self.load_model()
        out = {"config": hash_object(self.to_dict()), "model": self._hash_ref(self.model, model.to_dict)}
        try:
            flow = self.load_flow(1.0)
            out["flow"] = self._hash_ref(self.flow, flow.to_dict)
        except SharpInterfaceError:
            out["flow"] = None
        return out


class Outcome:
    """Collects the checks of one command."""

    def __init__(self, command: str):
        self.command = command
        self.violations: list = []
        self.report: dict = {}

    def check(self, invariant: str, ok: bool, message: str = "", error: str = "AssertionFailure") -> None:
        if not ok:
            self.violations.append({"invariant": invariant, "error": error, "message": message})

    @property
    def ok(self) -> bool:
        return not self.violations


def _context(cfg: ExperimentConfig) -> LayerContext:
    model = cfg.load_model()
    validate_model(model)
    return build_context(model, cfg.grid())


# commands

def cmd_validate(cfg, args, out: Outcome):
    model = cfg.load_model()
    rep = validate_model(model, raise_on_failure=False)
    out.report.update(validation=rep.to_dict())
    for c in rep.checks:
        out.check(c.name, c.passed, c.detail, CHECK_ERRORS.get(c.name, "ModelError"))


def cmd_profile(cfg, args, out: Outcome):
    model = cfg.load_model()
    grid = cfg.grid()
    prof = solve_profile(model, grid)
    res = profile_residuals(prof, model)
    fit = fit_decay(prof)
    out.report.update(residuals=res.to_dict(), decay=fit._asdict(), gamma=prof.gamma,
                      grid={"L": grid.L, "n": grid.n})
    out.check("ode-residual", res.ode_residual <= cfg.tol["ode_residual"], f"{res.ode_residual:.3e}")
    out.check("monotonicity", res.monotonicity_violations == 0, f"{res.monotonicity_violations} violations")
    out.check("decay-fit", fit.reliable and fit.gamma <= fit.gamma_max * (1 + 1e-6), f"gamma={fit.gamma:.6g}")
    out.report["_plot"] = {"profile": prof}


def cmd_coefficients(cfg, args, out: Outcome):
    ctx = _context(cfg)
    k = ctx.coeffs
    out.report.update(coefficients=k.to_dict(), theta1_rho=k.theta1_rho, theta2_rho=k.theta2_rho)
    out.check("positive-coefficients", min(k.theta1, k.theta2, k.nu, k.mu) > 0, json.dumps(k.to_dict()))


def cmd_corrector(cfg, args, out: Outcome):
    ctx = _context(cfg)
    B, k, p, op = ctx.basis, ctx.coeffs, ctx.profile, ctx.op
    tol = cfg.tol
    worst = 0.0
    lattice = np.linspace(-2, 2, 7)
    for a in lattice:
        for b in lattice:
            full = cost_density(a, b, B.Q(a, b), p, op).full
            target = (a - k.theta * b) ** 2 / (2 * k.mu)
            worst = max(worst, abs(full - target) / max(target, 1 / (2 * k.mu)))
    rng = np.random.default_rng(args.seed)
    margin = np.inf
    for _ in range(50):
        a, b = rng.uniform(-2, 2, 2)
        full = cost_density(a, b, random_admissible_q(rng, p, B), p, op).full
        margin = min(margin, full - (a - k.theta * b) ** 2 / (2 * k.mu))
    lim_err = 0.0
    limits = {}
    for key, (a, b), dQ in (("A", (1.0, 0.0), B.dQ_A), ("B", (0.0, 1.0), B.dQ_B)):
        lm, lp = endpoint_limits(ctx.model, a, b, B.lam(a, b))
        limits[key] = {"closed_form": [lm, lp], "grid": [float(dQ[0]), float(dQ[-1])]}
        lim_err = max(lim_err, abs(dQ[0] - lm), abs(dQ[-1] - lp))
    out.report.update(lambda_A=B.lambda_A, lambda_B=B.lambda_B, orthogonality_residual=B.orthogonality_residual,
                      minimality_rel=worst, lower_bound_margin=float(margin), endpoint_limits=limits,
                      coefficients=k.to_dict())
    out.check("orthogonality", B.orthogonality_residual <= tol["orthogonality"], f"{B.orthogonality_residual:.3e}")
    out.check("minimality", worst <= tol["minimality"], f"{worst:.3e}")
    out.check("lower-bound", margin >= -tol["lower_bound"], f"{margin:.3e}")
    out.check("endpoint-limits", lim_err <= tol["endpoint"], f"{lim_err:.3e}")
    out.report["_plot"] = {"basis": B}


def cmd_rate(cfg, args, out: Outcome):
    ctx = _context(cfg)
    flow = cfg.load_flow(ctx.coeffs.theta)
    pert = PerturbationField(float(cfg.perturbation.get("amplitude", 0.0)),
                             float(cfg.perturbation.get("exponent", 0.5)))
    eps = [float(e) for e in cfg.eps_ladder]
    # an empty ladder still yields a (header-only) report
    template = AnsatzField(ctx, flow, eps[0] if eps else 0.04, cfg.corrector, pert, float(cfg.cells_per_eps))
    if cfg.mode == "direct-2d-slow" and not args.slow:
        out.check("slow-flag", False, "mode direct-2d-slow needs --slow", "ConfigError")
        return
    rep = convergence_study(template, eps, cfg.mode, workers=args.workers, slow=args.slow)
    tol = cfg.tol
    out.report.update(rate=rep.to_dict(), flow=flow.to_dict())
    values = rep.S_asym if cfg.mode == "asymptotic-2d" else rep.S_direct
    qmin = cfg.corrector == "qmin" and not pert.active and bool(values)
    if cfg.mode == "asymptotic-2d":
        if qmin:
            if rep.S_ac == 0:
                out.check("asymptotic-limit", max(abs(v) for v in values) <= tol["asymptotic_abs"], str(values))
            else:
                out.check("asymptotic-limit", max(rep.rel_err) <= tol["asymptotic_rel"], str(rep.rel_err))
    elif qmin:
        if rep.S_ac == 0:
            out.check("rate-limit", abs(values[-1]) <= tol["rate_abs"], f"S={values[-1]:.3e}")
        else:
            out.check("rate-limit", rep.rel_err[-1] <= tol["rate_rel"], f"rel_err={rep.rel_err[-1]:.3e}")
    if rep.liminf_ok is not None:
        out.check("liminf", rep.liminf_ok, f"S={values[-1]:.6g} vs S_ac={rep.S_ac:.6g}")
    out.report["_plot"] = {"ladder": rep}


def _coarea_integrand(dim: int):
    if dim == 1:
        return lambda x, xi: np.exp(-np.abs(xi))
    return lambda x, xi: (1 + 0.5 * np.sin(2 * np.pi * x[..., 0])) * np.exp(-np.abs(xi) / 2)


def cmd_coarea(cfg, args, out: Outcome):
    # theta only matters for mcf radius paths
    flow = cfg.load_flow(_context(cfg).coeffs.theta)
    ladder = [float(e) for e in cfg.coarea.get("eps_ladder", [0.02, 0.01, 0.005])]
    rep = coarea_check(flow, float(cfg.coarea.get("t", 0.0)), _coarea_integrand(flow.dim), ladder,
                       cfg.coarea.get("cells_per_eps"))
    out.report.update(coarea=rep.to_dict(), flow=flow.to_dict())
    out.check("coarea-limit", rep.errors[-1] <= cfg.tol["coarea_rel"], f"rel_err={rep.errors[-1]:.3e}")
    out.report["_plot"] = {"coarea": rep}


def cmd_all(cfg, args, out: Outcome):
    results = run_acceptance(seed=args.seed, workers=args.workers, log=print)
    out.report.update(criteria=[r.to_dict() for r in results])
    for r in results:
        out.check(f"criterion-{r.number}", r.passed, "; ".join(r.failures))
    # plot data for the reference configuration
    ref = ExperimentConfig()
    for name in ("profile", "corrector", "rate"):
        sub = Outcome(name)
        HANDLERS[name](ref, args, sub)
        emit_plot_data(sub.report.pop("_plot"), args.out)


HANDLERS = {
    "validate": cmd_validate,
    "profile": cmd_profile,
    "coefficients": cmd_coefficients,
    "corrector": cmd_corrector,
    "rate": cmd_rate,
    "coarea": cmd_coarea,
    "all": cmd_all,
}


def emit_plot_data(plot: dict, out_dir) -> list:
    """Write one CSV per figure-like artifact; returns the written paths."""
    out_dir = Path(out_dir)
    paths = []
    if "profile" in plot:
        p = plot["profile"]
        path = out_dir / "profile.csv"
        write_csv(path, ["xi", "u", "v", "du", "dv"], zip(p.xi, p.u, p.v, p.du, p.dv))
        paths.append(path)
    if "basis" in plot:
        B = plot["basis"]
        path = out_dir / "corrector_basis.csv"
        write_csv(path, ["xi", "Q_A", "Q_B", "dQ_A", "dQ_B", "H_A", "H_B"],
                  zip(B.xi, B.Q_A, B.Q_B, B.dQ_A, B.dQ_B, B.H_A, B.H_B))
        paths.append(path)
    if "ladder" in plot:
        rep = plot["ladder"]
        values = rep.S_asym if rep.mode == "asymptotic-2d" else rep.S_direct
        path = out_dir / "ladder.csv"
        write_csv(path, ["eps", "S", "S_ac", "rel_err"],
                  [(e, s, rep.S_ac, r) for e, s, r in zip(rep.eps_ladder, values, rep.rel_err)])
        paths.append(path)
        path = out_dir / "rate.csv"
        write_csv(path, ["eps", "S_direct", "S_asym", "S_ac", "rel_err", "newton_iters"], rep.rows())
        paths.append(path)
    if "coarea" in plot:
        rep = plot["coarea"]
        path = out_dir / "coarea.csv"
        write_csv(path, ["eps", "value", "target", "rel_err"],
                  [(e, v, rep.target, r) for e, v, r in zip(rep.eps, rep.values, rep.errors)])
        paths.append(path)
    return paths


def run(command: str, cfg: ExperimentConfig, args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome = Outcome(command)
    meta = {"command": command, "seed": args.seed, "version": __version__, "config": cfg.to_dict()}
    t0 = time.perf_counter()
    try:
        meta["hashes"] = cfg.hashes()
    except SharpInterfaceError as exc:
        meta["hashes"] = {"config": hash_object(cfg.to_dict()), "model": None, "flow": None}
        outcome.check("model-load", False, str(exc), type(exc).__name__)
    if outcome.ok:
        try:
            HANDLERS[command](cfg, args, outcome)
        except SharpInterfaceError as exc:
            outcome.check(command, False, str(exc), type(exc).__name__)
    plot = outcome.report.pop("_plot", None)
    if plot:
        emit_plot_data(plot, out_dir)
    report = {**meta, **outcome.report, "passed": outcome.ok, "wall_time": time.perf_counter() - t0}
    write_json(out_dir / f"{command}.json", report)
    if not outcome.ok:
        write_json(out_dir / "failures.json", {**meta, "status": "failed", "violations": outcome.violations})
        for v in outcome.violations:
            print(f"FAILED {v['invariant']}: {v['error']} {v['message']}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sharp-interface", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", default=None, help="experiment config JSON")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--slow", action="store_true", help="allow the 2D direct mode")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, json.JSONDecodeError, TypeError) as exc:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "failures.json", {"command": args.command, "status": "failed", "seed": args.seed,
                                                      "violations": [{"invariant": "config", "error": "ConfigError",
                                                                      "message": str(exc)}]})
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(args.command, cfg, args)


if __name__ == "__main__":
    sys.exit(main())
