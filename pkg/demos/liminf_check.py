"""Suboptimal ansatz choices never fall below the limit energy.

Compares the optimal corrector with Q = 0 and with Q = 0 plus a sqrt(eps) bump.

Run: python3 demos/liminf_check.py
"""

from sharp_interface import AnsatzField, PerturbationField, build_context, convergence_study, reference_model
from sharp_interface.acceptance import translating_pair

ctx = build_context(reference_model())
ladder = [0.04, 0.02, 0.01, 0.005]
runs = {
    "Q_min": ("qmin", PerturbationField()),
    "Q = 0": ("zero", PerturbationField()),
    "Q = 0, bump": ("zero", PerturbationField(1.0, 0.5)),
}
for label, (Q, R) in runs.items():
    rep = convergence_study(AnsatzField(ctx, translating_pair(), ladder[0], Q, R), ladder)
    row = "  ".join(f"{s:.4e}" for s in rep.S_direct)
    print(f"{label:12s} {row}   S/S_ac at eps={ladder[-1]}: {rep.S_direct[-1] / rep.S_ac:.4f}")
