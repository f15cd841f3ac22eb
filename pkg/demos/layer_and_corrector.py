"""Standing wave, transport coefficients and the first-order corrector for the reference model.

Run: python3 demos/layer_and_corrector.py
"""

import numpy as np

from sharp_interface import build_context, reference_model
from sharp_interface.corrector import cost_density

ctx = build_context(reference_model())
p, k, B = ctx.profile, ctx.coeffs, ctx.basis

exact = 0.5 + 0.25 * np.tanh(p.xi / 4)
print(f"profile: sup |u - tanh form| = {np.max(np.abs(p.u - exact)):.2e}, gamma = {p.gamma:.6f}")
print(f"theta1 = {k.theta1:.8f}  theta2 = {k.theta2:.8f}  nu = {k.nu:.8f}  mu = {k.mu:.6f}  theta = {k.theta:.6f}")
print(f"lambda_A = {B.lambda_A:.6f}  lambda_B = {B.lambda_B:.6f}")

print("\n   a     b    cost(Q_min)    (a - theta b)^2/(2 mu)")
for a, b in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, -0.7), (-2.0, 0.5)]:
    c = abs(cost_density(a, b, B.Q(a, b), p, ctx.op).full)
    print(f"{a:5.1f} {b:5.1f}  {c:.10e}  {(a - k.theta * b) ** 2 / (2 * k.mu):.10e}")

# doubling the corrector moves the cost strictly above the minimum
doubled = tuple(2 * q for q in B.Q(1.0, 0.0))
c2 = cost_density(1.0, 0.0, doubled, p, ctx.op).full
print(f"\ncost with 2 Q_min at (1, 0): {c2:.6e}")
