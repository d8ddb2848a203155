"""Solve the occupancy LP, inspect the optimal table and the eta trade-off."""

import numpy as np

from restless_oddarm import build_truncated_mdp, canonical_instance, solve_r1star, solve_rstar
from restless_oddarm.solver import lower_bound_expected_tau, rstar_eta_curve

inst = canonical_instance()
for D in (4, 6, 8):
    mdp = build_truncated_mdp(inst, h=0, D=D)
    res = solve_rstar(mdp)
    print(f"D={D}: {mdp.n_states:>5} states  r*={res.r_star:.6f}  "
          f"relaxation={solve_r1star(inst, 0, D):.6f}")

print("\ncertificate (drift against each alternative):", res.certificate)
print("constraint residuals:", {k: f"{v:.1e}" for k, v in res.residuals.items()})

# The heaviest states of the optimal occupancy and what the table does there.
order = np.argsort(res.nu.state_mass())[::-1][:6]
print("\n delays      last   mass    lambda(.|state)")
for s in order:
    d, i = res.nu.states[s]
    print(f" {d!s:<11} {i!s:<6} {res.nu.state_mass()[s]:.4f}  {res.policy.lookup(d, i).round(3)}")

print("\neta     r*(eta)")
for eta, r in rstar_eta_curve(inst, 0, 6, [0.01, 0.1, 0.5, 1.0]):
    print(f"{eta:<6}  {r:.6f}")

eps = 0.01
print(f"\nany {eps}-correct policy needs E[tau] >= {lower_bound_expected_tau(res.r_star, eps):.2f}")
