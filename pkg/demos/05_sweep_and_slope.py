"""Sweep L over three decades and compare the growth of tau with 1/r*."""

from restless_oddarm import PolicyParams, build_truncated_mdp, canonical_instance, solve_rstar
from restless_oddarm.harness import run_sweep, slope_report

inst = canonical_instance()
solved = [solve_rstar(build_truncated_mdp(inst, h, 6)) for h in range(inst.K)]
r_star = min(r.r_star for r in solved)
grid = [PolicyParams(L, 0.2, inst.K) for L in (1e2, 1e3, 1e4, 1e5)]

sweep = run_sweep(inst, grid, [r.policy for r in solved], trials_per_cell=200, master_seed=5)
print(sweep.to_csv(r_star))

rep = slope_report(sweep, r_star, delta=0.2)
print(f"slope {rep.slope:.3f}, 1/r* = {1 / r_star:.3f}, band {tuple(round(b, 3) for b in rep.band)}")
print("inside band" if rep.in_band else "outside band")
