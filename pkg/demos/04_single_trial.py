"""Run the stopping policy once, then a few hundred times, at one L."""

import numpy as np

from restless_oddarm import PolicyParams, build_truncated_mdp, canonical_instance, run_trial, solve_rstar

inst = canonical_instance()
tables = [solve_rstar(build_truncated_mdp(inst, h, 6)).policy for h in range(inst.K)]
params = PolicyParams(L=100, delta=0.2, K=inst.K)
print(f"threshold log((K-1)L) = {params.threshold:.4f}")

rec = run_trial(inst, odd_arm=2, params=params, tables=tables, seed=1)
print(f"declared {rec.declared} at tau={rec.tau}, pulls per arm {rec.pulls}")
print("final LLR matrix:\n", np.round(rec.final_llr, 3))

recs = [run_trial(inst, k % 3, params, tables, seed=k) for k in range(3000)]
taus = np.array([r.tau for r in recs])
print(f"\n3000 trials: error rate {np.mean([not r.correct for r in recs]):.4f}, "
      f"mean tau {taus.mean():.2f}, 90th pct {np.percentile(taus, 90):.0f}")
