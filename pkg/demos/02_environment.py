"""Simulate the restless arms directly and watch the delay state evolve."""

import numpy as np

from restless_oddarm import canonical_instance
from restless_oddarm.env import forced_round_robin, new_env
from restless_oddarm.rng import make_rng
from restless_oddarm.tracker import DelayState

inst = canonical_instance(eta=0.3)
env = new_env(inst, odd_arm=1, seed=7)
print("hidden start states:", env.true_states)

warm = forced_round_robin(env)
state = DelayState.from_records(warm, inst.K)
print("after round robin: delays", state.delays, "last states", state.last_states)

rng = make_rng(7, 99)
print("\n t  intended actual obs  delays")
for _ in range(10):
    rec = env.step(intended=0, rng=rng)  # always ask for arm 0
    state.advance(rec.actual, rec.observation)
    print(f"{rec.t:>2}  {rec.intended:>8} {rec.actual:>6} {rec.observation:>3}  {state.delays}")

# How often does the hand tremble onto another arm?
n = 20_000
kept = np.mean([env.step(0, rng).actual == 0 for _ in range(n)])
print(f"\nP(actual == intended) ~ {kept:.3f}  (1 - eta + eta/K = {1 - 0.3 + 0.3 / 3:.3f})")
