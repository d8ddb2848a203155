"""How far apart are the odd and normal chains after d unobserved steps?

The information an observation carries depends on how long the arm went
unobserved. This prints the d-step KL table for the canonical pair and
shows it settling to the divergence between the two stationary laws.
"""

from restless_oddarm import CANONICAL_P1, CANONICAL_P2, markov

P1, P2 = CANONICAL_P1, CANONICAL_P2
mu1, mu2 = markov.stationary(P1), markov.stationary(P2)
limit = markov.kl_divergence(mu1, mu2)

print("stationary laws:", mu1.round(4), mu2.round(4))
print("mixing exponents:", markov.mixing_exponent(P1), markov.mixing_exponent(P2))
print()
print(" d   KL from state 0   KL from state 1")
for d in (1, 2, 3, 5, 8, 16, 32):
    k0 = markov.kl_reward(P1, P2, d, 0)
    k1 = markov.kl_reward(P1, P2, d, 1)
    print(f"{d:>2}   {k0:>15.6f}   {k1:>15.6f}")
print(f"limit {limit:.6f}")

# Waiting helps only from the state that is informative on its own.
# From state 0 the one-step row (0.9, 0.1) is already far from uniform.
