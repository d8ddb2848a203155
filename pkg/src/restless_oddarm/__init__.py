"""Odd-arm identification in restless Markov bandits with a trembling hand."""

from .env import BanditInstance, new_env, tremble
from .policy import PolicyParams, PolicyTable, run_trial, uniform_policy
from .solver import build_truncated_mdp, solve_r1star, solve_rstar

__version__ = "0.1.0"

CANONICAL_P1 = [[0.9, 0.1], [0.2, 0.8]]
CANONICAL_P2 = [[0.5, 0.5], [0.5, 0.5]]


def canonical_instance(eta: float = 0.1) -> BanditInstance:
    """Three arms on two states with fast mixing; the reference test instance."""
    return BanditInstance(3, CANONICAL_P1, CANONICAL_P2, eta)


__all__ = [
    "BanditInstance",
    "PolicyParams",
    "PolicyTable",
    "build_truncated_mdp",
    "canonical_instance",
    "new_env",
    "run_trial",
    "solve_r1star",
    "solve_rstar",
    "tremble",
    "uniform_policy",
]
