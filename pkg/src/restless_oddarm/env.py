"""Restless bandit environment with a trembling-hand action channel.

Arms are indexed ``0 .. K-1``. The odd arm evolves under ``P1``; every other
arm evolves under ``P2``. All K chains advance on every tick whether or not
they are pulled.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from typing import NamedTuple

import numpy as np

from . import markov
from .errors import BadOddArm, DomainError, InstanceError, NotErgodic, WrongClock
from .rng import STREAM_CHAINS, STREAM_INIT, make_rng


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """Problem description: K arms, odd law P1, common law P2, trembling eta.

    ``allow_identical=True`` admits the degenerate ``P1 == P2`` case, which
    is useful only as a null check for drift and LLR computations.
    """

    K: int
    P1: np.ndarray
    P2: np.ndarray
    eta: float
    init_law: np.ndarray | None = None
    allow_identical: InitVar[bool] = False
    mixing: int = field(init=False, repr=False)

    def __post_init__(self, allow_identical: bool):
        if int(self.K) != self.K or self.K < 3:
            raise InstanceError("arms", f"need K >= 3 arms, got {self.K}")
        try:
            P1 = markov.as_transition_matrix(self.P1)
        except (DomainError, ValueError) as exc:
            raise InstanceError("stochasticity", f"P1: {exc}") from None
        try:
            P2 = markov.as_transition_matrix(self.P2)
        except (DomainError, ValueError) as exc:
            raise InstanceError("stochasticity", f"P2: {exc}") from None
        if P1.shape != P2.shape:
            raise InstanceError("stochasticity", "P1 and P2 have different sizes")
        mismatch = np.argwhere((P1 > 0) != (P2 > 0))
        if mismatch.size:
            i, j = mismatch[0]
            raise InstanceError(
                "support", f"P1({j}|{i})={P1[i, j]} but P2({j}|{i})={P2[i, j]}; zero patterns must agree"
            )
        if not allow_identical and np.max(np.abs(P1 - P2)) <= 1e-12:
            raise InstanceError("distinct", "P1 and P2 are identical")
        try:
            m = max(markov.mixing_exponent(P1), markov.mixing_exponent(P2))
        except NotErgodic as exc:
            raise InstanceError("ergodicity", str(exc)) from None
        if not (0.0 <= self.eta <= 1.0):
            raise InstanceError("eta", f"trembling parameter must lie in [0, 1], got {self.eta}")
        S = P1.shape[0]
        if self.init_law is None:
            init = np.full(S, 1.0 / S)
        else:
            try:
                init = markov.as_distribution(self.init_law)
            except (DomainError, ValueError) as exc:
                raise InstanceError("init_law", str(exc)) from None
            if init.shape != (S,):
                raise InstanceError("init_law", f"expected {S} entries, got {init.shape[0]}")
        init.setflags(write=False)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "P1", P1)
        object.__setattr__(self, "P2", P2)
        object.__setattr__(self, "init_law", init)
        object.__setattr__(self, "mixing", m)

    @property
    def S(self) -> int:
        return self.P1.shape[0]

    def law(self, arm: int, odd_arm: int) -> np.ndarray:
        """Transition matrix of ``arm`` when ``odd_arm`` is the odd one."""
        return self.P1 if arm == odd_arm else self.P2

    def with_eta(self, eta: float) -> "BanditInstance":
        return BanditInstance(self.K, self.P1, self.P2, eta, self.init_law)


class StepRecord(NamedTuple):
    t: int
    intended: int
    actual: int
    observation: int


def tremble(intended: int, eta: float, K: int, rng: np.random.Generator) -> int:
    """Keep ``intended`` w.p. ``1 - eta``, otherwise return a uniform arm."""
    if eta > 0.0 and rng.random() < eta:
        return int(rng.integers(K))
    return intended


class RestlessBanditEnv:
    """Hidden state of one trial: the odd arm, K chain states and the clock."""

    def __init__(self, instance: BanditInstance, odd_arm: int, true_states, rng: np.random.Generator):
        self.instance = instance
        self.odd_arm = odd_arm
        self.true_states = np.asarray(true_states, dtype=np.int64)
        self.clock = 0
        self._rng = rng
        K = instance.K
        # cumulative rows indexed [arm, state, next]
        laws = np.stack([instance.law(a, odd_arm) for a in range(K)])
        self._cdf = np.cumsum(laws, axis=2)
        self._cdf[:, :, -1] = 1.0
        self._arms = np.arange(K)

    def advance(self) -> None:
        """Move every chain one step forward."""
        u = self._rng.random(self.instance.K)
        rows = self._cdf[self._arms, self.true_states]
        self.true_states = (u[:, None] >= rows).sum(axis=1)
        self.clock += 1

    def pull(self, intended: int, actual: int) -> StepRecord:
        t = self.clock
        self.advance()
        return StepRecord(t, intended, actual, int(self.true_states[actual]))

    def step(self, intended: int, rng: np.random.Generator) -> StepRecord:
        """Tremble ``intended``, advance all chains, observe the actual arm."""
        actual = tremble(intended, self.instance.eta, self.instance.K, rng)
        return self.pull(intended, actual)


def new_env(instance: BanditInstance, odd_arm: int, seed: int, key: tuple[int, ...] = ()) -> RestlessBanditEnv:
    """Fresh environment; initial chain states drawn i.i.d. from ``init_law``.

    ``key`` identifies the trial so that trials sharing a master seed get
    independent streams.
    """
    if not (0 <= odd_arm < instance.K) or int(odd_arm) != odd_arm:
        raise BadOddArm(f"odd arm must be in 0..{instance.K - 1}, got {odd_arm}")
    init_rng = make_rng(seed, *key, STREAM_INIT)
    states = init_rng.choice(instance.S, size=instance.K, p=instance.init_law)
    return RestlessBanditEnv(instance, int(odd_arm), states, make_rng(seed, *key, STREAM_CHAINS))


def forced_round_robin(env: RestlessBanditEnv) -> list[StepRecord]:
    """Observe arms 0..K-1 in order at times 0..K-1, bypassing the tremble."""
    if env.clock != 0:
        raise WrongClock(f"round robin must start at clock 0, clock is {env.clock}")
    return [env.pull(a, a) for a in range(env.instance.K)]


def resample_warmup(env: RestlessBanditEnv, rng: np.random.Generator) -> list[StepRecord]:
    """Pull uniformly random arms (through the tremble) until every arm is seen."""
    if env.clock != 0:
        raise WrongClock(f"warm-up must start at clock 0, clock is {env.clock}")
    K = env.instance.K
    seen = np.zeros(K, dtype=bool)
    records = []
    while not seen.all():
        rec = env.step(int(rng.integers(K)), rng)
        seen[rec.actual] = True
        records.append(rec)
    return records
