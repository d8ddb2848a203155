"""Log-likelihood ratios Z_hh'(n) between odd-arm hypotheses.

Only the actual pulls and observations enter the statistic. A pull of arm
``a`` with delay ``d``, last state ``i`` and observation ``j`` adds
``l = log(P1^d(j|i) / P2^d(j|i))`` to every ``Z[a, h']`` and subtracts it
from every ``Z[h, a]``; pairs not involving ``a`` are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import BanditInstance, StepRecord
from .markov import PowerCache
from .tracker import CountsTable, DelayState

DEFAULT_D_CAP_LLR = 64


class PairKLCache:
    """Log-ratio tables ``log(P1^d(j|i) / P2^d(j|i))`` for ``d = 1..d_cap``.

    Entries where both powers vanish are set to 0; such transitions have
    probability zero under every hypothesis.
    """

    def __init__(self, instance: BanditInstance, d_cap: int = DEFAULT_D_CAP_LLR):
        self.d_cap = int(d_cap)
        p1 = PowerCache(instance.P1, self.d_cap).powers
        p2 = PowerCache(instance.P2, self.d_cap).powers
        with np.errstate(divide="ignore", invalid="ignore"):
            logr = np.where((p1 > 0) & (p2 > 0), np.log(p1 / p2), 0.0)
        logr[0] = 0.0
        logr.setflags(write=False)
        self.log_ratio = logr
        # nested lists make scalar lookups in the simulation loop cheap
        self._table = logr.tolist()

    def odd_log_ratio(self, d: int, i: int, j: int) -> float:
        """``log(P1^d(j|i) / P2^d(j|i))`` with ``d`` capped at ``d_cap``."""
        return self._table[d if d < self.d_cap else self.d_cap][i][j]


def llr_increment(cache: PairKLCache, arm: int, delay: int, last: int, obs: int, pair: tuple[int, int]) -> float:
    h, hp = pair
    if arm == h:
        return cache.odd_log_ratio(delay, last, obs)
    if arm == hp:
        return -cache.odd_log_ratio(delay, last, obs)
    return 0.0


@dataclass
class LLRState:
    K: int
    z: np.ndarray = field(default=None)
    n: int = 0

    def __post_init__(self):
        if self.z is None:
            self.z = np.zeros((self.K, self.K))
        self._off = ~np.eye(self.K, dtype=bool)

    def add(self, arm: int, value: float) -> None:
        """Add the log ratio of one pull of ``arm`` to every affected pair."""
        if value != 0.0:
            self.z[arm, :] += value
            self.z[:, arm] -= value
        self.n += 1

    def statistics(self) -> np.ndarray:
        """Vector of ``M_h(n) = min_{h' != h} Z_hh'(n)`` over all ``h``."""
        return np.where(self._off, self.z, np.inf).min(axis=1)


def apply_step(llr: LLRState, cache: PairKLCache, step: StepRecord, pre_update_state: DelayState) -> LLRState:
    """Fold one post-warm-up observation into ``llr`` (in place, returned)."""
    a = step.actual
    llr.add(a, cache.odd_log_ratio(pre_update_state.delays[a], pre_update_state.last_states[a], step.observation))
    return llr


def apply_warmup(llr: LLRState, cache: PairKLCache, records: list[StepRecord]) -> LLRState:
    """Fold warm-up observations into ``llr``.

    The first observation of each arm carries only initial-law terms, which
    cancel because the initial law does not depend on the hypothesis. Repeat
    observations (possible with a resampled warm-up) count as usual.
    """
    last_t: dict[int, int] = {}
    last_x: dict[int, int] = {}
    for rec in records:
        a = rec.actual
        if a in last_t:
            llr.add(a, cache.odd_log_ratio(rec.t - last_t[a], last_x[a], rec.observation))
        else:
            llr.n += 1
        last_t[a] = rec.t
        last_x[a] = rec.observation
    return llr


def test_statistic(llr: LLRState, h: int) -> float:
    return float(min(llr.z[h, hp] for hp in range(llr.K) if hp != h))


test_statistic.__test__ = False  # keep pytest from collecting it


def batch_llr(counts: CountsTable, cache: PairKLCache) -> np.ndarray:
    """Recompute the full Z matrix from transition counts.

    ``counts`` must be keyed with ``d_cap >= cache.d_cap`` so that no delay
    information is lost.
    """
    K = counts.K
    per_arm = np.zeros(K)
    for (d, i, a, j), c in counts.transitions.items():
        per_arm[a] += c * cache.odd_log_ratio(d[a], i[a], j)
    return per_arm[:, None] - per_arm[None, :]
