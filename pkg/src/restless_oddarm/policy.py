"""Stationary randomised strategies, the stopping policy and trial runners."""

from __future__ import annotations

import bisect
import json
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .env import BanditInstance, forced_round_robin, new_env, resample_warmup, tremble
from .errors import DomainError
from .llr import DEFAULT_D_CAP_LLR, LLRState, PairKLCache, apply_warmup
from .rng import STREAM_POLICY, STREAM_TREMBLE, make_rng
from .tracker import DEFAULT_D_CAP, CountsTable, DelayState

DEFAULT_MAX_STEPS = 10**7


class PolicyTable:
    """Conditional arm distribution lambda(. | capped delays, last states).

    Keys are ``(delays, last_states)`` tuples with delays already capped at
    ``d_cap``. Lookups of unknown keys fall back to ``default_row``.
    """

    def __init__(self, K: int, d_cap: int, rows: dict | None = None, default_row=None, meta: dict | None = None):
        self.K = int(K)
        self.d_cap = int(d_cap)
        self.default_row = np.full(K, 1.0 / K) if default_row is None else _check_row(default_row, K)
        self.rows = {}
        self._cdf = {}
        self.meta = dict(meta or {})
        for key, row in (rows or {}).items():
            self[key] = row
        self._default_cdf = _cdf(self.default_row)

    def __setitem__(self, key, row) -> None:
        d, i = key
        key = (tuple(int(x) for x in d), tuple(int(x) for x in i))
        row = _check_row(row, self.K)
        self.rows[key] = row
        self._cdf[key] = _cdf(row)

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, delays, last_states) -> np.ndarray:
        cap = self.d_cap
        key = (tuple(d if d < cap else cap for d in delays), tuple(last_states))
        return self.rows.get(key, self.default_row)

    def sample(self, delays, last_states, u: float) -> int:
        """Invert the row's CDF at ``u`` in [0, 1)."""
        cap = self.d_cap
        key = (tuple(d if d < cap else cap for d in delays), tuple(last_states))
        cdf = self._cdf.get(key, self._default_cdf)
        return min(bisect.bisect_right(cdf, u), self.K - 1)

    def as_array(self, states) -> np.ndarray:
        """Rows for an ordered list of ``(delays, last_states)`` keys."""
        return np.array([self.lookup(d, i) for d, i in states])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "d_cap": self.d_cap,
            "meta": self.meta,
            "default_row": self.default_row.tolist(),
            "rows": [
                {"delays": list(d), "states": list(i), "probs": row.tolist()}
                for (d, i), row in sorted(self.rows.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyTable":
        rows = {(tuple(r["delays"]), tuple(r["states"])): r["probs"] for r in data["rows"]}
        return cls(data["K"], data["d_cap"], rows, data.get("default_row"), data.get("meta"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PolicyTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _check_row(row, K: int) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    if row.shape != (K,) or np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
        raise DomainError(f"policy row must be a probability vector over {K} arms: {row!r}")
    return row


def _cdf(row: np.ndarray) -> list[float]:
    c = np.cumsum(row)
    c[-1] = 1.0
    return c.tolist()


def uniform_policy(K: int, d_cap: int = DEFAULT_D_CAP) -> PolicyTable:
    if K < 2:
        raise DomainError("need at least 2 arms")
    return PolicyTable(K, d_cap)


@dataclass(frozen=True)
class PolicyParams:
    L: float
    delta: float
    K: int

    def __post_init__(self):
        if not self.L > 1:
            raise DomainError(f"L must exceed 1, got {self.L}")
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")

    @property
    def threshold(self) -> float:
        return math.log((self.K - 1) * self.L)


class Stop(NamedTuple):
    declared: int


class Pull(NamedTuple):
    intended: int


@dataclass
class PolicyState:
    tables: list[PolicyTable]
    current_guess: int | None = None
    stopped: bool = False
    declared: int | None = None


def choose_intended(ps: PolicyState, llr: LLRState, state: DelayState, params: PolicyParams, rng) -> Stop | Pull:
    """One decision of the stopping policy.

    The current guess is the hypothesis with the largest ``M_h(n)`` (ties
    broken uniformly). Stop and declare it once its statistic reaches the
    threshold; otherwise draw the intended arm from that hypothesis' table.
    """
    M = llr.statistics()
    best = M.max()
    ties = np.flatnonzero(M == best)
    theta = int(ties[0]) if ties.size == 1 else int(ties[rng.integers(ties.size)])
    ps.current_guess = theta
    if best >= params.threshold:
        ps.stopped = True
        ps.declared = theta
        return Stop(theta)
    return Pull(ps.tables[theta].sample(state.delays, state.last_states, rng.random()))


@dataclass
class TrialRecord:
    seed: int
    key: tuple
    hypothesis: int
    tau: int
    declared: int | None
    correct: bool
    censored: bool
    final_llr: list = field(default_factory=list)
    pulls: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "key": list(self.key),
            "hypothesis": self.hypothesis,
            "tau": self.tau,
            "declared": self.declared,
            "correct": self.correct,
            "censored": self.censored,
            "final_llr": self.final_llr,
            "pulls": self.pulls,
        }


def _warmup(env, warmup: str, rng):
    if warmup == "forced":
        return forced_round_robin(env)
    if warmup == "resample":
        return resample_warmup(env, rng)
    raise ValueError(f"unknown warm-up mode {warmup!r}")


def run_trial(
    instance: BanditInstance,
    odd_arm: int,
    params: PolicyParams,
    tables: list[PolicyTable],
    seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    key: tuple = (),
    cache: PairKLCache | None = None,
    warmup: str = "forced",
) -> TrialRecord:
    """Run the stopping policy until it declares an arm or hits ``max_steps``.

    ``tau`` is the clock value at stopping, i.e. the number of observations
    taken including the warm-up.
    """
    if len(tables) != instance.K:
        raise ValueError("need one policy table per hypothesis")
    t0 = time.perf_counter()
    K = instance.K
    cache = cache or PairKLCache(instance, DEFAULT_D_CAP_LLR)
    env = new_env(instance, odd_arm, seed, key)
    policy_rng = make_rng(seed, *key, STREAM_POLICY)
    tremble_rng = make_rng(seed, *key, STREAM_TREMBLE)
    records = _warmup(env, warmup, tremble_rng)
    state = DelayState.from_records(records, K)
    llr = apply_warmup(LLRState(K), cache, records)
    pulls = [0] * K
    for rec in records:
        pulls[rec.actual] += 1

    ps = PolicyState(tables)
    eta = instance.eta
    log_ratio = cache.odd_log_ratio
    delays, last = state.delays, state.last_states
    censored = True
    while env.clock < max_steps:
        decision = choose_intended(ps, llr, state, params, policy_rng)
        if isinstance(decision, Stop):
            censored = False
            break
        a = tremble(decision.intended, eta, K, tremble_rng)
        rec = env.pull(decision.intended, a)
        llr.add(a, log_ratio(delays[a], last[a], rec.observation))
        state.advance(a, rec.observation)
        pulls[a] += 1
    declared = None if censored else ps.declared
    return TrialRecord(
        seed=seed,
        key=tuple(key),
        hypothesis=odd_arm,
        tau=env.clock,
        declared=declared,
        correct=(not censored) and declared == odd_arm,
        censored=censored,
        final_llr=llr.z.tolist(),
        pulls=pulls,
        wall_time=time.perf_counter() - t0,
    )


def run_fixed_policy(
    instance: BanditInstance,
    odd_arm: int,
    table: PolicyTable,
    horizon: int,
    seed: int,
    key: tuple = (),
    cache: PairKLCache | None = None,
    counts_cap: int | None = None,
) -> tuple[LLRState, CountsTable]:
    """Run a non-stopping SRS ``table`` for ``horizon`` post-warm-up ticks.

    Returns the LLR state and the visit counts keyed with delays capped at
    ``counts_cap`` (default: the table's cap).
    """
    K = instance.K
    cache = cache or PairKLCache(instance, DEFAULT_D_CAP_LLR)
    env = new_env(instance, odd_arm, seed, key)
    policy_rng = make_rng(seed, *key, STREAM_POLICY)
    tremble_rng = make_rng(seed, *key, STREAM_TREMBLE)
    records = forced_round_robin(env)
    state = DelayState.from_records(records, K)
    llr = apply_warmup(LLRState(K), cache, records)
    counts = CountsTable(K, counts_cap or table.d_cap)
    eta = instance.eta
    log_ratio = cache.odd_log_ratio
    delays, last = state.delays, state.last_states
    # draw uniforms in blocks; two per tick (policy, tremble)
    block = 4096
    for start in range(0, horizon, block):
        n = min(block, horizon - start)
        u_pol = policy_rng.random(n).tolist()
        u_trem = tremble_rng.random(n).tolist()
        u_arm = tremble_rng.integers(K, size=n).tolist()
        for t in range(n):
            b = table.sample(delays, last, u_pol[t])
            a = u_arm[t] if u_trem[t] < eta else b
            rec = env.pull(b, a)
            counts.record(state, a, rec.observation)
            llr.add(a, log_ratio(delays[a], last[a], rec.observation))
            state.advance(a, rec.observation)
    return llr, counts
