"""Controlled-Markov state (arm delays, last observed states) and visit counts."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTable
from .occupancy import OccupancyMeasure

DEFAULT_D_CAP = 8


@dataclass
class DelayState:
    """Per-arm delays since last selection and last observed states.

    After the warm-up exactly one delay equals 1 (the arm pulled on the
    previous tick) and all others are at least 2.
    """

    delays: list[int]
    last_states: list[int]

    @classmethod
    def after_round_robin(cls, observations) -> "DelayState":
        K = len(observations)
        return cls(list(range(K, 0, -1)), [int(x) for x in observations])

    @classmethod
    def from_records(cls, records, K: int) -> "DelayState":
        """Build the state after an arbitrary warm-up in which every arm was seen."""
        end = records[-1].t + 1
        last_t = [None] * K
        last_x = [None] * K
        for rec in records:
            last_t[rec.actual] = rec.t
            last_x[rec.actual] = rec.observation
        if any(t is None for t in last_t):
            raise ValueError("warm-up did not observe every arm")
        return cls([end - t for t in last_t], last_x)

    def copy(self) -> "DelayState":
        return DelayState(list(self.delays), list(self.last_states))

    def advance(self, actual: int, observation: int) -> None:
        """Apply the update rule in place."""
        d = self.delays
        for a in range(len(d)):
            d[a] += 1
        d[actual] = 1
        self.last_states[actual] = observation

    def capped(self, d_cap: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(min(x, d_cap) for x in self.delays), tuple(self.last_states)

    def is_valid(self) -> bool:
        ones = sum(1 for x in self.delays if x == 1)
        return ones == 1 and all(x >= 1 for x in self.delays)


def update(state: DelayState, actual: int, observation: int) -> DelayState:
    """Return the successor state; ``state`` is left untouched."""
    new = state.copy()
    new.advance(actual, observation)
    return new


@dataclass
class CountsTable:
    """Visit counts N(n, d, i, a) and transition counts N(n, d, i, a, j).

    Keys use delay vectors capped at ``d_cap``.
    """

    K: int
    d_cap: int = DEFAULT_D_CAP
    visits: Counter = field(default_factory=Counter)
    transitions: Counter = field(default_factory=Counter)
    horizon: int = 0

    def record(self, state: DelayState, actual: int, observation: int) -> None:
        d, i = state.capped(self.d_cap)
        self.visits[(d, i, actual)] += 1
        self.transitions[(d, i, actual, observation)] += 1
        self.horizon += 1

    @property
    def total(self) -> int:
        return sum(self.visits.values())

    def merge(self, other: "CountsTable") -> "CountsTable":
        if (self.K, self.d_cap) != (other.K, other.d_cap):
            raise ValueError("cannot merge tables with different K or d_cap")
        return CountsTable(
            self.K,
            self.d_cap,
            self.visits + other.visits,
            self.transitions + other.transitions,
            self.horizon + other.horizon,
        )

    def write_csv(self, path, transitions: bool = False) -> None:
        K = self.K
        header = [f"d_{a}" for a in range(K)] + [f"i_{a}" for a in range(K)] + ["a"]
        table = self.transitions if transitions else self.visits
        if transitions:
            header.append("j")
        header.append("count")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for key in sorted(table):
                d, i, *rest = key
                w.writerow([*d, *i, *rest, table[key]])


def record(counts: CountsTable, state: DelayState, actual: int, observation: int) -> CountsTable:
    counts.record(state, actual, observation)
    return counts


def empirical_occupancy(counts: CountsTable) -> OccupancyMeasure:
    """Normalised visit frequencies over (capped delays, last states, arm)."""
    total = counts.total
    if total == 0:
        raise EmptyTable("no visits recorded")
    states = sorted({(d, i) for d, i, _ in counts.visits})
    index = {k: s for s, k in enumerate(states)}
    mass = np.zeros((len(states), counts.K))
    for (d, i, a), c in counts.visits.items():
        mass[index[(d, i)], a] += c
    return OccupancyMeasure(states, mass / total)
