from __future__ import annotations

from dataclasses import dataclass

import numpy as np

StateKey = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass
class OccupancyMeasure:
    """Mass over state-action triples ``(delays, last_states, arm)``.

    ``states[s]`` is the ``(delays, last_states)`` key of row ``s`` and
    ``mass[s, a]`` the long-run fraction of ticks spent in that state while
    arm ``a`` is the one actually pulled.
    """

    states: list[StateKey]
    mass: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self._index = {key: s for s, key in enumerate(self.states)}

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def state_mass(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def get(self, delays, last_states, arm: int) -> float:
        s = self._index.get((tuple(delays), tuple(last_states)))
        return 0.0 if s is None else float(self.mass[s, arm])

    def as_dict(self) -> dict[tuple[tuple[int, ...], tuple[int, ...], int], float]:
        out = {}
        for s, (d, i) in enumerate(self.states):
            for a, m in enumerate(self.mass[s]):
                if m > 0:
                    out[(d, i, a)] = float(m)
        return out

    def state_distribution_over(self, keys: list[StateKey]) -> np.ndarray:
        """State marginal re-indexed onto ``keys`` (missing keys get 0)."""
        marg = self.state_mass()
        return np.array([marg[self._index[k]] if k in self._index else 0.0 for k in keys])
