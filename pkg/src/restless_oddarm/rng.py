"""Counter-based random streams keyed by (master seed, trial key, stream id).

Every trial derives its generators from its own key, so results never depend
on the order in which a worker pool schedules trials.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 0
STREAM_CHAINS = 1
STREAM_TREMBLE = 2
STREAM_POLICY = 3


def make_rng(master_seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def trial_streams(master_seed: int, *key: int) -> dict[int, np.random.Generator]:
    """One generator per stream id for the trial identified by ``key``."""
    return {
        s: make_rng(master_seed, *key, s)
        for s in (STREAM_INIT, STREAM_CHAINS, STREAM_TREMBLE, STREAM_POLICY)
    }
