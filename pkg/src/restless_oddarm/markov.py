"""Finite-state Markov chain primitives.

Transition matrices are plain 2-D float arrays (rows are conditional laws).
All logarithms are natural, so every divergence is in nats.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, DomainError, NotErgodic

STOCHASTIC_ATOL = 1e-12
DEFAULT_M_MAX = 512

#: Value returned by :func:`kl_divergence` when ``mu`` is not absolutely
#: continuous with respect to ``nu``.
KL_INFINITE = math.inf

Direction = Literal["odd_vs_normal", "normal_vs_odd"]


def as_transition_matrix(P, atol: float = STOCHASTIC_ATOL) -> np.ndarray:
    """Validate ``P`` as a row-stochastic matrix and return a read-only copy."""
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"transition matrix must be square, got shape {P.shape}")
    if P.shape[0] < 2:
        raise DomainError("transition matrix needs at least 2 states")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise DomainError("transition matrix entries must be finite and non-negative")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        raise DomainError(f"row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    P.setflags(write=False)
    return P


def as_distribution(p, atol: float = STOCHASTIC_ATOL) -> np.ndarray:
    p = np.array(p, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch("probability vector must be 1-D")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise DomainError("not a probability vector")
    return p


def matrix_power(P, d: int) -> np.ndarray:
    """Return ``P`` multiplied by itself ``d`` times (``d >= 1``)."""
    if d < 1:
        raise DomainError(f"power must be >= 1, got {d}")
    P = np.asarray(P, dtype=float)
    return np.linalg.matrix_power(P, int(d))


class PowerCache:
    """Precomputed powers ``P^1 .. P^max_power`` built by repeated multiplication.

    Indexing with ``d > max_power`` returns ``P^max_power`` (the capped power).
    """

    def __init__(self, base, max_power: int):
        if max_power < 1:
            raise DomainError("max_power must be >= 1")
        self.base = np.asarray(base, dtype=float)
        self.max_power = int(max_power)
        powers = np.empty((self.max_power + 1,) + self.base.shape)
        powers[0] = np.eye(self.base.shape[0])
        for d in range(1, self.max_power + 1):
            powers[d] = powers[d - 1] @ self.base
        powers.setflags(write=False)
        self.powers = powers

    def __getitem__(self, d: int) -> np.ndarray:
        if d < 1:
            raise DomainError(f"power must be >= 1, got {d}")
        return self.powers[min(int(d), self.max_power)]

    def __len__(self) -> int:
        return self.max_power


def mixing_exponent(P, m_max: int = DEFAULT_M_MAX) -> int:
    """Smallest ``m <= m_max`` such that every entry of ``P^m`` is positive.

    Raises :class:`NotErgodic` when no such ``m`` exists, i.e. the chain is
    reducible or periodic (at least up to ``m_max``).
    """
    P = np.asarray(P, dtype=float)
    # Only the zero pattern matters; boolean products avoid underflow.
    pattern = P > 0
    current = pattern.copy()
    step = pattern.astype(np.int64)
    for m in range(1, m_max + 1):
        if current.all():
            return m
        current = (current.astype(np.int64) @ step) > 0
    raise NotErgodic(f"no power up to {m_max} has all entries positive")


def stationary(P, tol: float = 1e-12, max_iter: int = 10**6, m_max: int = DEFAULT_M_MAX) -> np.ndarray:
    """Stationary distribution of an ergodic chain by power iteration on ``P^T``."""
    P = np.asarray(P, dtype=float)
    mixing_exponent(P, m_max)
    n = P.shape[0]
    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = mu @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) <= tol:
            mu = nxt
            break
        mu = nxt
    if np.max(np.abs(mu @ P - mu)) > max(tol, 1e-15) * 10:
        raise NotErgodic("power iteration did not converge")
    return mu


def stationary_sparse(Q) -> np.ndarray:
    """Stationary law of a (possibly large, sparse) row-stochastic kernel.

    Solves ``mu (Q - I) = 0`` with one balance equation replaced by the
    normalisation. Assumes a single recurrent class.
    """
    Q = sp.csr_matrix(Q)
    n = Q.shape[0]
    A = (Q.T - sp.identity(n, format="csr")).tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[n - 1] = 1.0
    mu = spla.spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(mu)):
        raise NotErgodic("stationary system is singular")
    mu = np.where(np.abs(mu) < 1e-300, 0.0, mu)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def kl_divergence(mu, nu) -> float:
    """Relative entropy D(mu || nu) in nats, with 0 log(0/x) = 0.

    Returns :data:`KL_INFINITE` when ``mu`` puts mass where ``nu`` does not.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise DimensionMismatch(f"shapes {mu.shape} and {nu.shape} differ")
    support = mu > 0
    if np.any(nu[support] <= 0):
        return KL_INFINITE
    m = mu[support]
    return float(np.sum(m * np.log(m / nu[support])))


def kl_reward(P1, P2, d: int, i: int, direction: Direction = "odd_vs_normal") -> float:
    """KL divergence between row ``i`` of ``P1^d`` and of ``P2^d``.

    ``odd_vs_normal`` gives D(P1^d(.|i) || P2^d(.|i)); ``normal_vs_odd``
    swaps the arguments.
    """
    r1 = matrix_power(P1, d)[i]
    r2 = matrix_power(P2, d)[i]
    if direction == "odd_vs_normal":
        return kl_divergence(r1, r2)
    if direction == "normal_vs_odd":
        return kl_divergence(r2, r1)
    raise ValueError(f"unknown direction {direction!r}")


def binary_relative_entropy(x: float, y: float) -> float:
    """d(x, y) = x log(x/y) + (1-x) log((1-x)/(1-y))."""
    if not (0.0 <= x <= 1.0) or not (0.0 <= y <= 1.0):
        raise DomainError("arguments must lie in [0, 1]")
    total = 0.0
    for p, q in ((x, y), (1.0 - x, 1.0 - y)):
        if p == 0.0:
            continue
        if q == 0.0:
            raise DomainError(f"d({x}, {y}) is infinite")
        total += p * math.log(p / q)
    return total
