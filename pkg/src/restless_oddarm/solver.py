"""Optimal KL drift on a delay-truncated controlled Markov chain.

The state of the chain is the pair (arm delays, last observed states) with
every delay capped at ``D``. The best achievable drift is the value of a
max-min linear program over state-action occupancy measures: maximise the
smallest expected KL reward against any alternative hypothesis subject to
global balance, normalisation, and a floor that every arm is actually pulled
with probability at least eta/K in every state.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import markov
from .env import BanditInstance
from .errors import CapTooSmall, Infeasible, NumericalFailure
from .markov import KL_INFINITE, PowerCache
from .occupancy import OccupancyMeasure
from .policy import PolicyTable

ZERO_MASS = 1e-13


def kl_tables(instance: BanditInstance, D: int) -> tuple[np.ndarray, np.ndarray]:
    """``k_odd[d, i] = D(P1^d(.|i) || P2^d(.|i))`` and the reversed table.

    Index 0 is unused; delays above ``D`` use the ``D``-step power.
    """
    p1 = PowerCache(instance.P1, D).powers
    p2 = PowerCache(instance.P2, D).powers
    S = instance.S
    k_odd = np.zeros((D + 1, S))
    k_norm = np.zeros((D + 1, S))
    for d in range(1, D + 1):
        for i in range(S):
            k_odd[d, i] = markov.kl_divergence(p1[d, i], p2[d, i])
            k_norm[d, i] = markov.kl_divergence(p2[d, i], p1[d, i])
    if np.any(k_odd == KL_INFINITE) or np.any(k_norm == KL_INFINITE):
        raise Infeasible("infinite KL reward: P1 and P2 supports differ")
    return k_odd, k_norm


@dataclass
class TruncatedMDP:
    """Finite controlled chain obtained by capping delays at ``D``.

    ``kernel`` has one row per state-action pair (row ``s*K + a``) and one
    column per next state. ``rewards[h', s, a]`` is the KL reward of
    pulling ``a`` in state ``s`` for the pair (``h``, ``h'``); the slice
    ``h' = h`` is identically zero.
    """

    instance: BanditInstance
    h: int
    D: int
    states: list
    index: dict
    kernel: sp.csr_matrix
    rewards: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def K(self) -> int:
        return self.instance.K

    def alternatives(self) -> list[int]:
        return [hp for hp in range(self.K) if hp != self.h]

    def action_kernels(self) -> list[sp.csr_matrix]:
        K = self.K
        return [self.kernel[a::K] for a in range(K)]

    def closed_loop(self, lam: np.ndarray, eta: float) -> tuple[sp.csr_matrix, np.ndarray]:
        """State kernel and actual-arm probabilities under intended law ``lam``."""
        n, K = self.n_states, self.K
        p = eta / K + (1.0 - eta) * np.asarray(lam)
        weighted = sp.diags(p.ravel()) @ self.kernel
        group = sp.kron(sp.identity(n, format="csr"), np.ones((1, K)), format="csr")
        return (group @ weighted).tocsr(), p


def build_truncated_mdp(instance: BanditInstance, h: int, D: int) -> TruncatedMDP:
    """Enumerate the states reachable after the round-robin warm-up.

    The kernel pulls arm ``a``: its delay resets to 1 and its last state
    moves by ``(P_h^a)^{d_a}`` (``d_a <= D`` already); all other delays grow
    by one and saturate at ``D``.
    """
    K, S = instance.K, instance.S
    if D < K:
        raise CapTooSmall(f"delay cap D={D} cannot represent the post-warm-up delays (need D >= K={K})")
    powers = {
        1: PowerCache(instance.P1, D).powers,
        2: PowerCache(instance.P2, D).powers,
    }
    laws = [powers[1] if a == h else powers[2] for a in range(K)]
    k_odd, k_norm = kl_tables(instance, D)

    init_delays = tuple(min(K - a, D) for a in range(K))
    support = [s for s in range(S) if instance.init_law[s] > 0]
    queue = deque((init_delays, i) for i in itertools.product(support, repeat=K))
    index: dict = {}
    states: list = []
    for st in queue:
        index[st] = len(states)
        states.append(st)
    rows, cols, vals = [], [], []
    while queue:
        d, i = queue.popleft()
        s = index[(d, i)]
        for a in range(K):
            nd = tuple(1 if b == a else min(d[b] + 1, D) for b in range(K))
            probs = laws[a][d[a], i[a]]
            for j in np.flatnonzero(probs > 0):
                ni = i[:a] + (int(j),) + i[a + 1 :]
                key = (nd, ni)
                if key not in index:
                    index[key] = len(states)
                    states.append(key)
                    queue.append(key)
                rows.append(s * K + a)
                cols.append(index[key])
                vals.append(probs[j])
    n = len(states)
    kernel = sp.csr_matrix((vals, (rows, cols)), shape=(n * K, n))

    rewards = np.zeros((K, n, K))
    for s, (d, i) in enumerate(states):
        for hp in range(K):
            if hp == h:
                continue
            rewards[hp, s, h] = k_odd[d[h], i[h]]
            rewards[hp, s, hp] = k_norm[d[hp], i[hp]]
    return TruncatedMDP(instance, h, D, states, index, kernel, rewards)


def occupancy_of_policy(mdp: TruncatedMDP, lam: np.ndarray, eta: float) -> np.ndarray:
    """Stationary state-action occupancy ``nu[s, a] = mu(s) * (eta/K + (1-eta) lam(a|s))``."""
    P, p = mdp.closed_loop(lam, eta)
    mu = markov.stationary_sparse(P)
    return mu[:, None] * p


def extract_policy(nu: np.ndarray, eta: float) -> np.ndarray:
    """Invert the occupancy map: recover intended-arm probabilities per state.

    Solves ``eta/K + (1-eta) lam(a|s) = nu(s,a) / sum_a' nu(s,a')``; rows with
    no mass, and every row when ``eta == 1``, get the uniform law.
    """
    n, K = nu.shape
    lam = np.full((n, K), 1.0 / K)
    if eta >= 1.0:
        return lam
    mass = nu.sum(axis=1)
    live = mass > ZERO_MASS
    frac = nu[live] / mass[live, None]
    rows = np.clip((frac - eta / K) / (1.0 - eta), 0.0, None)
    rows /= rows.sum(axis=1, keepdims=True)
    lam[live] = rows
    return lam


def constraint_residuals(mdp: TruncatedMDP, nu: np.ndarray, eta: float) -> dict[str, float]:
    """Max violations of balance, normalisation, non-negativity and the eta floor."""
    K = mdp.K
    flat = nu.ravel()
    inflow = mdp.kernel.T @ flat
    outflow = nu.sum(axis=1)
    return {
        "balance": float(np.max(np.abs(outflow - inflow))),
        "normalisation": float(abs(flat.sum() - 1.0)),
        "nonnegativity": float(max(0.0, -flat.min())),
        "floor": float(max(0.0, np.max(eta / K * outflow[:, None] - nu))),
    }


def table_from_lambda(mdp: TruncatedMDP, lam: np.ndarray, eta: float) -> PolicyTable:
    rows = {key: lam[s] / lam[s].sum() for s, key in enumerate(mdp.states)}
    meta = {"hypothesis": mdp.h, "eta": eta, "D": mdp.D}
    return PolicyTable(mdp.K, mdp.D, rows, meta=meta)


@dataclass
class SolverResult:
    r_star: float
    lp_value: float
    nu: OccupancyMeasure
    policy: PolicyTable
    eta: float
    D: int
    h: int
    certificate: dict[int, float]
    residuals: dict[str, float] = field(default_factory=dict)
    method: str = "highs"

    def certified(self, delta: float) -> bool:
        """True when the extracted policy reaches ``lp_value / (1 + delta)``."""
        return self.r_star >= self.lp_value / (1.0 + delta)

    def to_dict(self, policy_file: str | None = None) -> dict:
        return {
            "r_star": self.r_star,
            "lp_value": self.lp_value,
            "certificate": {str(k): v for k, v in sorted(self.certificate.items())},
            "residuals": self.residuals,
            "eta": self.eta,
            "D": self.D,
            "h": self.h,
            "method": self.method,
            "policy_file": policy_file,
        }

    def save(self, path, policy_file: str | None = None, meta: dict | None = None) -> None:
        data = self.to_dict(policy_file)
        if meta:
            data = {"meta": meta, **data}
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=False)
            fh.write("\n")


def _finish(mdp: TruncatedMDP, nu_lp: np.ndarray, lp_value: float, eta: float, method: str) -> SolverResult:
    nu_lp = np.clip(nu_lp, 0.0, None)
    nu_lp /= nu_lp.sum()
    lam = extract_policy(nu_lp, eta)
    if eta > 0:
        # Re-derive the occupancy of the extracted policy so that the stored
        # measure, table and certificate describe exactly the same object.
        nu = occupancy_of_policy(mdp, lam, eta)
    else:
        nu = nu_lp
    cert = {hp: float(np.sum(nu * mdp.rewards[hp])) for hp in mdp.alternatives()}
    res = constraint_residuals(mdp, nu, eta)
    res["lp_policy_gap"] = float(np.max(np.abs(nu - nu_lp)))
    return SolverResult(
        r_star=min(cert.values()),
        lp_value=float(lp_value),
        nu=OccupancyMeasure(list(mdp.states), nu),
        policy=table_from_lambda(mdp, lam, eta),
        eta=float(eta),
        D=mdp.D,
        h=mdp.h,
        certificate=cert,
        residuals=res,
        method=method,
    )


def solve_rstar(mdp: TruncatedMDP, eta: float | None = None, tol: float = 1e-10, method: str = "highs", **kwargs) -> SolverResult:
    """Solve the occupancy-measure LP for the truncated chain.

    ``method="highs"`` uses an exact LP solver; ``method="subgradient"``
    runs the dependency-light fallback :func:`solve_rstar_subgradient`.
    """
    eta = mdp.instance.eta if eta is None else float(eta)
    if method == "subgradient":
        return solve_rstar_subgradient(mdp, eta, **kwargs)
    n, K = mdp.n_states, mdp.K
    nK = n * K
    alts = mdp.alternatives()

    # variables: nu (n*K, row-major over (s, a)) followed by t
    c = np.zeros(nK + 1)
    c[-1] = -1.0
    group = sp.kron(sp.identity(n, format="csr"), np.ones((1, K)), format="csr")
    balance = (group - mdp.kernel.T).tocsr()
    A_eq = sp.vstack([
        sp.hstack([balance, sp.csr_matrix((n, 1))]),
        sp.csr_matrix(np.r_[np.ones(nK), 0.0]),
    ]).tocsr()
    b_eq = np.r_[np.zeros(n), 1.0]

    drift = sp.csr_matrix(np.stack([-mdp.rewards[hp].ravel() for hp in alts]))
    ub_blocks = [sp.hstack([drift, sp.csr_matrix(np.ones((len(alts), 1)))])]
    if eta > 0:
        floor = eta / K * sp.kron(sp.identity(n), np.ones((K, K))) - sp.identity(nK)
        ub_blocks.append(sp.hstack([floor, sp.csr_matrix((nK, 1))]))
    A_ub = sp.vstack(ub_blocks).tocsr()
    b_ub = np.zeros(A_ub.shape[0])
    bounds = [(0, None)] * nK + [(None, None)]

    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol, "presolve": True},
    )
    if res.status == 2:
        raise Infeasible(f"occupancy LP infeasible: {res.message}")
    if res.status != 0:
        raise NumericalFailure(f"occupancy LP failed: {res.message}")
    nu = res.x[:nK].reshape(n, K)
    return _finish(mdp, nu, -res.fun, eta, "highs")


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def best_response(mdp: TruncatedMDP, reward: np.ndarray, eta: float, tol: float = 1e-11, max_iter: int = 100_000, v0=None):
    """Average-reward optimal deterministic policy for ``reward[s, a]``.

    Relative value iteration on the trembled MDP (intended arm ``b`` is
    replaced by a uniform arm w.p. eta) with an aperiodicity transform.
    Returns the intended-arm table and the relative values.
    """
    n, K = mdp.n_states, mdp.K
    Qa = mdp.action_kernels()
    v = np.zeros(n) if v0 is None else v0.copy()
    for _ in range(max_iter):
        qa = np.stack([reward[:, a] + Qa[a] @ v for a in range(K)], axis=1)
        qb = eta * qa.mean(axis=1)[:, None] + (1.0 - eta) * qa
        tv = qb.max(axis=1)
        new = 0.5 * v + 0.5 * tv
        diff = new - v
        v = new - new[0]
        if diff.max() - diff.min() < tol:
            break
    lam = np.zeros((n, K))
    lam[np.arange(n), qb.argmax(axis=1)] = 1.0
    return lam, v


def solve_rstar_subgradient(
    mdp: TruncatedMDP,
    eta: float,
    max_iter: int = 10**6,
    gap_tol: float = 1e-4,
    step0: float | None = None,
) -> SolverResult:
    """Fallback solver: projected subgradient on the dual weights with primal averaging.

    The LP value equals ``min_w max_nu sum_h' w_h' <nu, k_h'>`` over weights
    ``w`` on the alternatives. The inner maximum is an average-reward MDP
    solved by relative value iteration; its occupancy is a subgradient. The
    running average of those occupancies is primal feasible and its
    smallest certificate is a lower bound on the value.
    """
    alts = mdp.alternatives()
    m = len(alts)
    R = np.stack([mdp.rewards[hp] for hp in alts])
    w = np.full(m, 1.0 / m)
    scale = float(np.max(R)) or 1.0
    step0 = step0 if step0 is not None else 1.0 / scale
    nu_sum = np.zeros((mdp.n_states, mdp.K))
    weight = 0.0
    upper, lower = math.inf, -math.inf
    nu_bar = None
    cache: dict[bytes, np.ndarray] = {}
    v = None
    for it in range(1, max_iter + 1):
        lam, v = best_response(mdp, np.tensordot(w, R, axes=1), eta, v0=v)
        key = np.packbits(lam.astype(bool)).tobytes()
        nu = cache.get(key)
        if nu is None:
            nu = occupancy_of_policy(mdp, lam, eta)
            cache[key] = nu
        g = np.array([np.sum(nu * R[k]) for k in range(m)])
        upper = min(upper, float(w @ g))
        step = step0 / math.sqrt(it)
        nu_sum += step * nu
        weight += step
        nu_bar = nu_sum / weight
        lower = max(lower, float(min(np.sum(nu_bar * R[k]) for k in range(m))))
        if upper - lower <= gap_tol * max(abs(upper), 1e-12):
            break
        w = _project_simplex(w - step * g)
    result = _finish(mdp, nu_bar, upper, eta, "subgradient")
    result.residuals["duality_gap"] = upper - lower
    return result


def solve_r1star(instance: BanditInstance, h: int, D: int, tol: float = 1e-10, tail: str = "open") -> float:
    """Per-arm relaxation over kappa(d, i, a), d <= D.

    Maximises ``min_h' sum kappa * k_hh'`` subject to ``sum kappa = 1``,
    ``kappa >= 0`` and a per-arm delay budget ``sum_{d,i} d * kappa(d,i,a)``:

    * ``tail="open"`` (default): the bin ``d = D`` stands for every delay of
      at least ``D`` (as in the truncated chain, whose rewards use the
      ``D``-step power there), so the budget becomes ``<= 1``. With this
      reading the truncated chain's occupancy is feasible and the value is
      never below :func:`solve_rstar`'s on the same cap.
    * ``tail="closed"``: delays above ``D`` are forbidden and the budget is
      ``= 1`` exactly. Infeasible whenever ``D < K``.
    """
    if D < 1:
        raise CapTooSmall("D must be >= 1")
    if tail not in ("open", "closed"):
        raise ValueError(f"tail must be 'open' or 'closed', got {tail!r}")
    K, S = instance.K, instance.S
    k_odd, k_norm = kl_tables(instance, D)
    nvar = D * S * K

    def idx(d, i, a):
        return ((d - 1) * S + i) * K + a

    budget = np.zeros((K, nvar + 1))
    for d in range(1, D + 1):
        for i in range(S):
            for a in range(K):
                budget[a, idx(d, i, a)] = d
    total = np.r_[np.ones(nvar), 0.0][None, :]

    alts = [hp for hp in range(K) if hp != h]
    drift = np.zeros((len(alts), nvar + 1))
    for r, hp in enumerate(alts):
        for d in range(1, D + 1):
            for i in range(S):
                drift[r, idx(d, i, h)] = -k_odd[d, i]
                drift[r, idx(d, i, hp)] = -k_norm[d, i]
        drift[r, -1] = 1.0
    if tail == "closed":
        A_eq, b_eq = np.vstack([budget, total]), np.ones(K + 1)
        A_ub, b_ub = drift, np.zeros(len(alts))
    else:
        A_eq, b_eq = total, np.ones(1)
        A_ub, b_ub = np.vstack([drift, budget]), np.r_[np.zeros(len(alts)), np.ones(K)]
    c = np.zeros(nvar + 1)
    c[-1] = -1.0
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=[(0, None)] * nvar + [(None, None)], method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    if res.status == 2:
        raise Infeasible(f"relaxed LP infeasible for D={D}, K={K} ({tail} tail)")
    if res.status != 0:
        raise NumericalFailure(res.message)
    return float(-res.fun)


def rstar_eta_curve(instance: BanditInstance, h: int, D: int, etas, tol: float = 1e-10) -> list[tuple[float, float]]:
    """LP value at each eta; the kernel does not depend on eta and is built once."""
    etas = list(etas)
    if etas != sorted(etas) or any(not (0 < e <= 1) for e in etas):
        raise ValueError("etas must be sorted ascending and lie in (0, 1]")
    mdp = build_truncated_mdp(instance, h, D)
    return [(e, solve_rstar(mdp, e, tol).lp_value) for e in etas]


def lower_bound_expected_tau(r_star: float, epsilon: float) -> float:
    """``d(eps, 1 - eps) / r_star``: floor on the mean stopping time of eps-correct policies."""
    if not (0 < epsilon <= 0.5) or r_star <= 0:
        raise ValueError("need 0 < epsilon <= 1/2 and r_star > 0")
    return markov.binary_relative_entropy(epsilon, 1.0 - epsilon) / r_star


def iid_rstar_grid(d12: float, d21: float, K: int, eta: float, step: float = 1e-4) -> float:
    """Closed-form drift for i.i.d. arms, maximised over a grid on the arm simplex.

    Objective: ``eta/K (d12 + d21) + (1-eta) [lam(h) d12 + min_{h'} lam(h') d21]``
    with ``d12 = D(nu1 || nu2)`` and ``d21 = D(nu2 || nu1)``. For ``K = 3`` the
    full two-dimensional grid is scanned; for larger K the minimum over
    alternatives is maximised by splitting the remaining mass evenly, which
    reduces the scan to the mass on ``h``.
    """
    n = int(round(1.0 / step))
    base = eta / K * (d12 + d21)
    grid = np.arange(n + 1) / n
    if K == 3:
        best = -math.inf
        for k in range(n + 1):
            x = grid[k]
            y = grid[: n - k + 1]
            z = 1.0 - x - y
            val = x * d12 + np.minimum(y, z) * d21
            best = max(best, float(val.max()))
    else:
        best = float(np.max(grid * d12 + (1.0 - grid) / (K - 1) * d21))
    return base + (1.0 - eta) * best
