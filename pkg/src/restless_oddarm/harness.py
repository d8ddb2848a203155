"""Monte-Carlo sweeps over the confidence parameter and hypotheses."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .env import BanditInstance
from .errors import InsufficientData
from .llr import DEFAULT_D_CAP_LLR, PairKLCache
from .markov import binary_relative_entropy
from .policy import DEFAULT_MAX_STEPS, PolicyParams, PolicyTable, TrialRecord, run_fixed_policy, run_trial
from .solver import build_truncated_mdp, occupancy_of_policy

log = logging.getLogger(__name__)

CSV_HEADER = [
    "L", "h", "n_trials", "n_errors", "n_censored", "error_rate", "error_lo", "error_hi",
    "mean_tau", "tau_lo", "tau_hi", "slope", "floor_tau",
]


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass
class CellAggregate:
    """Sufficient statistics of one (L, h) cell; integer sums merge exactly."""

    L: float
    h: int
    n_trials: int = 0
    n_errors: int = 0
    n_censored: int = 0
    n_tau: int = 0
    sum_tau: int = 0
    sum_tau2: int = 0

    def add(self, rec: TrialRecord) -> None:
        self.n_trials += 1
        if rec.censored:
            # counted as an error, kept out of the stopping-time statistics
            self.n_censored += 1
            self.n_errors += 1
            return
        if not rec.correct:
            self.n_errors += 1
        self.n_tau += 1
        self.sum_tau += rec.tau
        self.sum_tau2 += rec.tau * rec.tau

    def merge(self, other: "CellAggregate") -> "CellAggregate":
        if (self.L, self.h) != (other.L, other.h):
            raise ValueError("cannot merge different cells")
        return CellAggregate(
            self.L, self.h,
            self.n_trials + other.n_trials,
            self.n_errors + other.n_errors,
            self.n_censored + other.n_censored,
            self.n_tau + other.n_tau,
            self.sum_tau + other.sum_tau,
            self.sum_tau2 + other.sum_tau2,
        )

    @property
    def error_rate(self) -> float:
        return self.n_errors / self.n_trials

    @property
    def error_ci(self) -> tuple[float, float]:
        return wilson_interval(self.n_errors, self.n_trials)

    @property
    def mean_tau(self) -> float:
        return self.sum_tau / self.n_tau if self.n_tau else math.nan

    @property
    def tau_ci(self) -> tuple[float, float]:
        n = self.n_tau
        if n < 2:
            return (math.nan, math.nan)
        mean = self.mean_tau
        var = max(0.0, (self.sum_tau2 - n * mean * mean) / (n - 1))
        half = stats.t.ppf(0.975, n - 1) * math.sqrt(var / n)
        return mean - half, mean + half

    @property
    def slope(self) -> float:
        return self.mean_tau / math.log(self.L)

    def floor_tau(self, r_star: float) -> float:
        """Lower bound on the mean stopping time at the upper error CI."""
        eps = min(self.error_ci[1], 0.5)
        return binary_relative_entropy(eps, 1.0 - eps) / r_star

    def row(self, r_star: float | None = None) -> list:
        lo, hi = self.error_ci
        tlo, thi = self.tau_ci
        floor = self.floor_tau(r_star) if r_star else math.nan
        return [
            self.L, self.h, self.n_trials, self.n_errors, self.n_censored,
            f"{self.error_rate:.6g}", f"{lo:.6g}", f"{hi:.6g}",
            f"{self.mean_tau:.6g}", f"{tlo:.6g}", f"{thi:.6g}", f"{self.slope:.6g}", f"{floor:.6g}",
        ]


@dataclass
class SweepResult:
    cells: dict[tuple[float, int], CellAggregate]
    records: list[TrialRecord] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def cell(self, L: float, h: int) -> CellAggregate:
        return self.cells[(L, h)]

    def L_values(self) -> list[float]:
        return sorted({L for L, _ in self.cells})

    def pooled(self, L: float) -> CellAggregate:
        """All hypotheses at one L merged into a single cell (h = -1)."""
        out = CellAggregate(L, -1)
        for (l, h), c in sorted(self.cells.items()):
            if l == L:
                out = out.merge(CellAggregate(L, -1, c.n_trials, c.n_errors, c.n_censored, c.n_tau, c.sum_tau, c.sum_tau2))
        return out

    def to_csv(self, r_star: float | None = None, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for key in sorted(self.cells):
            w.writerow(self.cells[key].row(r_star))
        return buf.getvalue()

    def write_trial_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def aggregate(records: list[TrialRecord], L_of: dict[int, float]) -> dict[tuple[float, int], CellAggregate]:
    """Build cell aggregates from records; ``L_of`` maps param index to L."""
    cells: dict = {}
    for rec in records:
        L = L_of[rec.key[0]]
        cell = cells.setdefault((L, rec.hypothesis), CellAggregate(L, rec.hypothesis))
        cell.add(rec)
    return cells


def _run_chunk(args) -> tuple[list[TrialRecord], list[dict]]:
    instance, tables, jobs, master_seed, max_steps, warmup, d_cap_llr = args
    cache = PairKLCache(instance, d_cap_llr)
    out, failures = [], []
    for p_idx, params, h, k in jobs:
        key = (p_idx, h, k)
        try:
            out.append(run_trial(instance, h, params, tables, master_seed, max_steps, key, cache, warmup))
        except Exception as exc:  # recorded, never aborts the sweep
            failures.append({"key": list(key), "error": repr(exc)})
    return out, failures


def run_sweep(
    instance: BanditInstance,
    params_grid: list[PolicyParams],
    tables: list[PolicyTable],
    trials_per_cell: int,
    parallelism: int = 1,
    master_seed: int = 0,
    hypotheses: list[int] | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    warmup: str = "forced",
    d_cap_llr: int = DEFAULT_D_CAP_LLR,
    keep_records: bool = True,
) -> SweepResult:
    """Run ``trials_per_cell`` trials for every (params, hypothesis) cell.

    Trial ``k`` of cell (``p``, ``h``) draws all randomness from the key
    ``(master_seed, p, h, k)``, so results do not depend on ``parallelism``.
    """
    hypotheses = list(range(instance.K)) if hypotheses is None else list(hypotheses)
    jobs = [(p, params, h, k) for p, params in enumerate(params_grid) for h in hypotheses for k in range(trials_per_cell)]
    n_chunks = max(1, parallelism) * 4
    chunks = [jobs[i::n_chunks] for i in range(n_chunks)]
    payload = [(instance, tables, c, master_seed, max_steps, warmup, d_cap_llr) for c in chunks if c]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_chunk, payload))
    else:
        results = [_run_chunk(p) for p in payload]
    records = sorted((r for rs, _ in results for r in rs), key=lambda r: r.key)
    failures = [f for _, fs in results for f in fs]
    for f in failures:
        log.warning("trial %s failed: %s", f["key"], f["error"])
    cells = aggregate(records, {p: params.L for p, params in enumerate(params_grid)})
    return SweepResult(cells, records if keep_records else [], failures)


@dataclass
class DriftReport:
    h: int
    horizon: int
    empirical: dict[int, float]
    predicted: dict[int, float]

    @property
    def relative_error(self) -> dict[int, float]:
        out = {}
        for hp, pred in self.predicted.items():
            emp = self.empirical[hp]
            out[hp] = 0.0 if pred == 0 and emp == 0 else abs(emp - pred) / abs(pred) if pred else math.inf
        return out

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "horizon": self.horizon,
            "empirical": {str(k): v for k, v in self.empirical.items()},
            "predicted": {str(k): v for k, v in self.predicted.items()},
            "relative_error": {str(k): v for k, v in self.relative_error.items()},
        }


def predicted_drift(instance: BanditInstance, h: int, table: PolicyTable, D: int | None = None) -> dict[int, float]:
    """Drift of Z_hh'(n)/n under a fixed SRS table, from the truncated chain."""
    D = D or table.d_cap
    mdp = build_truncated_mdp(instance, h, D)
    nu = occupancy_of_policy(mdp, table.as_array(mdp.states), instance.eta)
    return {hp: float(np.sum(nu * mdp.rewards[hp])) for hp in mdp.alternatives()}


def drift_check(
    instance: BanditInstance,
    h: int,
    table: PolicyTable,
    horizon: int,
    seed: int,
    D: int | None = None,
) -> DriftReport:
    """Compare simulated Z_hh'(n)/n with the stationary prediction for every h'."""
    llr, _ = run_fixed_policy(instance, h, table, horizon, seed)
    n = llr.n
    empirical = {hp: float(llr.z[h, hp] / n) for hp in range(instance.K) if hp != h}
    return DriftReport(h, horizon, empirical, predicted_drift(instance, h, table, D))


@dataclass
class SlopeReport:
    slope: float
    intercept: float
    band: tuple[float, float]
    L_values: list[float]
    mean_tau: list[float]
    floors: list[float]

    @property
    def in_band(self) -> bool:
        return self.band[0] <= self.slope <= self.band[1]

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "band": list(self.band),
            "in_band": self.in_band,
            "L": self.L_values,
            "mean_tau": self.mean_tau,
            "floor_tau": self.floors,
        }


def slope_report(sweep: SweepResult, r_star: float, delta: float, tol: float = 0.25, h: int | None = None) -> SlopeReport:
    """Least-squares slope of mean stopping time against log L.

    The band is ``[(1 - tol) / r_star, (1 + tol)(1 + delta) / r_star]``.
    ``h=None`` pools all hypotheses at each L.
    """
    Ls = sweep.L_values()
    if len(Ls) < 3 or math.log10(Ls[-1] / Ls[0]) < 2 - 1e-9:
        raise InsufficientData("need at least 3 values of L spanning 2 decades")
    cells = [sweep.pooled(L) if h is None else sweep.cell(L, h) for L in Ls]
    x = np.log(Ls)
    y = np.array([c.mean_tau for c in cells])
    slope, intercept = np.polyfit(x, y, 1)
    band = ((1 - tol) / r_star, (1 + tol) * (1 + delta) / r_star)
    floors = [c.floor_tau(r_star) for c in cells]
    return SlopeReport(float(slope), float(intercept), band, Ls, y.tolist(), floors)
