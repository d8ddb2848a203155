"""Run configuration: one JSON file describing instance, solver and sweep.

Example::

    {
      "instance": {"K": 3, "P1": [[0.9, 0.1], [0.2, 0.8]],
                   "P2": [[0.5, 0.5], [0.5, 0.5]], "eta": 0.1},
      "solver": {"D": 8, "delta": 0.2},
      "sweep": {"L": [100, 1000, 10000], "trials": 1000, "master_seed": 0},
      "output_dir": "out"
    }

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import markov
from .env import BanditInstance
from .errors import ConfigError, DomainError, NotErgodic


@dataclass
class InstanceSpec:
    K: int
    P1: list
    P2: list
    eta: float
    init_law: list | None = None
    S: int | None = None

    def build(self) -> BanditInstance:
        if self.S is not None and np.shape(self.P1)[0] != self.S:
            raise ConfigError(f"S={self.S} does not match P1 with {np.shape(self.P1)[0]} rows")
        return BanditInstance(self.K, self.P1, self.P2, self.eta, self.init_law)


@dataclass
class SolverSpec:
    D: int = 8
    tol: float = 1e-10
    delta: float = 0.2
    eta_grid: list = field(default_factory=list)
    d_cap_llr: int = 64
    method: str = "highs"


@dataclass
class SweepSpec:
    L: list = field(default_factory=lambda: [100.0])
    trials: int = 1000
    parallelism: int = 1
    master_seed: int = 0
    max_steps: int = 10**7
    warmup: str = "forced"
    hypotheses: list | None = None
    log_trials: bool = False
    drift_horizon: int = 100_000


@dataclass
class RunConfig:
    instance: InstanceSpec
    solver: SolverSpec
    sweep: SweepSpec
    output_dir: str = "out"
    digest: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("digest")
        return d


def _section(cls, raw, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def parse_config(raw: dict, digest: str = "") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"instance", "solver", "sweep", "output_dir"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "instance" not in raw:
        raise ConfigError("missing 'instance' section")
    cfg = RunConfig(
        _section(InstanceSpec, raw["instance"], "instance"),
        _section(SolverSpec, raw.get("solver", {}), "solver"),
        _section(SweepSpec, raw.get("sweep", {}), "sweep"),
        raw.get("output_dir", "out"),
        digest,
    )
    if cfg.sweep.warmup not in ("forced", "resample"):
        raise ConfigError("sweep.warmup must be 'forced' or 'resample'")
    if cfg.solver.method not in ("highs", "subgradient"):
        raise ConfigError("solver.method must be 'highs' or 'subgradient'")
    if cfg.solver.d_cap_llr < cfg.solver.D:
        raise ConfigError("solver.d_cap_llr must be >= solver.D")
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_bytes()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, hashlib.sha256(text).hexdigest())


@dataclass
class Diagnostic:
    check: str
    ok: bool
    detail: str


def diagnose(spec: InstanceSpec) -> list[Diagnostic]:
    """Check every modelling assumption independently, in reporting order."""
    out = []
    mats = {}
    ok_stoch = True
    for name in ("P1", "P2"):
        try:
            mats[name] = markov.as_transition_matrix(getattr(spec, name))
        except (DomainError, ValueError) as exc:
            ok_stoch = False
            out.append(Diagnostic("stochasticity", False, f"{name}: {exc}"))
    if ok_stoch:
        if mats["P1"].shape != mats["P2"].shape:
            return [Diagnostic("stochasticity", False, "P1 and P2 have different sizes")]
        out.append(Diagnostic("stochasticity", True, "P1 and P2 are row-stochastic"))
    else:
        return out
    P1, P2 = mats["P1"], mats["P2"]
    bad = np.argwhere((P1 > 0) != (P2 > 0))
    if bad.size:
        i, j = bad[0]
        out.append(Diagnostic("support", False, f"P1({j}|{i})={P1[i, j]} but P2({j}|{i})={P2[i, j]}"))
    else:
        out.append(Diagnostic("support", True, "P1 and P2 share the same zero pattern"))
    try:
        m1, m2 = markov.mixing_exponent(P1), markov.mixing_exponent(P2)
        out.append(Diagnostic("ergodicity", True, f"mixing exponent M={max(m1, m2)} (P1: {m1}, P2: {m2})"))
    except NotErgodic as exc:
        out.append(Diagnostic("ergodicity", False, str(exc)))
    if np.max(np.abs(P1 - P2)) <= 1e-12:
        out.append(Diagnostic("distinct", False, "P1 equals P2"))
    else:
        out.append(Diagnostic("distinct", True, "P1 differs from P2"))
    out.append(Diagnostic("arms", spec.K >= 3, f"K={spec.K}"))
    out.append(Diagnostic("eta", 0.0 <= spec.eta <= 1.0, f"eta={spec.eta}"))
    if spec.S is not None:
        out.append(Diagnostic("states", spec.S == P1.shape[0], f"S={spec.S}, matrices have {P1.shape[0]} states"))
    if spec.init_law is not None:
        try:
            law = markov.as_distribution(spec.init_law)
            out.append(Diagnostic("init_law", law.shape == (P1.shape[0],), f"{law.tolist()}"))
        except (DomainError, ValueError) as exc:
            out.append(Diagnostic("init_law", False, str(exc)))
    return out
