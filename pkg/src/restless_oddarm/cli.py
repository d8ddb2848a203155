"""Command-line front end: validate | solve | simulate | sweep | drift."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, diagnose, load_config
from .errors import ConfigError, InstanceError, InsufficientData, OddArmError
from .harness import drift_check, run_sweep, slope_report
from .policy import PolicyParams, PolicyTable, uniform_policy
from .solver import build_truncated_mdp, lower_bound_expected_tau, rstar_eta_curve, solve_r1star, solve_rstar

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("restless_oddarm")


class ValidationFailure(Exception):
    pass


def _meta(cfg: RunConfig) -> dict:
    return {"config_sha256": cfg.digest, "version": __version__}


def _header(cfg: RunConfig) -> str:
    return f"config_sha256={cfg.digest} version={__version__}"


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1) + "\n")


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        raise ValidationFailure(str(exc)) from None
    if args.seed is not None:
        cfg.sweep.master_seed = args.seed
    if getattr(args, "trials", None) is not None:
        cfg.sweep.trials = args.trials
    if getattr(args, "parallelism", None) is not None:
        cfg.sweep.parallelism = args.parallelism
    if getattr(args, "max_steps", None) is not None:
        cfg.sweep.max_steps = args.max_steps
    try:
        instance = cfg.instance.build()
    except (InstanceError, ConfigError) as exc:
        raise ValidationFailure(str(exc)) from None
    return cfg, instance


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"FAIL config: {exc}")
        return EXIT_INVALID
    diags = diagnose(cfg.instance)
    for d in diags:
        print(f"{'ok  ' if d.ok else 'FAIL'} {d.check}: {d.detail}")
    failed = [d for d in diags if not d.ok]
    if failed:
        print(f"invalid instance: first violated assumption is '{failed[0].check}'")
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def _solve_all(cfg: RunConfig, instance, out: Path | None):
    """Solve for every hypothesis; optionally write result and table files."""
    s = cfg.solver
    results = []
    for h in range(instance.K):
        mdp = build_truncated_mdp(instance, h, s.D)
        res = solve_rstar(mdp, instance.eta, s.tol, method=s.method)
        results.append(res)
        if out is not None:
            table_name = f"policy_h{h}.json"
            res.policy.meta.update(_meta(cfg))
            res.policy.save(out / table_name)
            res.save(out / f"solver_h{h}.json", policy_file=table_name, meta=_meta(cfg))
    return results


def cmd_solve(args) -> int:
    cfg, instance = _load(args)
    out = _out_dir(cfg, args)
    results = _solve_all(cfg, instance, out)
    r1 = solve_r1star(instance, 0, cfg.solver.D)
    summary = {
        "meta": _meta(cfg),
        "D": cfg.solver.D,
        "eta": instance.eta,
        "r_star": {str(r.h): r.r_star for r in results},
        "lp_value": {str(r.h): r.lp_value for r in results},
        "r1_star": r1,
        "certified": {str(r.h): r.certified(cfg.solver.delta) for r in results},
    }
    for r in results:
        cert = ", ".join(f"h'={k}: {v:.6f}" for k, v in sorted(r.certificate.items()))
        print(f"h={r.h}  r_star={r.r_star:.8f}  lp={r.lp_value:.8f}  certificate [{cert}]")
    flag = "" if r1 >= min(r.r_star for r in results) - 1e-9 else "  VIOLATION: R1* < r_star"
    print(f"R1* (D={cfg.solver.D}) = {r1:.8f}{flag}")
    if cfg.solver.eta_grid:
        curve = rstar_eta_curve(instance, 0, cfg.solver.D, sorted(cfg.solver.eta_grid), cfg.solver.tol)
        eta0 = solve_rstar(build_truncated_mdp(instance, 0, cfg.solver.D), 0.0, cfg.solver.tol).lp_value
        summary["eta_curve"] = [[e, r] for e, r in curve]
        summary["r_star_eta0"] = eta0
        for e, r in curve:
            print(f"eta={e:<6g} r_star={r:.8f}")
        print(f"eta=0 (floor dropped) r_star={eta0:.8f}")
    _write_json(out / "solve_summary.json", summary)
    return EXIT_OK


def _tables(cfg: RunConfig, instance, out: Path, auto_solve: bool) -> list[PolicyTable]:
    paths = [out / f"policy_h{h}.json" for h in range(instance.K)]
    missing = [p for p in paths if not p.exists()]
    if missing:
        if not auto_solve:
            raise OddArmError(
                f"missing policy table {missing[0]}; run 'restless-oddarm solve --config ...' first "
                "or pass --auto-solve"
            )
        return [r.policy for r in _solve_all(cfg, instance, out)]
    tables = [PolicyTable.load(p) for p in paths]
    for t in tables:
        if t.K != instance.K or t.d_cap != cfg.solver.D:
            raise OddArmError(f"policy tables in {out} were built for K={t.K}, D={t.d_cap}; re-run solve")
    return tables


def _r_star(out: Path, instance, cfg) -> float | None:
    path = out / "solver_h0.json"
    if path.exists():
        return json.loads(path.read_text())["r_star"]
    return None


def _run(args, L_values) -> int:
    cfg, instance = _load(args)
    out = _out_dir(cfg, args)
    tables = _tables(cfg, instance, out, args.auto_solve)
    r_star = _r_star(out, instance, cfg)
    sw = cfg.sweep
    grid = [PolicyParams(float(L), cfg.solver.delta, instance.K) for L in L_values]
    result = run_sweep(
        instance, grid, tables, sw.trials, sw.parallelism, sw.master_seed, sw.hypotheses,
        sw.max_steps, sw.warmup, cfg.solver.d_cap_llr,
    )
    name = args.command
    (out / f"{name}.csv").write_text(result.to_csv(r_star, _header(cfg)))
    if sw.log_trials or args.verbose or name == "simulate":
        result.write_trial_log(out / f"{name}_trials.jsonl")
    print(f"{'L':>10} {'trials':>7} {'errors':>7} {'err_hi':>8} {'mean_tau':>9} {'floor':>8}")
    for L in result.L_values():
        c = result.pooled(L)
        floor = c.floor_tau(r_star) if r_star else float("nan")
        print(f"{L:>10g} {c.n_trials:>7d} {c.n_errors:>7d} {c.error_ci[1]:>8.4f} {c.mean_tau:>9.3f} {floor:>8.3f}")
    summary = {"meta": _meta(cfg), "failures": result.failures}
    if r_star:
        try:
            rep = slope_report(result, r_star, cfg.solver.delta)
            verdict = "inside" if rep.in_band else "OUTSIDE"
            print(f"slope={rep.slope:.4f} band=[{rep.band[0]:.4f}, {rep.band[1]:.4f}] -> {verdict} band")
            summary["slope"] = rep.to_dict()
        except InsufficientData as exc:
            print(f"slope: {exc}")
        summary["floor_tau"] = {
            str(L): lower_bound_expected_tau(r_star, min(result.pooled(L).error_ci[1], 0.5)) for L in result.L_values()
        }
    _write_json(out / f"{name}_summary.json", summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    return _run(args, [cfg.sweep.L[0]])


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    return _run(args, cfg.sweep.L)


def cmd_drift(args) -> int:
    cfg, instance = _load(args)
    out = _out_dir(cfg, args)
    h = args.hypothesis
    if args.policy == "uniform":
        table = uniform_policy(instance.K, cfg.solver.D)
    else:
        table = _tables(cfg, instance, out, args.auto_solve)[h]
    rep = drift_check(instance, h, table, cfg.sweep.drift_horizon, cfg.sweep.master_seed, cfg.solver.D)
    for hp in sorted(rep.predicted):
        print(
            f"h'={hp}  empirical={rep.empirical[hp]:.6f}  predicted={rep.predicted[hp]:.6f}  "
            f"rel_err={rep.relative_error[hp]:.4f}"
        )
    _write_json(out / f"drift_h{h}_{args.policy}.json", {"meta": _meta(cfg), **rep.to_dict()})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restless-oddarm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep_flags=False):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="override sweep.master_seed")
        p.add_argument("-v", "--verbose", action="store_true")
        if sweep_flags:
            p.add_argument("--trials", type=int)
            p.add_argument("--parallelism", type=int)
            p.add_argument("--max-steps", type=int, dest="max_steps")
            p.add_argument("--auto-solve", action="store_true", help="solve for missing policy tables")

    common(sub.add_parser("validate", help="check the instance assumptions"))
    common(sub.add_parser("solve", help="solve the occupancy LP for every hypothesis"))
    common(sub.add_parser("simulate", help="run trials at the first L value"), True)
    common(sub.add_parser("sweep", help="run trials at every L value"), True)
    p = sub.add_parser("drift", help="compare simulated and predicted LLR drift")
    common(p, True)
    p.add_argument("--hypothesis", type=int, default=0)
    p.add_argument("--policy", choices=["uniform", "solved"], default="uniform")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "drift": cmd_drift,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationFailure, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OddArmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
