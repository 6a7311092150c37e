"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 failed check, 4 infeasible instance.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds, harness
from . import objectives as obj_mod
from .geometry import grid_partition
from .optimizers import OptimizerSpec
from .simulation import NoiseModel
from . import verification as ver

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_INFEASIBLE = 0, 2, 3, 4


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise harness.ConfigError(f"cannot read {path}: {exc}") from exc


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# commands -------------------------------------------------------------------

def cmd_run(args) -> int:
    raw = _load_json(args.config)
    for key, val in (("replications", args.reps), ("seed", args.seed), ("workers", args.workers)):
        if val is not None:
            raw[key] = val
    if args.timing:
        raw["timing"] = True
    if args.raw:
        raw["raw"] = True
    config = harness.ExperimentConfig.from_dict(raw)
    rows = harness.run_and_emit(config, args.out)
    audit = sum(r.audit_failures for r in rows)
    print(f"wrote {len(rows)} rows to {Path(args.out or config.output_dir) / 'results.csv'}")
    return EXIT_CHECK if audit else EXIT_OK


def cmd_report(args) -> int:
    for p in harness.report(args.input):
        print(p)
    return EXIT_OK


def _bound_spec(args) -> bounds.BoundSpec:
    return bounds.BoundSpec.from_shape(args.d, args.alpha, args.beta, b_poly=args.b_poly,
                                       b_exp_scale=args.b_exp_scale, b_exp_rate=args.b_exp_rate)


def cmd_bounds(args) -> int:
    spec = _bound_spec(args)
    if args.action == "eval":
        var, det = bounds.bound_terms(spec, args.n, args.sigma2)
        out = {"regime": spec.regime, "D": spec.D, "variance_term": var,
               "deterministic_term": det, "bound": bounds.lower_bound(spec, args.n, args.sigma2)}
    else:
        out = {"regime": spec.regime, "D": spec.D, "sigma2": args.sigma2,
               "switching_budget": bounds.switching_budget(spec, args.sigma2)}
    _write_json(out, None)
    return EXIT_OK


def _pair_from_scenario(sc: dict):
    fam = harness.build_family(sc["family"])
    i = harness.member_index(fam, sc.get("member", "center"))
    noise = NoiseModel.from_variance(float(sc.get("sigma2", sc["family"].get("sigma2", 1.0))))
    # problem 1 is the shared benchmark, problem 2 the member
    return ver.ProblemPair(fam.benchmark_of(i), fam.member(i), noise, fam.region(i))


def cmd_verify(args) -> int:
    sc = _load_json(args.scenario)
    alg = OptimizerSpec(sc.get("optimizer", {"kind": "uniform"})["kind"],
                        dict(sc.get("optimizer", {}).get("params", {})))
    reps, seed, n = int(sc.get("reps", 10_000)), int(sc.get("seed", 0)), int(sc.get("n", 200))
    if args.check == "transport":
        pair = _pair_from_scenario(sc)
        rep = ver.transport_check(alg, pair, pair.difference_region, reps, n, seed)
    elif args.check == "hitting":
        pair = _pair_from_scenario(sc)
        rep = ver.hitting_invariance_check(alg, pair, reps, n, seed)
    else:
        problem = harness.build_objective(sc["objective"])
        cells = grid_partition(problem.dim, int(sc["psi"]))
        rep = ver.pigeonhole_check(alg, problem, cells, int(sc.get("n2", n)), reps, seed, n,
                                   NoiseModel.from_variance(float(sc.get("sigma2", 0.0))))
    _write_json(rep.to_dict(), args.out)
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_instances(args) -> int:
    spec = _load_json(args.spec)
    fam = harness.build_family(spec)
    n_points = int(spec.get("points", 100_000))
    limit = int(spec.get("max_members", 16))
    picks = np.unique(np.linspace(0, len(fam) - 1, min(limit, len(fam))).round().astype(int))
    env = fam.member(0).envelope
    report = {"family": fam.meta, "members_checked": picks.tolist(), "envelope": [], "coherence": []}
    bad = False
    for i in picks:
        m = fam.member(int(i))
        er = obj_mod.envelope_check(m, env, n_points)
        region = fam.region(int(i))
        X = obj_mod.sample_plan(m.dim, n_points)
        X = X[~region.contains(X)]
        bench = fam.benchmark_of(int(i))
        dev = float(np.max(np.abs(m(X) - bench(X)), initial=0.0))
        peak_ok = abs(m(m.x_star) - m.y_star) <= 1e-12 and bool(np.allclose(m.x_star, region.center))
        report["envelope"].append({"member": int(i), "violations": er.violations})
        report["coherence"].append({"member": int(i), "max_outside_dev": dev, "maximizer_ok": peak_ok})
        bad |= (not er.ok) or dev > 1e-12 or not peak_ok
    report["passed"] = not bad
    _write_json(report, args.out)
    return EXIT_CHECK if bad else EXIT_OK


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("--config", required=True)
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    run.add_argument("--raw", action="store_true", help="also write per-replication gaps")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="rebuild derived tables from results.csv")
    rep.add_argument("--in", dest="input", required=True)
    rep.set_defaults(func=cmd_report)

    b = sub.add_parser("bounds", help="evaluate lower bounds")
    b.add_argument("action", choices=["eval", "switch"])
    b.add_argument("--d", type=int, required=True)
    b.add_argument("--alpha", type=float, required=True)
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--n", type=float, default=1.0)
    b.add_argument("--sigma2", type=float, required=True)
    b.add_argument("--b-poly", type=float, default=1.0)
    b.add_argument("--b-exp-scale", type=float, default=1.0)
    b.add_argument("--b-exp-rate", type=float, default=1.0)
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="Monte Carlo probability checks")
    v.add_argument("check", choices=["transport", "hitting", "pigeonhole"])
    v.add_argument("--scenario", required=True)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    ins = sub.add_parser("instances", help="certify an instance family")
    ins.add_argument("action", choices=["check"])
    ins.add_argument("--spec", required=True)
    ins.add_argument("--out")
    ins.set_defaults(func=cmd_instances)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except obj_mod.InfeasibleInstance as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (harness.ConfigError, KeyError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
