"""Command-line entry point: ``adwords-pd {gen,solve-offline,run,certify,bench}``.

Exit codes: 0 success, 1 operational error, 2 acceptance threshold violated
(only with ``--assert``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, gen, lp, model, online, plp

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel trials")
    p.add_argument("--out-dir", type=Path, default=None, help="directory for output files")
    p.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 2 when an acceptance threshold is violated")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=bench.FAMILIES, required=True)
    p.add_argument("--eps-b", type=float, help="bid granularity (worst-case families)")
    p.add_argument("--n-bidders", type=int)
    p.add_argument("--n", type=int, help="agents (iid)")
    p.add_argument("--m", type=int, help="resources (iid)")
    p.add_argument("--types", type=int, dest="n_types", help="type pool size")
    p.add_argument("--q", type=int, help="options per agent (iid)")
    p.add_argument("--capacity-scale", type=float)
    p.add_argument("--n-queries", type=int)
    p.add_argument("--max-bid-ratio", type=float)


def _spec(args) -> bench.GeneratorSpec:
    keys = ["eps_b", "n_bidders", "n", "m", "n_types", "q", "capacity_scale", "n_queries", "max_bid_ratio"]
    return bench.GeneratorSpec(args.family, {k: getattr(args, k) for k in keys if getattr(args, k) is not None})


def _training_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--warmup", choices=plp.WARMUP_POLICIES, default="skip")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="adwords-pd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate an instance file")
    _family_args(p)
    p.add_argument("-o", "--output", type=Path, help="instance path (default: <out-dir>/instance.json)")

    p = sub.add_parser("solve-offline", parents=[common], help="solve the offline LP of an instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--no-aggregate", action="store_true", help="one variable block per arrival")
    p.add_argument("--dump-lp", type=Path, help="write the LP in free MPS format")

    p = sub.add_parser("run", parents=[common], help="run an online policy on an instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--policy", choices=bench.BENCH_POLICIES, required=True)
    p.add_argument("--truncate", action="store_true", help="earn min(bid, remaining budget)")
    _training_args(p)

    p = sub.add_parser("certify", parents=[common], help="certify a recorded greedy/msvv trace")
    p.add_argument("instance", type=Path)
    p.add_argument("trace", type=Path)

    p = sub.add_parser("bench", parents=[common], help="batch trials with CSV/JSON reports")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path)
    src.add_argument("--family", choices=bench.FAMILIES)
    for a in ("--eps-b", "--capacity-scale", "--max-bid-ratio"):
        p.add_argument(a, type=float)
    for a in ("--n-bidders", "--n", "--m", "--q", "--n-queries"):
        p.add_argument(a, type=int)
    p.add_argument("--types", type=int, dest="n_types")
    p.add_argument("--policy", choices=bench.BENCH_POLICIES, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--sweep", nargs="+", metavar=("PARAM", "VALUE"),
                   help="one trial per value of a generator parameter, e.g. --sweep n_bidders 2 5 10")
    _training_args(p)
    return ap


def _emit(doc: dict, out_dir: Path | None, name: str) -> None:
    text = json.dumps(doc, indent=2, default=float)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text, encoding="utf-8")
    print(text)


def cmd_gen(args) -> int:
    inst = _spec(args).build(args.seed)
    path = args.output or (args.out_dir or Path(".")) / "instance.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(inst, path)
    print(path)
    return EXIT_OK


def cmd_solve_offline(args) -> int:
    inst = model.load(args.instance)
    agg = not args.no_aggregate
    if isinstance(inst, model.AdwordsInstance):
        lpo = lp.build_offline_adwords_lp(inst, aggregate=agg)
    else:
        lpo = lp.build_offline_plp(inst, aggregate=agg)
    if args.dump_lp:
        lp.write_mps(lpo, args.dump_lp)
    sol = lp.solve(lpo)
    doc = {"status": sol.status.value, "objective": sol.objective, "dual_objective": sol.dual_objective,
           "iterations": sol.iterations, "primal_residual": sol.primal_residual,
           "dual_residual": sol.dual_residual}
    if sol.status is lp.LpStatus.OPTIMAL:
        doc["alpha"] = sol.alpha(lpo)
        rep = lp.check_slackness(lpo, sol)
        doc["slackness"] = {"empty": rep.empty, "max_violation": rep.max_violation,
                            "positive_dual_set": rep.positive_dual_set}
    _emit(doc, args.out_dir, "offline.json")
    if sol.status is not lp.LpStatus.OPTIMAL:
        return EXIT_ERROR
    return EXIT_ASSERT if args.assert_ and not doc["slackness"]["empty"] else EXIT_OK


def cmd_run(args) -> int:
    inst = model.load(args.instance)
    if args.policy == "training":
        if isinstance(inst, model.AdwordsInstance):
            inst = model.to_plp(inst)
        _, rep = plp.run_training_based(inst, plp.TrainingConfig(args.epsilon, args.warmup, args.seed))
        _emit(rep.as_dict(), args.out_dir, "training_report.json")
        bad = rep.ratio_excluding_sample < 1 - 4 * args.epsilon or not rep.capacity_safe
        return EXIT_ASSERT if args.assert_ and bad else EXIT_OK
    if not isinstance(inst, model.AdwordsInstance):
        raise ValueError(f"policy {args.policy!r} needs an AdWords instance")
    trace = online.run(inst, args.policy, truncate=args.truncate)
    out_dir = args.out_dir or Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"trace_{args.policy}.jsonl"
    online.write_trace(trace, inst, path)
    print(json.dumps({"trace": str(path), "primal": trace.primal, "dual": trace.dual}))
    return EXIT_OK


def cmd_certify(args) -> int:
    inst = model.load(args.instance)
    trace = online.load_trace(args.trace, inst)
    cert = online.certify(trace, inst)
    _emit(cert.as_dict(), args.out_dir, "certificate.json")
    return EXIT_ASSERT if args.assert_ and not (cert.dual_feasible and cert.ratio_ok) else EXIT_OK


def cmd_bench(args) -> int:
    if args.sweep:
        if not args.family:
            raise ValueError("--sweep needs --family")
        param, raw = args.sweep[0], args.sweep[1:]
        values = [float(v) if "." in v else int(v) for v in raw]
        fixed = _spec(args).params
        fixed.pop(param, None)
        report = bench.run_sweep(args.family, param, values, args.policy, args.seed, args.jobs,
                                 args.epsilon, args.warmup, **fixed)
        if args.out_dir:
            bench.write_report(report, args.out_dir, "sweep")
            bench.emit_plot_data(report, args.out_dir / f"ratio_vs_{param}.csv")
    else:
        source = args.instance if args.instance else _spec(args)
        report = bench.run_experiment(source, args.policy, args.trials, args.seed, args.jobs,
                                      args.out_dir, args.epsilon, args.warmup)
    summary = {k: v for k, v in report.summary.items() if k != "training_reports"}
    print(json.dumps(summary, indent=2, default=float))
    if summary["n_errors"]:
        return EXIT_ERROR
    if args.assert_ and summary["threshold_failures"]:
        return EXIT_ASSERT
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve-offline": cmd_solve_offline, "run": cmd_run,
            "certify": cmd_certify, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, lp.LpError, model.InstanceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
