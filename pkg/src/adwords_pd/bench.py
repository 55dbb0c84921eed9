"""Experiment harness: generate -> solve offline -> run online -> certify -> report.

Trials are independent; trial ``i`` uses seed ``base_seed + i``. Results are
written as one CSV row per trial plus a JSON summary.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import gen, lp, model, online, plp

log = logging.getLogger(__name__)

FAMILIES = ("greedy-worst", "msvv-worst", "iid", "random")
BENCH_POLICIES = ("greedy", "msvv", "training")

COLUMNS = [
    "trial", "seed", "family", "policy", "param", "opt", "value", "ratio",
    "small_bid_ratio", "dual_feasible", "ratio_ok", "certified_ratio", "theorem_bound",
    "ratio_including_sample", "bad_sample", "conditions_hold", "capacity_safe", "error",
]

FAMILY_DEFAULTS: dict[str, dict[str, Any]] = {
    "greedy-worst": {"eps_b": 0.01},
    "msvv-worst": {"n_bidders": 50, "eps_b": 0.01},
    "iid": {"n": 100_000, "m": 2, "n_types": 20, "q": 5, "capacity_scale": 0.4},
    "random": {"n_bidders": 4, "n_queries": 200, "n_types": 12, "max_bid_ratio": 0.02},
}


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict = field(default_factory=dict)

    def build(self, seed: int):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        p = {**FAMILY_DEFAULTS[self.family], **self.params}
        if self.family == "greedy-worst":
            return gen.gen_greedy_worstcase(p["eps_b"])
        if self.family == "msvv-worst":
            return gen.gen_msvv_worstcase(int(p["n_bidders"]), p["eps_b"])
        if self.family == "iid":
            return gen.gen_iid(seed, int(p["n"]), int(p["m"]), int(p["n_types"]), int(p["q"]),
                               p["capacity_scale"])
        return gen.gen_random_adwords(seed, int(p["n_bidders"]), int(p["n_queries"]),
                                      int(p["n_types"]), p["max_bid_ratio"])


@dataclass
class ExperimentReport:
    rows: list[dict]
    summary: dict


def _adwords_trial(inst: model.AdwordsInstance, policy: str, row: dict) -> None:
    lpo = lp.build_offline_adwords_lp(inst, aggregate=True)
    opt = lp.solve(lpo).require_optimal().objective
    trace = online.run(inst, policy)
    cert = online.certify(trace, inst)
    row.update(opt=opt, value=trace.primal, ratio=trace.primal / opt if opt > 0 else 1.0,
               small_bid_ratio=inst.small_bid_ratio, dual_feasible=cert.dual_feasible,
               ratio_ok=cert.ratio_ok, certified_ratio=cert.certified_ratio,
               theorem_bound=cert.theorem_bound)


def _training_trial(inst: model.PlpInstance, cfg: plp.TrainingConfig, row: dict) -> dict:
    _, rep = plp.run_training_based(inst, cfg)
    row.update(opt=rep.opt, value=rep.value_excluding_sample, ratio=rep.ratio_excluding_sample,
               ratio_including_sample=rep.ratio_including_sample, bad_sample=rep.badness.is_bad,
               conditions_hold=rep.conditions.holds, capacity_safe=rep.capacity_safe,
               dual_feasible=rep.dual_feasible, theorem_bound=1 - 4 * cfg.epsilon)
    return rep.as_dict()


def run_trial(task: dict) -> dict:
    """Run one trial; failures are recorded in the row, never raised."""
    row = {c: "" for c in COLUMNS}
    row.update(trial=task["trial"], seed=task["seed"], policy=task["policy"],
               family=task.get("family", "file"), param=task.get("param", ""))
    try:
        if "path" in task:
            inst = model.load(task["path"])
        else:
            inst = GeneratorSpec(task["family"], task["params"]).build(task["seed"])
        policy = task["policy"]
        if policy == "training":
            if isinstance(inst, model.AdwordsInstance):
                inst = model.to_plp(inst)
            cfg = plp.TrainingConfig(task["epsilon"], task["warmup"], task["seed"])
            row["_training_report"] = _training_trial(inst, cfg, row)
        else:
            if not isinstance(inst, model.AdwordsInstance):
                raise ValueError(f"policy {policy!r} needs an AdWords instance")
            _adwords_trial(inst, policy, row)
    except Exception as exc:  # noqa: BLE001 - recorded per trial
        log.exception("trial %s failed", task["trial"])
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def summarize(rows: list[dict]) -> dict:
    ok = [r for r in rows if not r.get("error")]
    ratios = [float(r["ratio"]) for r in ok if r.get("ratio") not in ("", None)]
    bad = [r["bad_sample"] for r in ok if r.get("bad_sample") not in ("", None)]
    out = {
        "n_trials": len(rows),
        "n_errors": len(rows) - len(ok),
        "mean_ratio": statistics.fmean(ratios) if ratios else math.nan,
        "min_ratio": min(ratios) if ratios else math.nan,
        "max_ratio": max(ratios) if ratios else math.nan,
        "ratios_in_range": all(0 <= r <= 1 + 1e-6 for r in ratios),
    }
    if bad:
        out["bad_sample_frequency"] = sum(bool(b) for b in bad) / len(bad)
    return out


def threshold_failures(rows: list[dict], epsilon: float = 0.1) -> list[str]:
    """Acceptance thresholds applied in ``--assert`` mode."""
    fails = []
    for r in rows:
        if r.get("error"):
            continue
        sbr = float(r.get("small_bid_ratio") or 0.0)
        if r["policy"] == "greedy" and r["ratio"] < 0.5 - 10 * sbr - 1e-9:
            fails.append(f"trial {r['trial']}: greedy ratio {r['ratio']:.6f} < 1/2 - 10*{sbr:g}")
        if r["policy"] == "msvv" and r["ratio"] < 1 - 1 / math.e - 10 * sbr - 1e-9:
            fails.append(f"trial {r['trial']}: msvv ratio {r['ratio']:.6f} < 1-1/e - 10*{sbr:g}")
    tr = [r["ratio"] for r in rows if r["policy"] == "training" and not r.get("error")]
    if tr and statistics.fmean(tr) < 1 - 4 * epsilon:
        fails.append(f"training mean ratio {statistics.fmean(tr):.4f} < {1 - 4 * epsilon:.4f}")
    return fails


def _run_tasks(tasks: list[dict], jobs: int) -> list[dict]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_trial, tasks))
    return [run_trial(t) for t in tasks]


def run_experiment(source: str | Path | GeneratorSpec, policy: str, trials: int = 1,
                   base_seed: int = 0, jobs: int = 1, out_dir: str | Path | None = None,
                   epsilon: float = 0.1, warmup: str = "skip", stem: str = "bench") -> ExperimentReport:
    if policy not in BENCH_POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {BENCH_POLICIES}")
    base = {"policy": policy, "epsilon": epsilon, "warmup": warmup}
    if isinstance(source, GeneratorSpec):
        base.update(family=source.family, params=dict(source.params))
    else:
        base["path"] = str(source)
    tasks = [{**base, "trial": i, "seed": base_seed + i} for i in range(trials)]
    rows = _run_tasks(tasks, jobs)
    report = _finish(rows, epsilon)
    if out_dir is not None:
        write_report(report, out_dir, stem)
    return report


def run_sweep(family: str, param: str, values: list, policy: str, base_seed: int = 0,
              jobs: int = 1, epsilon: float = 0.1, warmup: str = "skip", **fixed) -> ExperimentReport:
    """One trial per parameter value, e.g. ``run_sweep("msvv-worst", "n_bidders", [2, 5], "msvv")``."""
    tasks = []
    for i, v in enumerate(values):
        tasks.append({"family": family, "params": {**fixed, param: v}, "param": v, "policy": policy,
                      "epsilon": epsilon, "warmup": warmup, "trial": i, "seed": base_seed + i})
    return _finish(_run_tasks(tasks, jobs), epsilon)


def _finish(rows: list[dict], epsilon: float) -> ExperimentReport:
    training = [r.pop("_training_report", None) for r in rows]
    summary = summarize(rows)
    summary["threshold_failures"] = threshold_failures(rows, epsilon)
    if any(training):
        summary["training_reports"] = training
    return ExperimentReport(rows, summary)


def write_report(report: ExperimentReport, out_dir: str | Path, stem: str = "bench") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for r in report.rows:
            w.writerow({c: r.get(c, "") for c in COLUMNS})
    json_path.write_text(json.dumps(report.summary, indent=2, default=float), encoding="utf-8")
    return csv_path, json_path


def _cell(v: str):
    if v == "":
        return ""
    if v in ("True", "False"):
        return v == "True"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_rows(csv_path: str | Path) -> list[dict]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        return [{k: _cell(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def emit_plot_data(report: ExperimentReport, path: str | Path, x: str = "param", y: str = "ratio") -> Path:
    """Write a two-column ``x,y`` CSV (header only for an empty report)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([x, y])
        for r in report.rows:
            if not r.get("error"):
                w.writerow([r[x], r[y]])
    return path
