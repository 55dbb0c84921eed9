"""Online Greedy and MSVV allocation with live primal-dual bookkeeping.

Duals follow the offline AdWords LP: ``alpha_u`` prices bidder ``u``'s budget
row and ``beta_v`` the match row of query ``v``, so the dual objective is
``sum_u B_u alpha_u + sum_v beta_v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .model import TOL, AdwordsInstance, validate

E = math.e
K = E / (E - 1.0)  # 1 / (1 - 1/e)
POLICIES = ("greedy", "msvv")
THEOREM_BOUND = {"greedy": 0.5, "msvv": 1.0 / K}


def _check_fraction(x: float) -> float:
    if not (-TOL <= x <= 1.0 + TOL):
        raise ValueError(f"fraction out of [0, 1]: {x}")
    return min(max(x, 0.0), 1.0)


def potential_f(x: float) -> float:
    """``(e^x - 1) / (e - 1)`` on ``[0, 1]``."""
    x = _check_fraction(x)
    return math.expm1(x) / (E - 1.0)


def delta(x: float, w: float) -> float:
    """Marginal dual price ``k e^(x-1) w`` of a bid ``w`` taken at spent fraction ``x``."""
    x = _check_fraction(x)
    if w < 0:
        raise ValueError(f"negative bid: {w}")
    return K * math.exp(x - 1.0) * w


@dataclass
class EngineState:
    budgets: list[float]
    spent: list[float]
    alpha: list[float]
    beta: dict[str, float] = field(default_factory=dict)
    exhausted: list[bool] = field(default_factory=list)
    primal: float = 0.0

    @property
    def fraction(self) -> list[float]:
        return [min(s / b, 1.0) for s, b in zip(self.spent, self.budgets)]

    @property
    def dual(self) -> float:
        return math.fsum([b * a for b, a in zip(self.budgets, self.alpha)] + list(self.beta.values()))

    def as_dict(self, instance: AdwordsInstance) -> dict:
        ids = [b.id for b in instance.bidders]
        return {
            "spent": dict(zip(ids, self.spent)),
            "fraction": dict(zip(ids, self.fraction)),
            "alpha": dict(zip(ids, self.alpha)),
            "exhausted": dict(zip(ids, self.exhausted)),
            "primal": self.primal,
            "dual": self.dual,
        }


@dataclass(frozen=True)
class Decision:
    query: str
    bidder: str | None
    earned: float
    beta: float
    alpha_updates: tuple[tuple[str, float], ...] = ()
    primal: float = 0.0
    dual: float = 0.0


@dataclass
class RunTrace:
    policy: str
    decisions: list[Decision]
    final: EngineState
    closeout: tuple[tuple[str, float], ...] = ()
    truncate: bool = False

    @property
    def primal(self) -> float:
        return self.final.primal

    @property
    def dual(self) -> float:
        return self.final.dual


def _neighbors(instance: AdwordsInstance):
    bidx = instance.bidder_index
    for q in instance.queries:
        yield q, sorted((bidx[u], w) for u, w in q.bids if w > 0)


def run(instance: AdwordsInstance, policy: str, truncate: bool = False) -> RunTrace:
    """Run ``policy`` ("greedy" or "msvv") over the query stream of ``instance``.

    A bidder is available for bid ``w`` while its remaining budget covers ``w``.
    With ``truncate=True`` any bidder with budget left is available and earns
    ``min(w, remaining)``. Argmax ties go to the lowest bidder index.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems[:5]))
    ids = [b.id for b in instance.bidders]
    B = list(instance.budgets)
    nb = len(B)
    spent = [0.0] * nb
    alpha = [0.0] * nb
    exhausted = [False] * nb
    beta: dict[str, float] = {}
    primal = dual = 0.0
    greedy = policy == "greedy"
    decisions = []

    for q, nbrs in _neighbors(instance):
        best, best_score, best_eff = -1, 0.0, 0.0
        updates = []
        for u, w in nbrs:
            rem = B[u] - spent[u]
            if truncate:
                ok = rem > TOL * B[u]
                eff = min(w, rem)
            else:
                ok = rem >= w - TOL * B[u]
                eff = w
            if not ok:
                exhausted[u] = True
                if greedy and alpha[u] == 0.0:
                    alpha[u] = 1.0
                    dual += B[u]
                    updates.append((ids[u], 1.0))
                continue
            if greedy:
                score = eff
            else:
                score = K * eff - K * math.exp(spent[u] / B[u] - 1.0) * eff
            if score > best_score:
                best, best_score, best_eff = u, score, eff
        if best < 0:
            beta[q.id] = 0.0
            decisions.append(Decision(q.id, None, 0.0, 0.0, tuple(updates), primal, dual))
            continue
        u, eff = best, best_eff
        if greedy:
            b_v = eff
            spent[u] += eff
            if B[u] - spent[u] <= TOL * B[u] and alpha[u] == 0.0:
                alpha[u] = 1.0
                exhausted[u] = True
                dual += B[u]
                updates.append((ids[u], 1.0))
        else:
            d_alpha = delta(spent[u] / B[u], eff / B[u])
            b_v = K * eff - B[u] * d_alpha
            alpha[u] += d_alpha
            spent[u] += eff
            dual += B[u] * d_alpha
            updates.append((ids[u], alpha[u]))
        beta[q.id] = b_v
        primal += eff
        dual += b_v
        decisions.append(Decision(q.id, ids[u], eff, b_v, tuple(updates), primal, dual))

    closeout = []
    if greedy:
        sbr = instance.small_bid_ratio
        for u in range(nb):
            if alpha[u] == 0.0 and B[u] - spent[u] < sbr * B[u]:
                alpha[u] = 1.0
                exhausted[u] = True
                closeout.append((ids[u], 1.0))
    # correctly rounded total; the running sums above only feed per-step snapshots
    total = math.fsum(d.earned for d in decisions)
    state = EngineState(B, spent, alpha, beta, exhausted, total)
    return RunTrace(policy, decisions, state, tuple(closeout), truncate)


def replay(trace: RunTrace, instance: AdwordsInstance) -> EngineState:
    """Rebuild the final engine state from the decision log alone."""
    bidx = instance.bidder_index
    B = list(instance.budgets)
    spent = [0.0] * len(B)
    alpha = [0.0] * len(B)
    beta: dict[str, float] = {}
    for d in trace.decisions:
        for uid, a in d.alpha_updates:
            alpha[bidx[uid]] = a
        beta[d.query] = d.beta
        if d.bidder is not None:
            spent[bidx[d.bidder]] += d.earned
    primal = math.fsum(d.earned for d in trace.decisions)
    for uid, a in trace.closeout:
        alpha[bidx[uid]] = a
    exhausted = list(trace.final.exhausted)
    return EngineState(B, spent, alpha, beta, exhausted, primal)


# -- certificates ---------------------------------------------------------------

@dataclass
class Certificate:
    """End-of-run primal-dual certificate.

    ``ratio_bound`` is primal/dual. ``slack_terms`` is the additive loss
    against ``theorem_bound`` charged to bid granularity; ``certified_ratio``
    is primal over the dual after raising each ``beta_v`` enough to repair any
    residual infeasibility, hence a rigorous lower bound on primal/OPT.
    """

    policy: str
    primal: float
    dual: float
    dual_feasible: bool
    max_violation: float
    max_scaled_violation: float
    allowed_scaled_violation: float
    ratio_bound: float
    theorem_bound: float
    slack_terms: float
    certified_ratio: float
    identity_error: float = 0.0
    accumulated_identity_error: float = 0.0
    steps: int = 0

    @property
    def ratio_ok(self) -> bool:
        return self.ratio_bound >= self.theorem_bound - self.slack_terms - 1e-12

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ratio_ok"] = self.ratio_ok
        return d


def certify(trace: RunTrace, instance: AdwordsInstance, policy: str | None = None) -> Certificate:
    """Check dual feasibility and the primal/dual ratio of a finished run."""
    policy = policy or trace.policy
    if policy != trace.policy:
        raise ValueError(f"trace was produced by {trace.policy!r}, not {policy!r}")
    if [d.query for d in trace.decisions] != [q.id for q in instance.queries]:
        raise ValueError("trace does not match instance query stream")
    bidx = instance.bidder_index
    if any(d.bidder is not None and d.bidder not in bidx for d in trace.decisions):
        raise ValueError("trace references unknown bidders")

    st = trace.final
    B = st.budgets
    sbr = instance.small_bid_ratio
    allowed = K * sbr if policy == "msvv" else 0.0
    max_viol = max_scaled = repair = 0.0
    for q, nbrs in _neighbors(instance):
        b_v = st.beta.get(q.id, 0.0)
        worst = 0.0
        for u, w in nbrs:
            viol = w - (w * st.alpha[u] + b_v)
            worst = max(worst, viol)
            max_scaled = max(max_scaled, viol / B[u])
        max_viol = max(max_viol, worst)
        repair += worst
    feasible = max_scaled <= allowed + TOL

    primal, dual = st.primal, st.dual
    ratio = primal / dual if dual > 0 else 1.0
    certified = primal / (dual + repair) if dual + repair > 0 else 1.0
    theorem = THEOREM_BOUND[policy]
    ident = acc = 0.0
    if policy == "greedy":
        residual = sum(B[u] - st.spent[u] for u in range(len(B)) if st.alpha[u] == 1.0)
        slack = residual / (2 * dual) if dual > 0 else 0.0
    else:
        prev_p = prev_d = 0.0
        for d in trace.decisions:
            inc_d, inc_p = d.dual - prev_d, d.primal - prev_p
            err = abs(inc_d - K * inc_p)
            ident = max(ident, err)
            prev_p, prev_d = d.primal, d.dual
        acc = abs(dual - K * primal)
        # 1/k - P/D = (D - kP) / (kD): only accounting drift can lower the ratio
        slack = acc / (K * dual) if dual > 0 else 0.0
    return Certificate(policy, primal, dual, feasible, max_viol, max_scaled, allowed,
                       ratio, theorem, slack, certified, ident, acc, len(trace.decisions))


@dataclass(frozen=True)
class AlphaConsistency:
    max_deviation: float
    min_deviation: float
    worst_margin: float  # min over checks of k * max_accepted_bid - deviation
    holds: bool


def check_alpha_consistency(trace: RunTrace, instance: AdwordsInstance) -> AlphaConsistency:
    """Track ``f(x_u) - alpha_u`` for every bidder after every MSVV step.

    The MSVV prices are a left Riemann sum of ``f'``, so the deviation lies in
    ``[0, k * b]`` with ``b`` the largest normalized bid the bidder accepted.
    """
    if trace.policy != "msvv":
        raise ValueError("alpha consistency is defined for msvv traces only")
    bidx = instance.bidder_index
    B = list(instance.budgets)
    spent = [0.0] * len(B)
    alpha = [0.0] * len(B)
    bmax = [0.0] * len(B)
    hi, lo, margin = 0.0, 0.0, math.inf
    for d in trace.decisions:
        if d.bidder is None:
            continue
        u = bidx[d.bidder]
        spent[u] += d.earned
        bmax[u] = max(bmax[u], d.earned / B[u])
        for uid, a in d.alpha_updates:
            alpha[bidx[uid]] = a
        dev = potential_f(min(spent[u] / B[u], 1.0)) - alpha[u]
        hi, lo = max(hi, dev), min(lo, dev)
        margin = min(margin, K * bmax[u] - dev)
    holds = lo >= -1e-12 and margin >= -1e-12
    return AlphaConsistency(hi, lo, margin if margin != math.inf else 0.0, holds)


# -- trace export -----------------------------------------------------------------

def trace_records(trace: RunTrace, instance: AdwordsInstance) -> Iterable[dict]:
    for d in trace.decisions:
        yield {"query": d.query, "bidder": d.bidder, "earned": d.earned, "beta": d.beta}
    summary = {"policy": trace.policy, "truncate": trace.truncate, "steps": len(trace.decisions)}
    summary.update(trace.final.as_dict(instance))
    yield {"summary": summary}


def write_trace(trace: RunTrace, instance: AdwordsInstance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace_records(trace, instance):
            fh.write(json.dumps(rec) + "\n")


def read_trace(path: str | Path) -> tuple[list[dict], dict]:
    """Return ``(decision records, summary)`` from a JSON-lines trace file."""
    decisions, summary = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "summary" in rec:
                summary = rec["summary"]
            else:
                decisions.append(rec)
    return decisions, summary


def load_trace(path: str | Path, instance: AdwordsInstance) -> RunTrace:
    """Re-run the recorded policy and confirm it reproduces the file's decisions."""
    recs, summary = read_trace(path)
    if "policy" not in summary:
        raise ValueError(f"{path}: trace has no summary record")
    trace = run(instance, summary["policy"], truncate=bool(summary.get("truncate", False)))
    if len(recs) != len(trace.decisions):
        raise ValueError(f"{path}: {len(recs)} decisions, instance has {len(trace.decisions)} queries")
    for rec, d in zip(recs, trace.decisions):
        if (rec["query"], rec["bidder"]) != (d.query, d.bidder) or \
                abs(rec["earned"] - d.earned) > TOL or abs(rec["beta"] - d.beta) > TOL:
            raise ValueError(f"{path}: decision for query {rec['query']!r} does not match a replay")
    return trace
