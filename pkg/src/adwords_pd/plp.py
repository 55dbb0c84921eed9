"""Training-based primal-dual allocation for online stochastic packing LPs.

The first ``floor(eps * n)`` agents form a sample. The packing LP restricted
to the sample, with every capacity cut to ``eps * c_j``, is solved offline.
Its resource duals ``alpha*`` then price resources for the remaining agents.
Each agent takes its best-gain option when that gain is nonnegative and the
consumption still fits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lp as lpmod
from .model import TOL, Agent, AdwordsInstance, AgentOption, PlpInstance, validate

GAIN_TOL = 1e-9
WARMUP_POLICIES = ("skip", "greedy")


@dataclass(frozen=True)
class TrainingConfig:
    epsilon: float = 0.1
    warmup: str = "skip"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1): {self.epsilon}")
        if self.warmup not in WARMUP_POLICIES:
            raise ValueError(f"warmup must be one of {WARMUP_POLICIES}: {self.warmup!r}")


@dataclass(frozen=True, eq=False)
class CompiledPlp:
    """Array view of a packing LP: agents share option tables by type."""

    capacities: np.ndarray
    agent_type: np.ndarray
    values: list[np.ndarray]       # per type, shape (q_t,)
    consumption: list[np.ndarray]  # per type, raw units, shape (q_t, m)

    @property
    def normalized(self) -> list[np.ndarray]:
        return [c / self.capacities for c in self.consumption]


def compile_plp(instance: PlpInstance) -> CompiledPlp:
    rindex = instance.resource_index
    m = instance.m
    by_id: dict[int, int] = {}
    by_key: dict[tuple, int] = {}
    values, cons = [], []
    types = np.empty(instance.n, dtype=np.int64)
    for i, a in enumerate(instance.agents):
        t = by_id.get(id(a.options))
        if t is None:
            key = lpmod.plp_option_key(a.options, rindex)
            t = by_key.get(key)
            if t is None:
                t = by_key[key] = len(values)
                values.append(np.array([o.value for o in a.options], dtype=float))
                mat = np.zeros((len(a.options), m))
                for o, opt in enumerate(a.options):
                    for j, amt in opt.consumption:
                        mat[o, rindex[j]] += amt
                cons.append(mat)
            by_id[id(a.options)] = t
        types[i] = t
    return CompiledPlp(np.asarray(instance.capacities, dtype=float), types, values, cons)


def _log_term(n: int, m: int, q: int) -> float:
    lq = math.log(q) if q > 1 else 0.0
    return (m + 1) * (math.log(n) + lq)


def sample_size(n: int, epsilon: float) -> int:
    return int(math.floor(epsilon * n + 1e-9))


def split_sample(instance: PlpInstance, epsilon: float) -> tuple[tuple[Agent, ...], tuple[Agent, ...]]:
    """First ``floor(eps * n)`` agents, and the rest, both in arrival order."""
    s = sample_size(instance.n, epsilon)
    if s < 1:
        raise ValueError(f"empty sample: floor({epsilon} * {instance.n}) = 0")
    return instance.agents[:s], instance.agents[s:]


@dataclass(frozen=True, eq=False)
class SampledDual:
    alpha_star: np.ndarray
    objective: float
    solution: lpmod.LpSolution
    lp: lpmod.StandardLp


def solve_sampled_dual(sample: Sequence[Agent], instance: PlpInstance, epsilon: float,
                       aggregate: bool = True) -> SampledDual:
    """Resource duals of the sample LP with normalized capacities cut to ``epsilon``."""
    if not sample:
        raise ValueError("sample is empty")
    lp = lpmod.build_offline_plp(instance, aggregate=aggregate, rhs=epsilon, agents=sample)
    sol = lpmod.solve(lp).require_optimal()
    alpha = np.array([sol.y[i] for i in lp.rows_of_kind(lpmod.ALPHA_KINDS)])
    return SampledDual(alpha, sol.objective, sol, lp)


def gain(option: AgentOption, alpha_star: Mapping[str, float], capacities: Mapping[str, float]) -> float:
    """Option value minus its capacity-normalized consumption priced at ``alpha_star``."""
    return option.value - sum(alpha_star.get(j, 0.0) * a / capacities[j] for j, a in option.consumption)


def option_gains(values: np.ndarray, normalized: np.ndarray, alpha_star: np.ndarray) -> np.ndarray:
    return values - normalized @ alpha_star


def argmax_gain(gains: Sequence[float]) -> int:
    """Index of the largest gain; gains within ``GAIN_TOL`` of it tie and the lowest index wins."""
    top = max(gains)
    return next(i for i, g in enumerate(gains) if g >= top - GAIN_TOL)


def best_options(cp: CompiledPlp, alpha_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per type: the selected option index and the maximum gain."""
    best = np.empty(len(cp.values), dtype=np.int64)
    g = np.empty(len(cp.values))
    for t, (v, a) in enumerate(zip(cp.values, cp.normalized)):
        gains = option_gains(v, a, alpha_star)
        best[t] = argmax_gain(gains.tolist())
        g[t] = gains.max()
    return best, g


# -- theorem conditions and sample statistics ------------------------------------

@dataclass
class ConditionMargins:
    log_term: float
    value_ratio: float          # max w_io / OPT
    value_bound: float          # eps / log_term
    condition1_margin: float
    consumption_ratio: list[float]  # per resource: max a_ioj / c_j
    consumption_bound: float        # eps^3 / log_term
    condition2_margin: list[float]

    @property
    def condition1(self) -> bool:
        return self.condition1_margin >= 0

    @property
    def condition2(self) -> bool:
        return all(mg >= 0 for mg in self.condition2_margin)

    @property
    def holds(self) -> bool:
        return self.condition1 and self.condition2


def check_theorem5_conditions(instance: PlpInstance, epsilon: float, opt_value: float,
                              compiled: CompiledPlp | None = None) -> ConditionMargins:
    """Signed margins (bound minus observed) of the two small-option conditions."""
    if not opt_value > 0:
        raise ValueError(f"OPT must be positive: {opt_value}")
    cp = compiled or compile_plp(instance)
    L = _log_term(instance.n, instance.m, instance.q)
    used = np.unique(cp.agent_type)
    w_max = max((cp.values[t].max() for t in used), default=0.0)
    a_ratio = np.zeros(instance.m)
    for t in used:
        a_ratio = np.maximum(a_ratio, cp.normalized[t].max(axis=0))
    b1, b2 = epsilon / L, epsilon**3 / L
    return ConditionMargins(L, w_max / opt_value, b1, b1 - w_max / opt_value,
                            a_ratio.tolist(), b2, (b2 - a_ratio).tolist())


@dataclass
class BadnessStats:
    W: float
    W_sample: float
    C: list[float]
    C_sample: list[float]
    r: list[float]
    t: float
    r_threshold: list[float]
    t_threshold: float
    r_bad: list[bool]
    t_bad: bool
    w_max: float
    a_max: float
    lemma_checks: list[dict] = field(default_factory=list)

    @property
    def is_bad(self) -> bool:
        return self.t_bad or any(self.r_bad)

    @property
    def lemma_holds(self) -> bool:
        return all(c["holds"] for c in self.lemma_checks if c["applicable"])


def badness_stats(instance: PlpInstance, alpha_star: np.ndarray, n_sample: int, epsilon: float,
                  compiled: CompiledPlp | None = None, lemma_tol: float = 1e-6) -> BadnessStats:
    """Sample deviation statistics for the best-gain selection ``O*`` under ``alpha_star``.

    ``O*`` pairs every agent whose best gain is nonnegative with its best
    option, over the whole stream. ``C`` uses capacity-normalized consumption.
    """
    cp = compiled or compile_plp(instance)
    n, m = instance.n, instance.m
    alpha_star = np.asarray(alpha_star, dtype=float)
    best, g = best_options(cp, alpha_star)
    ntypes = len(cp.values)
    in_o = g >= -GAIN_TOL
    cnt_all = np.bincount(cp.agent_type, minlength=ntypes)
    cnt_s = np.bincount(cp.agent_type[:n_sample], minlength=ntypes)
    norm = cp.normalized
    w_sel = np.array([cp.values[t][best[t]] if in_o[t] else 0.0 for t in range(ntypes)])
    a_sel = np.array([norm[t][best[t]] if in_o[t] else np.zeros(m) for t in range(ntypes)]).reshape(ntypes, m)
    W, W_s = float(cnt_all @ w_sel), float(cnt_s @ w_sel)
    C, C_s = cnt_all @ a_sel, cnt_s @ a_sel

    used = np.flatnonzero(cnt_all)
    w_max = float(max(cp.values[t].max() for t in used))
    a_max = float(max(norm[t].max() for t in used))
    L = _log_term(n, m, instance.q)
    r = np.abs(C_s - epsilon * C)
    t = abs(W_s - epsilon * W)
    r_thr = L * a_max + np.sqrt(C) * 2 * math.sqrt(epsilon * L * a_max)
    t_thr = L * w_max + math.sqrt(W) * 2 * math.sqrt(epsilon * L * w_max)
    r_bad = r >= r_thr
    lemma = []
    lo, hi = 1 - 2 * epsilon, 1 + 3 * (epsilon + epsilon**2)
    for j in range(m):
        applicable = bool(abs(C_s[j] - epsilon) <= lemma_tol and not r_bad[j])
        lemma.append({"resource": instance.resources[j].id, "applicable": applicable,
                      "C": float(C[j]), "C_sample": float(C_s[j]),
                      "holds": bool(lo <= C[j] <= hi) if applicable else True})
    return BadnessStats(W, W_s, C.tolist(), C_s.tolist(), r.tolist(), t, r_thr.tolist(), t_thr,
                        r_bad.tolist(), bool(t >= t_thr), w_max, a_max, lemma)


# -- the algorithm ---------------------------------------------------------------

@dataclass(eq=False)
class PlpRunTrace:
    """Per-agent outcome: ``choice[i]`` is the option index taken (-1 if none)."""

    choice: np.ndarray
    earned: np.ndarray
    beta: np.ndarray
    n_sample: int
    used: np.ndarray  # raw consumption charged per resource

    def selections(self, instance: PlpInstance) -> list[tuple[str, int | None]]:
        return [(a.id, int(c) if c >= 0 else None) for a, c in zip(instance.agents, self.choice)]


@dataclass
class TrainingReport:
    epsilon: float
    warmup: str
    n: int
    m: int
    q: int
    n_sample: int
    alpha_star: list[float]
    opt: float
    value_excluding_sample: float
    value_including_sample: float
    ratio_excluding_sample: float
    ratio_including_sample: float
    accepted: int
    skipped_negative_gain: int
    skipped_capacity: int
    capacity_safe: bool
    max_capacity_use: float
    dual_feasible: bool
    max_dual_violation: float
    conditions: ConditionMargins
    badness: BadnessStats
    distribution_note: str = "finite type pool, uniform draw"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["conditions"]["holds"] = self.conditions.holds
        d["badness"]["is_bad"] = self.badness.is_bad
        d["badness"]["lemma_holds"] = self.badness.lemma_holds
        return d


def offline_opt(instance: PlpInstance, aggregate: bool = True) -> float:
    lp = lpmod.build_offline_plp(instance, aggregate=aggregate)
    return lpmod.solve(lp).require_optimal().objective


def run_training_based(instance: PlpInstance, config: TrainingConfig,
                       opt_value: float | None = None) -> tuple[PlpRunTrace, TrainingReport]:
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems[:5]))
    eps = config.epsilon
    sample, _ = split_sample(instance, eps)
    s = len(sample)
    n, m = instance.n, instance.m
    cp = compile_plp(instance)
    caps = cp.capacities
    rem = caps.tolist()
    slack = (TOL * caps).tolist()
    choice = np.full(n, -1, dtype=np.int64)
    earned = np.zeros(n)
    beta = np.zeros(n)
    types = cp.agent_type.tolist()
    cons_lists = [[row.tolist() for row in c] for c in cp.consumption]
    rng_m = range(m)

    def fits(cv):
        return all(rem[j] + slack[j] >= cv[j] for j in rng_m)

    def charge(cv):
        for j in rng_m:
            rem[j] -= cv[j]

    warm = 0.0
    if config.warmup == "greedy":
        order = [np.argsort(-v, kind="stable").tolist() for v in cp.values]
        for i in range(s):
            t = types[i]
            for o in order[t]:
                cv = cons_lists[t][o]
                if fits(cv):
                    charge(cv)
                    choice[i] = o
                    earned[i] = cp.values[t][o]
                    warm += earned[i]
                    break

    sd = solve_sampled_dual(sample, instance, eps)
    best, g = best_options(cp, sd.alpha_star)
    best_l, g_l = best.tolist(), g.tolist()
    best_val = [float(cp.values[t][best_l[t]]) for t in range(len(best_l))]
    best_cons = [cons_lists[t][best_l[t]] for t in range(len(best_l))]
    value = 0.0
    acc = neg = cap_skip = 0
    for i in range(s, n):
        t = types[i]
        gt = g_l[t]
        if gt < -GAIN_TOL:
            neg += 1
            continue
        beta[i] = max(gt, 0.0)
        cv = best_cons[t]
        if not fits(cv):
            cap_skip += 1
            continue
        charge(cv)
        choice[i] = best_l[t]
        earned[i] = best_val[t]
        value += best_val[t]
        acc += 1

    used = caps - np.array(rem)
    trace = PlpRunTrace(choice, earned, beta, s, used)
    # dual feasibility of (alpha*, beta) over every phase-2 agent and option
    viol = 0.0
    for t in np.unique(cp.agent_type[s:]):
        gains = option_gains(cp.values[t], cp.normalized[t], sd.alpha_star)
        viol = max(viol, float(np.max(gains - max(g[t], 0.0))))
    if opt_value is None:
        opt_value = offline_opt(instance)
    cond = check_theorem5_conditions(instance, eps, opt_value, cp)
    bad = badness_stats(instance, sd.alpha_star, s, eps, cp)
    use_frac = float(np.max(used / caps)) if m else 0.0
    report = TrainingReport(
        epsilon=eps, warmup=config.warmup, n=n, m=m, q=instance.q, n_sample=s,
        alpha_star=sd.alpha_star.tolist(), opt=opt_value,
        value_excluding_sample=value, value_including_sample=value + warm,
        ratio_excluding_sample=value / opt_value if opt_value > 0 else 1.0,
        ratio_including_sample=(value + warm) / opt_value if opt_value > 0 else 1.0,
        accepted=acc, skipped_negative_gain=neg, skipped_capacity=cap_skip,
        capacity_safe=bool(np.all(used <= caps * (1 + TOL))), max_capacity_use=use_frac,
        dual_feasible=viol <= GAIN_TOL, max_dual_violation=viol,
        conditions=cond, badness=bad,
    )
    return trace, report


def adwords_training_selections(instance: AdwordsInstance, config: TrainingConfig) -> list[tuple[str, str | None]]:
    """Training-based allocation written directly in AdWords terms.

    Prices come from the offline AdWords LP on the sample with budgets cut to
    ``eps * B_u``; a later query goes to the bidder maximizing
    ``w_uv * (1 - alpha_u)`` if that is nonnegative and the budget covers the bid.
    Queries without positive bids are not part of the stream.
    """
    eps = config.epsilon
    stream = [q for q in instance.queries if any(w > 0 for _, w in q.bids)]
    s = sample_size(len(stream), eps)
    if s < 1:
        raise ValueError("empty sample")
    bidx = instance.bidder_index
    B = instance.budgets
    spent = [0.0] * len(B)
    out: list[tuple[str, str | None]] = []
    nbrs = [sorted((bidx[u], w) for u, w in q.bids if w > 0) for q in stream]

    def fits(u, w):
        return spent[u] <= B[u] - w + TOL * B[u]

    for k in range(s):
        pick = None
        if config.warmup == "greedy":
            for u, w in sorted(nbrs[k], key=lambda uw: (-uw[1], uw[0])):
                if fits(u, w):
                    spent[u] += w
                    pick = instance.bidders[u].id
                    break
        out.append((stream[k].id, pick))

    sample_inst = AdwordsInstance(instance.bidders, tuple(stream[:s]))
    lp = lpmod.build_offline_adwords_lp(sample_inst, aggregate=True, budget_scale=eps)
    sol = lpmod.solve(lp).require_optimal()
    alpha = [sol.alpha(lp)[b.id] for b in instance.bidders]
    for k in range(s, len(stream)):
        gains = [w * (1.0 - alpha[u]) for u, w in nbrs[k]]
        best = nbrs[k][argmax_gain(gains)]
        pick = None
        if max(gains) >= -GAIN_TOL and fits(*best):
            spent[best[0]] += best[1]
            pick = instance.bidders[best[0]].id
        out.append((stream[k].id, pick))
    return out
