"""Offline LP oracle: standard-form packing LPs, a dense simplex solver, and
duality / complementary-slackness checks.

Every LP here has the form ``max c.x  s.t.  A x <= b,  x >= 0``; its dual is
``min b.y  s.t.  A^T y >= c,  y >= 0``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .model import AdwordsInstance, PlpInstance

log = logging.getLogger(__name__)

MAX_VARIABLES = 10**6
FEAS_TOL = 1e-7
GAP_TOL = 1e-6
PIVOT_TOL = 1e-9

# rows whose duals are resource prices (alpha) vs per-arrival duals (beta)
ALPHA_KINDS = ("budget", "resource")
BETA_KINDS = ("match", "agent")


class LpError(RuntimeError):
    pass


class LpSizeError(LpError):
    pass


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class StandardLp:
    """``max c.x  s.t.  A x <= b, x >= 0`` with labels back to domain entities.

    Variable labels look like ``("x", bidder_id, query_id)``; constraint labels
    like ``("budget", bidder_id)`` or ``("match", query_id)``. When arrivals are
    aggregated, ``groups[k]`` lists the arrival ids merged into beta row ``k``.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    variable_labels: tuple
    constraint_labels: tuple
    groups: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ValueError(f"inconsistent LP shapes: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}")
        if len(self.variable_labels) != n or len(self.constraint_labels) != m:
            raise ValueError("label count does not match LP dimensions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def rows_of_kind(self, kinds: Sequence[str]) -> list[int]:
        return [i for i, lab in enumerate(self.constraint_labels) if lab[0] in kinds]


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray
    y: np.ndarray
    objective: float
    dual_objective: float
    iterations: int
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    basis: tuple[int, ...] = ()
    certificate: np.ndarray | None = None  # unbounded ray or Farkas vector

    @property
    def gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    def require_optimal(self) -> "LpSolution":
        if self.status is not LpStatus.OPTIMAL:
            raise LpError(f"LP not solved to optimality: {self.status.value}")
        return self

    def duals_by_label(self, lp: StandardLp, kinds: Sequence[str]) -> dict[Hashable, float]:
        return {lp.constraint_labels[i][1]: float(self.y[i]) for i in lp.rows_of_kind(kinds)}

    def alpha(self, lp: StandardLp) -> dict[Hashable, float]:
        return self.duals_by_label(lp, ALPHA_KINDS)

    def beta(self, lp: StandardLp) -> dict[Hashable, float]:
        return self.duals_by_label(lp, BETA_KINDS)


# -- builders -----------------------------------------------------------------

def _group_arrivals(keys: Sequence[Hashable], ids: Sequence[str], aggregate: bool):
    if not aggregate:
        return [(k, (i,)) for k, i in zip(keys, ids)]
    order: dict[Hashable, list[str]] = {}
    for k, i in zip(keys, ids):
        order.setdefault(k, []).append(i)
    return [(k, tuple(v)) for k, v in order.items()]


def build_offline_adwords_lp(instance: AdwordsInstance, aggregate: bool = False,
                             budget_scale: float = 1.0) -> StandardLp:
    """Offline AdWords LP: budget rows ``sum_v w_uv x_uv <= B_u``, match rows ``sum_u x_uv <= 1``.

    With ``aggregate=True`` queries with identical bid vectors share one block
    of variables and one match row with right-hand side equal to their count.
    ``budget_scale`` multiplies every budget (used for sampled LPs).
    """
    bidx = instance.bidder_index
    keys, ids = [], []
    for q in instance.queries:
        pos = tuple(sorted(((bidx[u], w) for u, w in q.bids if w > 0)))
        if pos:
            keys.append(pos)
            ids.append(q.id)
    grouped = _group_arrivals(keys, ids, aggregate)
    nvars = sum(len(k) for k, _ in grouped)
    if nvars > MAX_VARIABLES:
        raise LpSizeError(f"{nvars} variables exceeds dense-solver limit {MAX_VARIABLES}")
    nb = len(instance.bidders)
    m = nb + len(grouped)
    A = np.zeros((m, nvars))
    c = np.zeros(nvars)
    b = np.empty(m)
    b[:nb] = [bd.budget * budget_scale for bd in instance.bidders]
    vlabels, rlabels = [], [("budget", bd.id) for bd in instance.bidders]
    col = 0
    for g, (key, members) in enumerate(grouped):
        row = nb + g
        b[row] = len(members)
        gid = members[0] if not aggregate else g
        rlabels.append(("match", gid))
        for u, w in key:
            A[u, col] = w
            A[row, col] = 1.0
            c[col] = w
            vlabels.append(("x", instance.bidders[u].id, gid))
            col += 1
    return StandardLp(c, A, b, tuple(vlabels), tuple(rlabels),
                      tuple(m_ for _, m_ in grouped) if aggregate else None)


def plp_option_key(agent_options, rindex) -> tuple:
    return tuple((o.value, tuple((rindex[j], a) for j, a in o.consumption)) for o in agent_options)


def build_offline_plp(instance: PlpInstance, aggregate: bool = False, rhs: float = 1.0,
                      agents=None) -> StandardLp:
    """Packing LP with capacity-normalized resource rows ``sum x_io a_ioj / c_j <= rhs``.

    ``rhs`` < 1 gives the reduced-capacity LP used for training on a sample;
    ``agents`` restricts the LP to a subset of the instance's agents.
    """
    agents = instance.agents if agents is None else agents
    rindex = instance.resource_index
    caps = np.asarray(instance.capacities, dtype=float)
    # key by option-tuple identity first: generated streams share option tuples
    by_id: dict[int, tuple] = {}
    keys, ids = [], []
    for a in agents:
        if not a.options:
            continue
        k = by_id.get(id(a.options))
        if k is None:
            k = by_id[id(a.options)] = plp_option_key(a.options, rindex)
        keys.append(k)
        ids.append(a.id)
    grouped = _group_arrivals(keys, ids, aggregate)
    nvars = sum(len(k) for k, _ in grouped)
    if nvars > MAX_VARIABLES:
        raise LpSizeError(f"{nvars} variables exceeds dense-solver limit {MAX_VARIABLES}")
    mres = len(caps)
    m = mres + len(grouped)
    A = np.zeros((m, nvars))
    c = np.zeros(nvars)
    b = np.empty(m)
    b[:mres] = rhs
    vlabels, rlabels = [], [("resource", r.id) for r in instance.resources]
    col = 0
    for g, (key, members) in enumerate(grouped):
        row = mres + g
        b[row] = len(members)
        gid = members[0] if not aggregate else g
        rlabels.append(("agent", gid))
        for o, (value, cons) in enumerate(key):
            for j, amt in cons:
                A[j, col] += amt / caps[j]
            A[row, col] = 1.0
            c[col] = value
            vlabels.append(("x", gid, o))
            col += 1
    return StandardLp(c, A, b, tuple(vlabels), tuple(rlabels),
                      tuple(m_ for _, m_ in grouped) if aggregate else None)


# -- solver -------------------------------------------------------------------

class _Tableau:
    """Dense simplex tableau; the last row holds reduced costs and ``-objective``."""

    def __init__(self, M: np.ndarray, rhs: np.ndarray, basis: list[int]):
        m, ncols = M.shape
        self.T = np.zeros((m + 1, ncols + 1))
        self.T[:m, :ncols] = M
        self.T[:m, -1] = rhs
        self.basis = list(basis)
        self.m = m
        self.iterations = 0
        self.degenerate = 0
        self.bland = False

    def set_cost(self, cost: np.ndarray):
        T, m = self.T, self.m
        cb = cost[self.basis]
        T[m, :-1] = cost - cb @ T[:m, :-1]
        T[m, -1] = -cb @ T[:m, -1]

    def pivot(self, r: int, s: int):
        T = self.T
        T[r] /= T[r, s]
        colv = T[:, s].copy()
        colv[r] = 0.0
        T -= np.outer(colv, T[r])
        self.basis[r] = s

    def run(self, allowed: np.ndarray, max_iter: int, degenerate_limit: int):
        """Iterate to optimality. Returns ``"optimal"``, ``("unbounded", col)`` or ``"limit"``."""
        T, m = self.T, self.m
        while True:
            d = np.where(allowed, T[m, :-1], 0.0)
            if self.bland:
                cand = np.flatnonzero(d > PIVOT_TOL)
                if cand.size == 0:
                    return "optimal"
                s = int(cand[0])
            else:
                s = int(np.argmax(d))
                if d[s] <= PIVOT_TOL:
                    return "optimal"
            if self.iterations >= max_iter:
                return "limit"
            col = T[:m, s]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return ("unbounded", s)
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL]
            r = int(min(ties, key=lambda i: self.basis[i]))
            if best <= PIVOT_TOL:
                self.degenerate += 1
                if not self.bland and self.degenerate >= degenerate_limit:
                    log.debug("switching to Bland's rule after %d degenerate pivots", self.degenerate)
                    self.bland = True
            self.pivot(r, s)
            self.iterations += 1


def solve(lp: StandardLp, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` by two-phase primal simplex and read duals off the final basis."""
    A, b, c = lp.A, lp.b, lp.c
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * (m + n) ** 2
    if m == 0:
        if np.any(c > PIVOT_TOL):
            ray = (c > PIVOT_TOL).astype(float)
            return LpSolution(LpStatus.UNBOUNDED, np.zeros(n), np.zeros(0), np.inf, np.inf, 0, certificate=ray)
        return LpSolution(LpStatus.OPTIMAL, np.zeros(n), np.zeros(0), 0.0, 0.0, 0)

    sign = np.where(b < 0, -1.0, 1.0)
    neg = np.flatnonzero(b < 0)
    nart = neg.size
    ncols = n + m + nart
    M = np.zeros((m, ncols))
    M[:, :n] = A * sign[:, None]
    M[np.arange(m), n + np.arange(m)] = sign
    M[neg, n + m + np.arange(nart)] = 1.0
    rhs = b * sign
    basis = [n + i for i in range(m)]
    for k, i in enumerate(neg):
        basis[i] = n + m + k
    tab = _Tableau(M, rhs, basis)
    degenerate_limit = 50 * m

    if nart:
        cost1 = np.zeros(ncols)
        cost1[n + m:] = -1.0
        tab.set_cost(cost1)
        out = tab.run(np.ones(ncols, dtype=bool), max_iter, degenerate_limit)
        if out == "limit":
            return _failed(LpStatus.ITERATION_LIMIT, n, m, tab)
        if -tab.T[m, -1] < -FEAS_TOL:
            # phase-one duals give a Farkas certificate: y >= 0, A^T y >= 0, b.y < 0
            yph = np.linalg.solve(M[:, tab.basis].T, cost1[tab.basis])
            farkas = sign * yph
            return _failed(LpStatus.INFEASIBLE, n, m, tab, certificate=farkas)
        for r in range(m):
            if tab.basis[r] >= n + m:
                nz = np.flatnonzero(np.abs(tab.T[r, : n + m]) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))

    cost = np.zeros(ncols)
    cost[:n] = c
    tab.set_cost(cost)
    allowed = np.zeros(ncols, dtype=bool)
    allowed[: n + m] = True
    out = tab.run(allowed, max_iter, degenerate_limit)
    if out == "limit":
        return _failed(LpStatus.ITERATION_LIMIT, n, m, tab)
    if isinstance(out, tuple):
        s = out[1]
        ray = np.zeros(ncols)
        ray[s] = 1.0
        for r, j in enumerate(tab.basis):
            ray[j] = -tab.T[r, s]
        return _failed(LpStatus.UNBOUNDED, n, m, tab, certificate=ray[:n])

    B = M[:, tab.basis]
    xb = np.linalg.solve(B, rhs)
    full = np.zeros(ncols)
    full[tab.basis] = xb
    x = np.maximum(full[:n], 0.0)
    y = sign * np.linalg.solve(B.T, cost[tab.basis])
    y = np.maximum(y, 0.0)
    primal = float(c @ x)
    dual = float(b @ y)
    pres = max(0.0, float(np.max(A @ x - b, initial=0.0)))
    dres = max(0.0, float(np.max(c - A.T @ y, initial=0.0)))
    sol = LpSolution(LpStatus.OPTIMAL, x, y, primal, dual, tab.iterations, pres, dres, tuple(tab.basis))
    if pres > FEAS_TOL or dres > FEAS_TOL or sol.gap > GAP_TOL * (1 + abs(primal)):
        log.warning("LP residuals above tolerance: primal %.3g dual %.3g gap %.3g", pres, dres, sol.gap)
    return sol


def _failed(status, n, m, tab, certificate=None) -> LpSolution:
    val = {LpStatus.UNBOUNDED: np.inf, LpStatus.INFEASIBLE: -np.inf}.get(status, np.nan)
    return LpSolution(status, np.zeros(n), np.zeros(m), val, val, tab.iterations,
                      basis=tuple(tab.basis), certificate=certificate)


# -- certificates -------------------------------------------------------------

@dataclass
class SlacknessReport:
    """Complementary-slackness violations of a primal/dual pair.

    ``pair_violations``: positive x whose dual constraint is not tight
    (``w(1 - alpha_u) != beta_v`` in AdWords terms). ``price_violations``:
    positive alpha on a row with leftover capacity. ``arrival_violations``:
    positive beta on an arrival not fully matched. ``dual_infeasible``: dual
    constraints violated outright. Entries are ``(label, magnitude)``.
    """

    tol: float
    pair_violations: list = field(default_factory=list)
    price_violations: list = field(default_factory=list)
    arrival_violations: list = field(default_factory=list)
    dual_infeasible: list = field(default_factory=list)
    positive_dual_set: list = field(default_factory=list)
    zero_dual_set: list = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        allv = self.pair_violations + self.price_violations + self.arrival_violations + self.dual_infeasible
        return max((v for _, v in allv), default=0.0)

    @property
    def empty(self) -> bool:
        return not (self.pair_violations or self.price_violations
                    or self.arrival_violations or self.dual_infeasible)


def check_slackness(lp: StandardLp, sol: LpSolution, tol: float = 1e-6) -> SlacknessReport:
    """Check the primal/dual pair in ``sol`` against complementary slackness.

    A condition ``p > 0 -> q = 0`` is reported with magnitude ``min(p, |q|)``, so
    a violation is listed iff its magnitude exceeds ``tol``.
    """
    sol.require_optimal()
    A, b, c = lp.A, lp.b, lp.c
    x, y = sol.x, sol.y
    rep = SlacknessReport(tol)
    reduced = A.T @ y - c
    for j in range(A.shape[1]):
        if -reduced[j] > tol:
            rep.dual_infeasible.append((lp.variable_labels[j], float(-reduced[j])))
        mag = min(x[j], abs(reduced[j]))
        if mag > tol:
            rep.pair_violations.append((lp.variable_labels[j], float(mag)))
    slack = b - A @ x
    for i, lab in enumerate(lp.constraint_labels):
        mag = min(y[i], abs(slack[i]))
        if lab[0] in ALPHA_KINDS:
            (rep.positive_dual_set if y[i] > tol else rep.zero_dual_set).append(lab[1])
            if mag > tol:
                rep.price_violations.append((lab, float(mag)))
        elif mag > tol:
            rep.arrival_violations.append((lab, float(mag)))
    return rep


# -- text dump ----------------------------------------------------------------

def write_mps(lp: StandardLp, path: str | Path, name: str = "ADWORDS") -> None:
    """Write ``lp`` in free MPS format (minimizing ``-c.x``) for external cross-checks."""
    m, n = lp.A.shape
    rname = [f"R{i}" for i in range(m)]
    cname = [f"C{j}" for j in range(n)]
    lines = [f"NAME {name}", "ROWS", " N OBJ"]
    lines += [f" L {r}" for r in rname]
    lines.append("COLUMNS")
    for j in range(n):
        if lp.c[j] != 0:
            lines.append(f" {cname[j]} OBJ {-lp.c[j]!r}")
        for i in np.flatnonzero(lp.A[:, j]):
            lines.append(f" {cname[j]} {rname[i]} {lp.A[i, j]!r}")
    lines.append("RHS")
    for i in range(m):
        if lp.b[i] != 0:
            lines.append(f" RHS {rname[i]} {lp.b[i]!r}")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
