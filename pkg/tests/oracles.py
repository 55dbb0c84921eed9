"""Independent reference computations used by the tests.

Nothing here calls the package's solver or engines; each oracle works from
the raw instance data or a closed form.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

E = math.e
K = E / (E - 1.0)


def vertex_enumeration(c, A, b, tol: float = 1e-9) -> float:
    """Optimum of ``max c.x, A x <= b, x >= 0`` by trying every basis.

    All ``C(m + n, n)`` choices of ``n`` tight rows from ``[A; -I]`` are solved
    in one batched call; singular systems are discarded. Returns ``-inf`` if
    no vertex is feasible. Only suitable for bounded LPs of small size.
    """
    c, A, b = (np.asarray(v, dtype=float) for v in (c, A, b))
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    subsets = np.array(list(itertools.combinations(range(m + n), n)))
    M = G[subsets]
    rhs = h[subsets]
    keep = np.abs(np.linalg.det(M)) > 1e-12
    xs = np.linalg.solve(M[keep], rhs[keep][..., None])[..., 0]
    feas = np.all(xs @ G.T <= h + tol, axis=1)
    if not feas.any():
        return -math.inf
    return float((xs[feas] @ c).max())


def adwords_certificate_ok(instance, x: dict, alpha: dict, beta: dict, tol: float = 1e-7) -> tuple[float, float]:
    """Verify an AdWords primal/dual pair from instance data alone.

    ``x`` maps ``(bidder, query)`` to an assignment fraction, ``alpha`` and
    ``beta`` map bidder and query ids to prices. Raises ``AssertionError`` on
    any infeasibility and returns ``(primal, dual)``.
    """
    spend = {bd.id: 0.0 for bd in instance.bidders}
    for q in instance.queries:
        bids = q.bid_map
        tot = 0.0
        for u, w in bids.items():
            xv = x.get((u, q.id), 0.0)
            assert xv >= -tol
            tot += xv
            spend[u] += w * xv
            if w > 0:
                assert w * alpha[u] + beta.get(q.id, 0.0) >= w - tol, (u, q.id)
        assert tot <= 1 + tol
        assert beta.get(q.id, 0.0) >= -tol
    for bd in instance.bidders:
        assert spend[bd.id] <= bd.budget + tol
        assert alpha[bd.id] >= -tol
    primal = sum(w * x.get((u, q.id), 0.0) for q in instance.queries for u, w in q.bids)
    dual = sum(bd.budget * alpha[bd.id] for bd in instance.bidders) + sum(beta.values())
    return primal, dual


def greedy_worstcase_values(eps_b: float) -> dict:
    """Closed form for the two-bidder family: greedy 1, msvv 3/2, OPT 2.

    MSVV splits the shared phase evenly (1/2 each), then ``u1`` collects its
    remaining 1/2 from the exclusive phase.
    """
    return {"opt": 2.0, "greedy": 1.0, "msvv": 1.5}


def msvv_worstcase_greedy(N: int) -> float:
    """Greedy value on the upper-triangular family with ``u_N`` listed first.

    Phase ``p`` exhausts ``u_{N-p+1}``; once the surviving range ``p..N-p+1``
    is empty nothing more is earned, so greedy earns ``ceil(N / 2)``.
    """
    return float(math.ceil(N / 2))


def msvv_worstcase_fluid(N: int) -> float:
    """Water-filling value of MSVV on the upper-triangular family, infinitesimal bids.

    Bidders ``p..N`` enter phase ``p`` with equal spend, so the phase is split
    evenly among them until they fill up.
    """
    level, total = 0.0, 0.0
    for p in range(1, N + 1):
        active = N - p + 1
        take = min(1.0, active * (1.0 - level))
        total += take
        level += take / active
    return total


def one_minus_inv_e() -> float:
    return 1.0 - 1.0 / E


def riemann_single_bid(w: float) -> float:
    """``f(w) - alpha`` after one MSVV step of normalized size ``w`` from zero spend."""
    return (math.exp(w) - 1.0) / (E - 1.0) - K * math.exp(-1.0) * w


def log_term(n: int, m: int, q: int) -> float:
    return (m + 1) * (math.log(n) + math.log(q))
