"""Instance generators: adversarial AdWords families with known optima and a
seeded IID packing-LP generator.

Randomness comes from numpy's PCG64 bit generator (``numpy.random.Generator``),
a documented, portable 64-bit permuted congruential generator, so a seed
pins an instance exactly.
"""

from __future__ import annotations

import numpy as np

from .model import Agent, AgentOption, AdwordsInstance, Bidder, PlpInstance, Query, Resource


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _phase_length(eps_b: float) -> int:
    if not 0 < eps_b <= 1:
        raise ValueError(f"granularity must lie in (0, 1]: {eps_b}")
    inv = 1.0 / eps_b
    r = round(inv)
    if abs(inv - r) > 1e-9 * inv:
        raise ValueError(f"1/granularity must be an integer, got {inv}")
    return int(r)


def gen_greedy_worstcase(eps_b: float) -> AdwordsInstance:
    """Two unit-budget bidders; ``1/eps_b`` queries bid on both, then ``1/eps_b`` bid on ``u1`` only.

    Lowest-index tie-breaking sends the first phase to ``u1``, so greedy earns
    1 while the offline optimum is 2.
    """
    L = _phase_length(eps_b)
    bidders = (Bidder("u1", 1.0), Bidder("u2", 1.0))
    bids = [{"u1": eps_b, "u2": eps_b}] * L + [{"u1": eps_b}] * L
    queries = tuple(Query(f"v{i + 1}", b, i + 1) for i, b in enumerate(bids))
    return AdwordsInstance(bidders, queries)


def gen_msvv_worstcase(n_bidders: int, eps_b: float) -> AdwordsInstance:
    """Upper-triangular family: phase ``p`` has ``1/eps_b`` queries bidding ``eps_b`` on ``u_p..u_N``.

    Assigning phase ``p`` to ``u_p`` earns ``N``. Bidders are listed ``u_N``
    first so that lowest-index ties always favor the bidder needed latest.
    """
    N = int(n_bidders)
    if N < 2:
        raise ValueError(f"need at least 2 bidders, got {n_bidders}")
    L = _phase_length(eps_b)
    bidders = tuple(Bidder(f"u{p}", 1.0) for p in range(N, 0, -1))
    queries = []
    for p in range(1, N + 1):
        bid = {f"u{s}": eps_b for s in range(p, N + 1)}
        for r in range(L):
            k = len(queries) + 1
            queries.append(Query(f"p{p}q{r + 1}", bid, k))
    return AdwordsInstance(bidders, tuple(queries))


def gen_iid(seed: int, n: int, m: int, n_types: int, q: int, capacity_scale: float,
            value_scale: float = 1.0, unit: float = 1.0) -> PlpInstance:
    """IID packing-LP stream over a finite pool of agent types.

    ``n_types`` types are drawn once, each with ``q`` options whose values are
    uniform on ``[0.5, 1.5] * value_scale`` and whose consumption of every
    resource is uniform on ``[0.5, 1.5] * unit``. Then ``n`` agents are drawn
    uniformly from the pool. Every capacity is
    ``capacity_scale * n * mean_total``, where ``mean_total`` is the pool's
    mean per-option consumption summed over resources.
    """
    if n_types < 1 or q < 2 or n < 10 or m < 1:
        raise ValueError(f"invalid parameters: n={n}, m={m}, n_types={n_types}, q={q}")
    if not capacity_scale > 0:
        raise ValueError(f"capacity_scale must be positive: {capacity_scale}")
    rng = _rng(seed)
    values = rng.uniform(0.5, 1.5, size=(n_types, q)) * value_scale
    cons = rng.uniform(0.5, 1.5, size=(n_types, q, m)) * unit
    kinds = rng.integers(0, n_types, size=n)
    rid = [f"r{j + 1}" for j in range(m)]
    mean_total = float(cons.sum(axis=2).mean())
    cap = capacity_scale * n * mean_total
    resources = tuple(Resource(r, cap) for r in rid)
    types = [
        tuple(AgentOption(float(values[t, o]), tuple(zip(rid, map(float, cons[t, o]))))
              for o in range(q))
        for t in range(n_types)
    ]
    agents = tuple(Agent(f"a{i + 1}", types[k]) for i, k in enumerate(kinds.tolist()))
    return PlpInstance(resources, agents)


def gen_random_adwords(seed: int, n_bidders: int = 4, n_queries: int = 200, n_types: int = 12,
                       max_bid_ratio: float = 0.02, density: float = 0.6,
                       budget_range: tuple[float, float] = (1.0, 1.0)) -> AdwordsInstance:
    """Random small-bid instance: queries drawn from a pool of bid vectors.

    Every positive bid is at most ``max_bid_ratio`` of its bidder's budget, and
    every query type bids on at least one bidder. Drawing from a finite pool
    keeps the aggregated offline LP small.
    """
    rng = _rng(seed)
    budgets = rng.uniform(*budget_range, size=n_bidders)
    ids = [f"u{i + 1}" for i in range(n_bidders)]
    pool = []
    for _ in range(n_types):
        mask = rng.random(n_bidders) < density
        if not mask.any():
            mask[rng.integers(n_bidders)] = True
        ratios = rng.uniform(0.1, 1.0, size=n_bidders) * max_bid_ratio
        pool.append({ids[u]: float(ratios[u] * budgets[u]) for u in np.flatnonzero(mask)})
    kinds = rng.integers(0, n_types, size=n_queries)
    bidders = tuple(Bidder(i, float(b)) for i, b in zip(ids, budgets))
    queries = tuple(Query(f"v{k + 1}", pool[t], k + 1) for k, t in enumerate(kinds.tolist()))
    return AdwordsInstance(bidders, queries)
