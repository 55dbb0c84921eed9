"""Instance types for budgeted allocation (AdWords) and packing LPs.

Both instance kinds are immutable. Ids are strings in files and are mapped
to dense integer indices (list position) for array-based code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

TOL = 1e-9


class InstanceFormatError(ValueError):
    """Raised when an instance document cannot be parsed."""


def _freeze_map(items) -> tuple[tuple[str, float], ...]:
    if isinstance(items, Mapping):
        items = items.items()
    return tuple(sorted((str(k), float(v)) for k, v in items))


@dataclass(frozen=True)
class Bidder:
    id: str
    budget: float


@dataclass(frozen=True)
class Query:
    """An arriving query. ``bids`` is stored as sorted ``(bidder_id, amount)`` pairs."""

    id: str
    bids: tuple[tuple[str, float], ...]
    arrival_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bids", _freeze_map(self.bids))

    @property
    def bid_map(self) -> dict[str, float]:
        return dict(self.bids)


@dataclass(frozen=True)
class AdwordsInstance:
    bidders: tuple[Bidder, ...]
    queries: tuple[Query, ...]
    small_bid_ratio: float = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "small_bid_ratio", small_bid_ratio(self))

    @classmethod
    def from_bids(
        cls,
        budgets: Mapping[str, float],
        bids: Sequence[Mapping[str, float]],
        query_ids: Sequence[str] | None = None,
    ) -> "AdwordsInstance":
        """Build an instance from ``{bidder: budget}`` and a list of bid maps."""
        bidders = [Bidder(str(u), float(b)) for u, b in budgets.items()]
        if query_ids is None:
            query_ids = [f"v{i + 1}" for i in range(len(bids))]
        queries = [
            Query(str(qid), b, arrival_index=i + 1)
            for i, (qid, b) in enumerate(zip(query_ids, bids))
        ]
        return cls(tuple(bidders), tuple(queries))

    @cached_property
    def bidder_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.bidders)}

    @cached_property
    def budgets(self) -> list[float]:
        return [b.budget for b in self.bidders]


@dataclass(frozen=True)
class AgentOption:
    """One option of an agent; ``consumption`` is sorted ``(resource_id, amount)`` pairs in raw units."""

    value: float
    consumption: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "consumption", _freeze_map(self.consumption))

    @property
    def consumption_map(self) -> dict[str, float]:
        return dict(self.consumption)


@dataclass(frozen=True)
class Resource:
    id: str
    capacity: float


@dataclass(frozen=True)
class Agent:
    id: str
    options: tuple[AgentOption, ...]


@dataclass(frozen=True)
class PlpInstance:
    resources: tuple[Resource, ...]
    agents: tuple[Agent, ...]

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.resources)

    @cached_property
    def q(self) -> int:
        return max((len(a.options) for a in self.agents), default=0)

    @cached_property
    def resource_index(self) -> dict[str, int]:
        return {r.id: j for j, r in enumerate(self.resources)}

    @cached_property
    def capacities(self) -> list[float]:
        return [r.capacity for r in self.resources]


Instance = Union[AdwordsInstance, PlpInstance]


def small_bid_ratio(instance: AdwordsInstance) -> float:
    """Largest ``w_uv / B_u`` over positive bids; 0 when there are none."""
    budgets = {b.id: b.budget for b in instance.bidders}
    ratio = 0.0
    for q in instance.queries:
        for u, w in q.bids:
            B = budgets.get(u)
            if w > 0 and B is not None and B > 0:
                ratio = max(ratio, w / B)
    return ratio


def validate(instance: Instance) -> list[str]:
    """Return human-readable violations; an empty list means well-formed."""
    if isinstance(instance, AdwordsInstance):
        return _validate_adwords(instance)
    if isinstance(instance, PlpInstance):
        return _validate_plp(instance)
    raise TypeError(f"not an instance: {type(instance).__name__}")


def _duplicates(ids: Iterable[str]) -> list[str]:
    seen, dup = set(), []
    for i in ids:
        if i in seen:
            dup.append(i)
        seen.add(i)
    return dup


def _validate_adwords(inst: AdwordsInstance) -> list[str]:
    out = []
    known = set()
    for b in inst.bidders:
        known.add(b.id)
        if not b.budget > 0 or not math.isfinite(b.budget):
            out.append(f"nonpositive budget: bidder {b.id!r} has budget {b.budget}")
    out += [f"duplicate bidder id {d!r}" for d in _duplicates(b.id for b in inst.bidders)]
    out += [f"duplicate query id {d!r}" for d in _duplicates(q.id for q in inst.queries)]
    if not inst.bidders:
        out.append("empty bidder list")
    if not inst.queries:
        out.append("empty query stream")
    prev = None
    for q in inst.queries:
        if prev is not None and q.arrival_index <= prev:
            out.append(f"arrival index not increasing at query {q.id!r}")
        prev = q.arrival_index
        for u, w in q.bids:
            if u not in known:
                out.append(f"dangling reference: query {q.id!r} bids on unknown bidder {u!r}")
            if w < 0 or not math.isfinite(w):
                out.append(f"negative bid: query {q.id!r} bids {w} on {u!r}")
    return out


def _validate_plp(inst: PlpInstance) -> list[str]:
    out = []
    known = set()
    for r in inst.resources:
        known.add(r.id)
        if not r.capacity > 0 or not math.isfinite(r.capacity):
            out.append(f"nonpositive capacity: resource {r.id!r} has capacity {r.capacity}")
    out += [f"duplicate resource id {d!r}" for d in _duplicates(r.id for r in inst.resources)]
    out += [f"duplicate agent id {d!r}" for d in _duplicates(a.id for a in inst.agents)]
    if not inst.agents:
        out.append("empty agent stream")
    for a in inst.agents:
        if not a.options:
            out.append(f"empty option list: agent {a.id!r}")
        for k, o in enumerate(a.options):
            if o.value < 0 or not math.isfinite(o.value):
                out.append(f"negative value: agent {a.id!r} option {k}")
            for j, amt in o.consumption:
                if j not in known:
                    out.append(f"dangling reference: agent {a.id!r} option {k} uses unknown resource {j!r}")
                if amt < 0 or not math.isfinite(amt):
                    out.append(f"negative consumption: agent {a.id!r} option {k} on {j!r}")
    return out


def to_plp(instance: AdwordsInstance) -> PlpInstance:
    """Reduce AdWords to a packing LP: bidders become resources with capacity ``B_u``.

    Each query becomes an agent with one option per positive bid; the option's
    value and its consumption of that bidder's budget both equal the bid.
    Queries with no positive bid are dropped. Options keep the instance's
    bidder order so option index ties match bidder index ties.
    """
    order = instance.bidder_index
    resources = tuple(Resource(b.id, b.budget) for b in instance.bidders)
    agents = []
    for q in instance.queries:
        pos = sorted(((u, w) for u, w in q.bids if w > 0), key=lambda uw: order[uw[0]])
        if not pos:
            continue
        agents.append(Agent(q.id, tuple(AgentOption(w, ((u, w),)) for u, w in pos)))
    return PlpInstance(resources, tuple(agents))


# -- file format -------------------------------------------------------------

def _check_keys(obj, allowed: set[str], required: set[str], where: str):
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise InstanceFormatError(f"{where}: unknown fields {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise InstanceFormatError(f"{where}: missing fields {sorted(missing)}")


def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InstanceFormatError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _num_map(obj, where: str) -> dict[str, float]:
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    return {str(k): _num(v, f"{where}[{k!r}]") for k, v in obj.items()}


def _list(obj, where: str) -> list:
    if not isinstance(obj, list):
        raise InstanceFormatError(f"{where}: expected a list")
    return obj


def instance_from_dict(doc: dict) -> Instance:
    if isinstance(doc, dict) and "bidders" in doc:
        _check_keys(doc, {"bidders", "queries"}, {"bidders", "queries"}, "instance")
        bidders = []
        for k, b in enumerate(_list(doc["bidders"], "bidders")):
            _check_keys(b, {"id", "budget"}, {"id", "budget"}, f"bidders[{k}]")
            bidders.append(Bidder(str(b["id"]), _num(b["budget"], f"bidders[{k}].budget")))
        queries = []
        for k, q in enumerate(_list(doc["queries"], "queries")):
            _check_keys(q, {"id", "bids"}, {"id", "bids"}, f"queries[{k}]")
            queries.append(Query(str(q["id"]), _num_map(q["bids"], f"queries[{k}].bids"), k + 1))
        return AdwordsInstance(tuple(bidders), tuple(queries))
    if isinstance(doc, dict) and "resources" in doc:
        _check_keys(doc, {"resources", "agents"}, {"resources", "agents"}, "instance")
        resources = []
        for k, r in enumerate(_list(doc["resources"], "resources")):
            _check_keys(r, {"id", "capacity"}, {"id", "capacity"}, f"resources[{k}]")
            resources.append(Resource(str(r["id"]), _num(r["capacity"], f"resources[{k}].capacity")))
        agents = []
        for k, a in enumerate(_list(doc["agents"], "agents")):
            _check_keys(a, {"id", "options"}, {"id", "options"}, f"agents[{k}]")
            opts = []
            for t, o in enumerate(_list(a["options"], f"agents[{k}].options")):
                where = f"agents[{k}].options[{t}]"
                _check_keys(o, {"value", "consumption"}, {"value", "consumption"}, where)
                opts.append(AgentOption(_num(o["value"], where + ".value"),
                                        _num_map(o["consumption"], where + ".consumption")))
            agents.append(Agent(str(a["id"]), tuple(opts)))
        return PlpInstance(tuple(resources), tuple(agents))
    raise InstanceFormatError("instance must contain either 'bidders' or 'resources'")


def instance_to_dict(instance: Instance) -> dict:
    if isinstance(instance, AdwordsInstance):
        return {
            "bidders": [{"id": b.id, "budget": b.budget} for b in instance.bidders],
            "queries": [{"id": q.id, "bids": dict(q.bids)} for q in instance.queries],
        }
    return {
        "resources": [{"id": r.id, "capacity": r.capacity} for r in instance.resources],
        "agents": [
            {"id": a.id, "options": [{"value": o.value, "consumption": dict(o.consumption)}
                                     for o in a.options]}
            for a in instance.agents
        ],
    }


def parse(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


def serialize(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), separators=(",", ":"))


def load(path: str | Path) -> Instance:
    return parse(Path(path).read_text(encoding="utf-8"))


def save(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(serialize(instance), encoding="utf-8")
