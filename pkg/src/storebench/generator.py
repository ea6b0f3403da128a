"""Deterministic synthetic packages.

Every generator is a pure function of its parameters.  A small hidden event
graph (entities with attribute timelines) is sampled, replayed as an ordered
experience stream, and each experience becomes one group of candidate writes:
a broad but expensive raw span, a cheap narrow atomic fact, optionally an
entity summary, and, for transitions, a tombstone and a compound update.
Evidence-unit weights are assigned after the stream is complete, from which
facts and transitions are still current at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

from .package import (
    Candidate,
    CandidateKind,
    EvidenceUnit,
    Package,
    UnitClass,
    quantize,
    serialize_package,
)
from .rng import XorShift64Star

DISTRIBUTIONS = ("base", "update_chain", "temporal_interval")
AUDIT_BUDGETS = (1, 2, 4, 6, 8, 16)
SWEEP_BUDGETS = (2, 4, 8, 16)
FRACTION_BUDGETS = (0.01, 0.02, 0.05, 0.10, 0.20)
TOTAL_SCALE = 80


class GeneratorError(ValueError):
    pass


def budget_from_fraction(fraction: float, total_scale: float = TOTAL_SCALE) -> float:
    """Absolute budget for a storage fraction: ``ceil(fraction * total_scale)``."""
    return float(math.ceil(fraction * total_scale - 1e-9))


_ENTITIES = ("alice", "bob", "carol", "dana", "eli", "fay", "gus", "hana", "ivan", "june")
_ATTRIBUTES = ("city", "diet", "employer", "phone", "gym", "car", "team", "doctor")
_VALUES = (
    "paris", "berlin", "oslo", "vegan", "pescatarian", "acme", "globex", "initech",
    "red", "blue", "green", "north", "south", "delta", "omega", "sigma", "lima", "kilo",
)
_EVENTS = ("dinner", "flight", "meeting", "concert", "checkup", "workshop", "hike", "call")


def _default_costs() -> dict[str, tuple[float, float]]:
    return {
        "raw_span": (1.5, 3.5),
        "atomic_fact": (0.2, 0.5),
        "entity_summary": (0.6, 1.2),
        "tombstone": (0.2, 0.5),
        "compound_update": (0.4, 0.9),
        "temporal_event": (0.25, 0.6),
    }


def _default_weights() -> dict[str, tuple[float, float]]:
    return {
        "current": (0.8, 1.2),
        "stale": (0.1, 0.3),
        "validity_current": (0.8, 1.2),
        "validity_stale": (0.2, 0.4),
        "temporal": (0.1, 0.3),
        "event": (0.1, 0.6),
    }


@dataclass(frozen=True)
class GeneratorParams:
    seed: int = 0
    num_experiences: int = 12
    distribution: str = "base"
    entity_count: int = 4
    attributes_per_entity: int = 2
    update_probability: float = 0.5
    delete_fraction: float = 0.15
    summary_probability: float = 0.6
    temporal_probability: float = 0.5
    chain_slots: int = 3
    max_candidates_per_group: int = 5
    cost_ranges: Mapping[str, tuple[float, float]] = field(default_factory=_default_costs)
    weight_ranges: Mapping[str, tuple[float, float]] = field(default_factory=_default_weights)
    raw_coverage: tuple[float, float] = (0.6, 1.0)
    summary_coverage: tuple[float, float] = (0.4, 0.8)

    @classmethod
    def from_overrides(cls, overrides: Mapping[str, Any] | None = None, **kw: Any) -> GeneratorParams:
        data = dict(overrides or {})
        data.update(kw)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise GeneratorError(f"unknown generator parameters: {sorted(unknown)}")
        base = cls()
        for name in ("cost_ranges", "weight_ranges"):
            if name in data:
                merged = dict(getattr(base, name))
                merged.update({k: tuple(v) for k, v in data[name].items()})
                data[name] = merged
        for name in ("raw_coverage", "summary_coverage"):
            if name in data:
                data[name] = tuple(data[name])
        return replace(base, **data)

    def validate(self) -> None:
        if self.num_experiences < 1:
            raise GeneratorError("num_experiences must be at least 1")
        if self.distribution not in DISTRIBUTIONS:
            raise GeneratorError(f"unknown distribution {self.distribution!r}; expected one of {DISTRIBUTIONS}")
        if self.entity_count < 1 or self.attributes_per_entity < 1:
            raise GeneratorError("entity_count and attributes_per_entity must be positive")
        if not 2 <= self.max_candidates_per_group <= 5:
            raise GeneratorError("max_candidates_per_group must be in [2, 5]")
        for name in ("update_probability", "delete_fraction", "summary_probability", "temporal_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise GeneratorError(f"{name} must be a probability, got {p}")
        for kind, (lo, hi) in self.cost_ranges.items():
            if not 0 < lo <= hi:
                raise GeneratorError(f"cost range for {kind} must be positive with lo <= hi")
        for name, (lo, hi) in self.weight_ranges.items():
            if not 0 <= lo <= hi:
                raise GeneratorError(f"weight range {name} must be nonnegative with lo <= hi")
        for name in ("raw_coverage", "summary_coverage"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi <= 1:
                raise GeneratorError(f"{name} must lie in [0, 1] with lo <= hi")


@dataclass
class _Experience:
    t: int
    action: str  # set | update | delete | event
    slot: tuple[int, int] | None
    value: str = ""
    old_value: str = ""
    units: dict[str, str] = field(default_factory=dict)  # role -> unit id


def _timeline_base(p: GeneratorParams, rng: XorShift64Star, slots) -> list[tuple[str, Any]]:
    current: dict[Any, bool] = {}
    plan = []
    for _ in range(p.num_experiences):
        slot = rng.choice(slots)
        if not current.get(slot):
            plan.append(("set", slot))
            current[slot] = True
        elif rng.bernoulli(p.update_probability):
            if rng.bernoulli(p.delete_fraction):
                plan.append(("delete", slot))
                current[slot] = False
            else:
                plan.append(("update", slot))
        else:
            plan.append(("event", slot))
    return plan


def _timeline_chain(p: GeneratorParams, rng: XorShift64Star, slots) -> list[tuple[str, Any]]:
    order = list(slots)
    rng.shuffle(order)
    queues: list[list[tuple[str, Any]]] = []
    remaining = p.num_experiences
    for slot in order[: max(1, p.chain_slots)]:
        if remaining < 3:
            break
        length = rng.randint(3, min(5, remaining))  # superseded 2-4 times
        queues.append([("set", slot)] + [("update", slot)] * (length - 1))
        remaining -= length
    others = order[max(1, p.chain_slots):] or order
    filler = []
    seen = set()
    for _ in range(remaining):
        slot = rng.choice(others)
        filler.append(("event" if slot in seen else "set", slot))
        seen.add(slot)
    if filler:
        queues.append(filler)
    plan = []
    while any(queues):
        live = [q for q in queues if q]
        total = sum(len(q) for q in live)
        pick = rng.randint(0, total - 1)
        for q in live:
            if pick < len(q):
                plan.append(q.pop(0))
                break
            pick -= len(q)
    return plan


def _timeline(p: GeneratorParams, rng: XorShift64Star) -> list[tuple[str, Any]]:
    slots = [(e, a) for e in range(p.entity_count) for a in range(p.attributes_per_entity)]
    if p.distribution == "update_chain":
        return _timeline_chain(p, rng, slots)
    return _timeline_base(p, rng, slots)


def _names(slot: tuple[int, int]) -> tuple[str, str]:
    e, a = slot
    return _ENTITIES[e % len(_ENTITIES)], _ATTRIBUTES[a % len(_ATTRIBUTES)]


def generate_small(params: GeneratorParams) -> Package:
    params.validate()
    p = params
    rng = XorShift64Star(p.seed)
    cost_rng = rng.spawn(1)
    cov_rng = rng.spawn(2)
    weight_rng = rng.spawn(3)
    plan = _timeline(p, rng)
    interval = p.distribution == "temporal_interval"

    def cost(kind: str) -> float:
        lo, hi = p.cost_ranges[kind]
        return quantize(cost_rng.uniform(lo, hi))

    def strength(rng_range: tuple[float, float]) -> float:
        return quantize(cov_rng.uniform(*rng_range))

    units: dict[str, tuple[UnitClass, str, str]] = {}  # id -> (class, description, weight role)
    candidates: list[Candidate] = []
    values: dict[Any, str] = {}
    last_transition: dict[Any, str] = {}  # slot -> unit id of its latest transition evidence
    current_fact: dict[Any, str] = {}  # slot -> unit id of the fact that is current so far
    entity_facts: dict[int, list[str]] = {}
    experiences: list[_Experience] = []

    for t, (action, slot) in enumerate(plan):
        ent, attr = _names(slot)
        tag = f"{t:02d}"
        ex = _Experience(t, action, slot)
        old = values.get(slot, "")
        if action in ("set", "update"):
            choices = [v for v in _VALUES if v != old]
            ex.value = rng.choice(choices)
            ex.old_value = old
            values[slot] = ex.value
        elif action == "delete":
            ex.old_value = old
            values.pop(slot, None)

        fact_id = f"u{tag}.fact"
        time_id = f"u{tag}.time"
        inv_id = f"u{tag}.inv"
        abst_id = f"u{tag}.abst"

        if action in ("set", "update"):
            units[fact_id] = (UnitClass.FACT, f"{ent} {attr} is {ex.value}", "current")
            ex.units["fact"] = fact_id
            if slot in current_fact:
                units[current_fact[slot]] = units[current_fact[slot]][:2] + ("stale",)
            current_fact[slot] = fact_id
        elif action == "event":
            event = rng.choice(_EVENTS)
            ex.value = event
            units[fact_id] = (UnitClass.PREFERENCE, f"{ent} had a {event} about {attr}", "event")
            ex.units["fact"] = fact_id
        if action in ("update", "delete"):
            units[inv_id] = (UnitClass.INVALIDATION, f"{ent} {attr} {old} is no longer current", "validity_current")
            ex.units["inv"] = inv_id
            if slot in last_transition:
                prev = last_transition[slot]
                units[prev] = units[prev][:2] + ("validity_stale",)
            last_transition[slot] = inv_id
        if action == "delete":
            units[abst_id] = (UnitClass.ABSTENTION, f"{ent} {attr} was removed; abstain", "validity_current")
            ex.units["abst"] = abst_id
            if slot in current_fact:
                fid = current_fact.pop(slot)
                units[fid] = units[fid][:2] + ("stale",)
        needs_time = action in ("update", "delete") or interval or rng.bernoulli(p.temporal_probability)
        if needs_time:
            what = "starts" if interval else "noted"
            units[time_id] = (UnitClass.TEMPORAL, f"{ent} {attr} {what} at step {t}", "temporal")
            ex.units["time"] = time_id
        if "fact" in ex.units:
            entity_facts.setdefault(slot[0], []).append(ex.units["fact"])
        experiences.append(ex)

    # An earlier transition on the same slot is demoted once a later one lands; a
    # later deletion also demotes the abstention only when the slot is re-set.
    for ex in experiences:
        if ex.action == "delete" and "abst" in ex.units and values.get(ex.slot):
            aid = ex.units["abst"]
            units[aid] = units[aid][:2] + ("validity_stale",)

    for ex in experiences:
        ent, attr = _names(ex.slot)
        tag = f"{ex.t:02d}"
        gid = ex.t
        u = ex.units
        group: list[Candidate] = []

        raw_row = {}
        for role in ("fact", "time"):
            if role in u:
                raw_row[u[role]] = strength(p.raw_coverage)
        if ex.action == "update":
            text = f"on step {ex.t} the user mentioned that {ent} {attr} changed from {ex.old_value} to {ex.value}"
        elif ex.action == "delete":
            text = f"on step {ex.t} the user said {ent} no longer has a {attr} ({ex.old_value}) on record"
        elif ex.action == "event":
            text = f"on step {ex.t} the user described a {ex.value} with {ent} related to their {attr}"
        else:
            text = f"on step {ex.t} the user mentioned that {ent} {attr} is {ex.value}"
        if not raw_row:
            # a bare deletion turn still carries its step marker
            raw_row[u["time"]] = strength(p.raw_coverage)
        group.append(Candidate(f"e{tag}.raw", gid, CandidateKind.RAW_SPAN, text, raw_row, cost("raw_span")))

        if "fact" in u:
            group.append(
                Candidate(f"e{tag}.fact", gid, CandidateKind.ATOMIC_FACT, f"{ent} {attr} {ex.value}",
                          {u["fact"]: 1.0}, cost("atomic_fact"))
            )
        if "inv" in u:
            row = {u["inv"]: 1.0}
            if "abst" in u:
                row[u["abst"]] = 1.0
            group.append(
                Candidate(f"e{tag}.tomb", gid, CandidateKind.TOMBSTONE, f"{ent} {attr} {ex.old_value} invalid",
                          row, cost("tombstone"))
            )
        if ex.action == "update":
            group.append(
                Candidate(f"e{tag}.update", gid, CandidateKind.COMPOUND_UPDATE,
                          f"{ent} {attr} {ex.old_value} superseded by {ex.value}",
                          {u["fact"]: 1.0, u["inv"]: 1.0}, cost("compound_update"))
            )
        if interval and "time" in u and "fact" in u and ex.action in ("set", "update"):
            group.append(
                Candidate(f"e{tag}.temporal", gid, CandidateKind.TEMPORAL_EVENT,
                          f"{ent} {attr} {ex.value} from step {ex.t}",
                          {u["fact"]: 1.0, u["time"]: 1.0}, cost("temporal_event"))
            )
        want_summary = cov_rng.bernoulli(p.summary_probability)
        if want_summary and len(group) < p.max_candidates_per_group:
            row = {}
            for role in ("fact", "time"):
                if role in u:
                    row[u[role]] = strength(p.summary_coverage)
            earlier = [f for f in entity_facts.get(ex.slot[0], []) if f < f"u{tag}"]
            if earlier:
                row[earlier[-1]] = strength(p.summary_coverage)
            if row:
                group.append(
                    Candidate(f"e{tag}.summary", gid, CandidateKind.ENTITY_SUMMARY,
                              f"summary of {ent} as of step {ex.t}", row, cost("entity_summary"))
                )
        # keep the candidate count within the cap, dropping the least distinctive kinds last-in first
        drop_order = [CandidateKind.ENTITY_SUMMARY, CandidateKind.TEMPORAL_EVENT, CandidateKind.RAW_SPAN,
                      CandidateKind.TOMBSTONE]
        for kind in drop_order:
            if len(group) <= p.max_candidates_per_group:
                break
            group = [c for c in group if c.kind != kind]
        candidates.extend(group)

    evidence = []
    for uid, (ucls, desc, role) in units.items():
        lo, hi = p.weight_ranges[role]
        evidence.append(EvidenceUnit(uid, desc, ucls, quantize(weight_rng.uniform(lo, hi))))

    meta = {"generator": "generate_small", "seed": p.seed, "distribution": p.distribution,
            "num_experiences": p.num_experiences}
    pid = f"{p.distribution}-{p.seed:06d}"
    return Package.build(pid, candidates, evidence, metadata=meta)


def generate_stress(params: GeneratorParams) -> Package:
    """Validity-stress package (``update_chain`` or ``temporal_interval``; ``base`` is allowed too)."""
    if params.distribution not in DISTRIBUTIONS:
        raise GeneratorError(f"unknown distribution {params.distribution!r}; expected one of {DISTRIBUTIONS}")
    pkg = generate_small(params)
    return replace(pkg, metadata={**pkg.metadata, "generator": "generate_stress"})


def adversarial_density_instance(eta: float) -> Package:
    """One experience where max-density choice loses all but ``eta`` of OPT at budget 2."""
    if not 0 < eta <= 1:
        raise GeneratorError("eta must lie in (0, 1]")
    delta = quantize(min(eta / 2, 0.25))
    cands = [
        Candidate("a", 0, CandidateKind.ATOMIC_FACT, "cheap narrow note", {"r": quantize(2 * delta)}, delta),
        Candidate("b", 0, CandidateKind.RAW_SPAN, "full raw span", {"r": 1.0}, 1.0),
    ]
    unit = EvidenceUnit("r", "the single required evidence unit", UnitClass.FACT, 1.0)
    meta = {"generator": "adversarial_density_instance", "eta": quantize(eta), "delta": delta, "budget": 2.0}
    return Package.build(f"adversarial-eta-{quantize(eta):.6f}", cands, [unit], metadata=meta)


def generate_audit_suite(n: int, seed: int = 0) -> list[tuple[Package, float]]:
    """Small enumerable instances (<= 8 groups, <= 4 candidates per group) with sampled budgets."""
    if n < 1:
        raise GeneratorError("audit suite needs n >= 1")
    rng = XorShift64Star(seed)
    out = []
    for i in range(n):
        params = GeneratorParams(
            seed=rng.next_u64() >> 16,
            num_experiences=rng.randint(2, 8),
            distribution=DISTRIBUTIONS[rng.randint(0, len(DISTRIBUTIONS) - 1)],
            entity_count=rng.randint(1, 3),
            max_candidates_per_group=4,
        )
        pkg = generate_stress(params)
        pkg = replace(pkg, package_id=f"audit-{seed}-{i:05d}",
                      metadata={**pkg.metadata, "generator": "generate_audit_suite", "suite_seed": seed, "row": i})
        out.append((pkg, float(AUDIT_BUDGETS[rng.randint(0, len(AUDIT_BUDGETS) - 1)])))
    return out


def package_digest(pkg: Package) -> str:
    import hashlib

    return hashlib.sha256(serialize_package(pkg)).hexdigest()
