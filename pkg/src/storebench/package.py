"""Package data model: candidates, groups, evidence units, costs, feasibility.

A package is the frozen evaluation object. Candidates are grouped by the
experience they represent; a store may keep at most ``k`` candidates per group
and must fit a single storage budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Mapping

DECIMALS = 6
BUDGET_TOL = 1e-9


class CandidateKind(str, Enum):
    RAW_SPAN = "raw_span"
    ATOMIC_FACT = "atomic_fact"
    ENTITY_SUMMARY = "entity_summary"
    GRAPH_EDGE = "graph_edge"
    TEMPORAL_EVENT = "temporal_event"
    RULE = "rule"
    TOMBSTONE = "tombstone"
    COMPOUND_UPDATE = "compound_update"
    EXTERNAL = "external"


class UnitClass(str, Enum):
    FACT = "fact"
    TEMPORAL = "temporal"
    PREFERENCE = "preference"
    INVALIDATION = "invalidation"
    ABSTENTION = "abstention"
    PROVENANCE = "provenance"


VALIDITY_CLASSES = frozenset({UnitClass.INVALIDATION, UnitClass.ABSTENTION})
VALIDITY_KINDS = frozenset({CandidateKind.TOMBSTONE, CandidateKind.COMPOUND_UPDATE})


class CostRule(str, Enum):
    WORD = "word"
    BYTE_OVERHEAD = "byte_overhead"

    @classmethod
    def parse(cls, value: str | CostRule) -> CostRule:
        if isinstance(value, CostRule):
            return value
        return cls(value.replace("-", "_"))


BYTE_OVERHEAD_BASE = 8
BYTE_OVERHEAD_DIVISOR = 24


class PackageError(ValueError):
    """Base class for package-level data errors."""


class InvalidCandidateError(PackageError):
    pass


class UnknownCandidateError(PackageError, KeyError):
    def __str__(self) -> str:
        return ValueError.__str__(self)


class PackageParseError(PackageError):
    def __init__(self, message: str, path: str = "", offset: int | None = None):
        self.path = path
        self.offset = offset
        where = []
        if path:
            where.append(f"at {path}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


def quantize(x: float) -> float:
    return round(float(x), DECIMALS)


@dataclass(frozen=True)
class EvidenceUnit:
    unit_id: str
    description: str = ""
    unit_class: UnitClass = UnitClass.FACT
    weight: float = 1.0

    @property
    def is_validity(self) -> bool:
        return self.unit_class in VALIDITY_CLASSES


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    group_id: int
    kind: CandidateKind
    text: str
    coverage_row: Mapping[str, float] = field(default_factory=dict)
    explicit_cost: float | None = None
    # Derived from coverage when the candidate is placed in a package.
    validity_flag: bool = False


@dataclass(frozen=True)
class Group:
    group_id: int
    members: tuple[str, ...]


@dataclass(frozen=True)
class Store:
    selected: frozenset[str]
    source: str = "solver"

    @classmethod
    def of(cls, ids: Iterable[str], source: str = "solver") -> Store:
        return cls(frozenset(ids), source)

    def sorted_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.selected))

    def __len__(self) -> int:
        return len(self.selected)


def word_count(text: str) -> int:
    return max(1, len(text.split()))


def rule_cost(text: str, rule: CostRule | str = CostRule.WORD) -> float:
    rule = CostRule.parse(rule)
    if rule is CostRule.WORD:
        return float(word_count(text))
    nbytes = len(text.encode("utf-8"))
    return float(BYTE_OVERHEAD_BASE + math.ceil(nbytes / BYTE_OVERHEAD_DIVISOR))


def candidate_cost(cand: Candidate, rule: CostRule | str = CostRule.WORD) -> float:
    """Storage cost of a candidate; an explicit cost overrides the rule."""
    if cand.explicit_cost is not None:
        return float(cand.explicit_cost)
    if not cand.text.strip():
        raise InvalidCandidateError(
            f"candidate {cand.candidate_id!r} has empty text and no explicit cost"
        )
    return rule_cost(cand.text, rule)


@dataclass(frozen=True)
class Compiled:
    """Index-based view of a package used by the solvers and writers."""

    ids: tuple[str, ...]
    index: dict[str, int]
    costs: tuple[float, ...]
    rows: tuple[tuple[tuple[int, float], ...], ...]
    weights: tuple[float, ...]
    unit_ids: tuple[str, ...]
    group_of: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    group_ids: tuple[int, ...]


@dataclass(frozen=True)
class Package:
    package_id: str
    candidates: tuple[Candidate, ...]
    groups: tuple[Group, ...]
    evidence_units: tuple[EvidenceUnit, ...]
    objective_kind: str = "clipped"
    metadata: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        package_id: str,
        candidates: Iterable[Candidate],
        evidence_units: Iterable[EvidenceUnit],
        *,
        groups: Iterable[Group] | None = None,
        objective_kind: str = "clipped",
        metadata: Mapping[str, Any] | None = None,
    ) -> Package:
        """Assemble a package in canonical order, deriving groups and validity flags."""
        units = tuple(sorted(evidence_units, key=lambda u: u.unit_id))
        validity_units = {u.unit_id for u in units if u.is_validity}
        cands = []
        for c in sorted(candidates, key=lambda c: c.candidate_id):
            flag = any(v > 0 and r in validity_units for r, v in c.coverage_row.items())
            row = {r: c.coverage_row[r] for r in sorted(c.coverage_row)}
            cands.append(
                Candidate(
                    candidate_id=c.candidate_id,
                    group_id=c.group_id,
                    kind=CandidateKind(c.kind),
                    text=c.text,
                    coverage_row=row,
                    explicit_cost=c.explicit_cost,
                    validity_flag=flag,
                )
            )
        if groups is None:
            members: dict[int, list[str]] = {}
            for c in cands:
                members.setdefault(c.group_id, []).append(c.candidate_id)
            grp = tuple(Group(g, tuple(sorted(m))) for g, m in sorted(members.items()))
        else:
            grp = tuple(
                Group(g.group_id, tuple(sorted(g.members)))
                for g in sorted(groups, key=lambda g: g.group_id)
            )
        return cls(
            package_id=package_id,
            candidates=tuple(cands),
            groups=grp,
            evidence_units=units,
            objective_kind=objective_kind,
            metadata=dict(metadata or {}),
        )

    @cached_property
    def by_id(self) -> dict[str, Candidate]:
        return {c.candidate_id: c for c in self.candidates}

    @cached_property
    def unit_by_id(self) -> dict[str, EvidenceUnit]:
        return {u.unit_id: u for u in self.evidence_units}

    @property
    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(c.candidate_id for c in self.candidates)

    @property
    def weights(self) -> dict[str, float]:
        return {u.unit_id: u.weight for u in self.evidence_units}

    @property
    def total_weight(self) -> float:
        return sum(u.weight for u in self.evidence_units)

    def candidate(self, cid: str) -> Candidate:
        try:
            return self.by_id[cid]
        except KeyError:
            raise UnknownCandidateError(f"unknown candidate id {cid!r}") from None

    def cost(self, cid: str, rule: CostRule | str = CostRule.WORD) -> float:
        return candidate_cost(self.candidate(cid), rule)

    def compiled(self, rule: CostRule | str = CostRule.WORD) -> Compiled:
        rule = CostRule.parse(rule)
        cache = self.__dict__.setdefault("_compiled_cache", {})
        if rule not in cache:
            cache[rule] = _compile(self, rule)
        return cache[rule]

    def subpackage(self, keep: Iterable[str], suffix: str = "sub") -> Package:
        """Package restricted to ``keep``; emptied groups are dropped."""
        keep = set(keep)
        cands = [c for c in self.candidates if c.candidate_id in keep]
        groups = [
            Group(g.group_id, tuple(m for m in g.members if m in keep)) for g in self.groups
        ]
        return Package.build(
            f"{self.package_id}/{suffix}",
            cands,
            self.evidence_units,
            groups=[g for g in groups if g.members],
            objective_kind=self.objective_kind,
            metadata=self.metadata,
        )


def _compile(pkg: Package, rule: CostRule) -> Compiled:
    ids = pkg.candidate_ids
    index = {cid: i for i, cid in enumerate(ids)}
    unit_ids = tuple(u.unit_id for u in pkg.evidence_units)
    uidx = {u: j for j, u in enumerate(unit_ids)}
    rows = tuple(
        tuple((uidx[r], float(a)) for r, a in c.coverage_row.items() if a > 0 and r in uidx)
        for c in pkg.candidates
    )
    costs = tuple(candidate_cost(c, rule) for c in pkg.candidates)
    group_ids = tuple(g.group_id for g in pkg.groups)
    groups = tuple(tuple(index[m] for m in g.members) for g in pkg.groups)
    group_of = [0] * len(ids)
    for gi, members in enumerate(groups):
        for i in members:
            group_of[i] = gi
    return Compiled(
        ids=ids,
        index=index,
        costs=costs,
        rows=rows,
        weights=tuple(float(u.weight) for u in pkg.evidence_units),
        unit_ids=unit_ids,
        group_of=tuple(group_of),
        groups=groups,
        group_ids=group_ids,
    )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    candidate_id: str | None = None
    unit_id: str | None = None


def validate_package(pkg: Package) -> list[Violation]:
    """Return every invariant violation; an empty list means the package is valid."""
    out: list[Violation] = []

    seen: set[str] = set()
    for c in pkg.candidates:
        if c.candidate_id in seen:
            out.append(Violation("duplicate_candidate", f"duplicate candidate id {c.candidate_id!r}", c.candidate_id))
        seen.add(c.candidate_id)
    if [c.candidate_id for c in pkg.candidates] != sorted(seen) and len(seen) == len(pkg.candidates):
        out.append(Violation("order", "candidates are not in canonical order"))

    unit_ids = [u.unit_id for u in pkg.evidence_units]
    if len(set(unit_ids)) != len(unit_ids):
        dupes = sorted({u for u in unit_ids if unit_ids.count(u) > 1})
        for u in dupes:
            out.append(Violation("duplicate_unit", f"duplicate evidence unit id {u!r}", unit_id=u))
    elif unit_ids != sorted(unit_ids):
        out.append(Violation("order", "evidence units are not in canonical order"))

    group_ids = [g.group_id for g in pkg.groups]
    if len(set(group_ids)) != len(group_ids):
        out.append(Violation("duplicate_group", "duplicate group ids"))
    elif group_ids != sorted(group_ids):
        out.append(Violation("order", "groups are not in canonical order"))

    # partition: every candidate in exactly one group, and that group matches group_id
    membership: dict[str, list[int]] = {}
    for g in pkg.groups:
        for m in g.members:
            membership.setdefault(m, []).append(g.group_id)
    for c in pkg.candidates:
        homes = membership.get(c.candidate_id, [])
        if len(homes) != 1:
            out.append(
                Violation("partition", f"candidate {c.candidate_id!r} appears in {len(homes)} groups", c.candidate_id)
            )
        elif homes[0] != c.group_id:
            out.append(
                Violation("partition", f"candidate {c.candidate_id!r} listed in group {homes[0]} but declares {c.group_id}",
                          c.candidate_id)
            )
    for m in membership:
        if m not in seen:
            out.append(Violation("partition", f"group member {m!r} is not a candidate", m))

    known_units = set(unit_ids)
    for c in pkg.candidates:
        if c.explicit_cost is not None:
            if not c.explicit_cost > 0:
                out.append(Violation("cost", f"candidate {c.candidate_id!r} has non-positive cost {c.explicit_cost}",
                                     c.candidate_id))
        elif not c.text.strip():
            out.append(Violation("cost", f"candidate {c.candidate_id!r} has empty text and no explicit cost",
                                 c.candidate_id))
        try:
            CandidateKind(c.kind)
        except ValueError:
            out.append(Violation("kind", f"candidate {c.candidate_id!r} has unknown kind {c.kind!r}", c.candidate_id))
        for r, a in c.coverage_row.items():
            if r not in known_units:
                out.append(Violation("coverage_unit", f"candidate {c.candidate_id!r} covers unknown unit {r!r}",
                                     c.candidate_id, r))
            if not (0.0 <= a <= 1.0):
                out.append(Violation("coverage_range", f"coverage ({c.candidate_id!r}, {r!r}) = {a} outside [0, 1]",
                                     c.candidate_id, r))

    for u in pkg.evidence_units:
        if not u.weight >= 0:
            out.append(Violation("weight", f"evidence unit {u.unit_id!r} has negative weight {u.weight}",
                                 unit_id=u.unit_id))
        try:
            UnitClass(u.unit_class)
        except ValueError:
            out.append(Violation("unit_class", f"evidence unit {u.unit_id!r} has unknown class {u.unit_class!r}",
                                 unit_id=u.unit_id))
    return out


def store_cost(store: Store | Iterable[str], pkg: Package, rule: CostRule | str = CostRule.WORD) -> float:
    ids = store.selected if isinstance(store, Store) else store
    return sum(pkg.cost(cid, rule) for cid in ids)


def is_feasible(
    store: Store,
    pkg: Package,
    budget: float,
    k: int = 1,
    rule: CostRule | str = CostRule.WORD,
) -> bool:
    """Budget plus at-most-``k``-per-group feasibility."""
    per_group: dict[int, int] = {}
    total = 0.0
    for cid in store.selected:
        c = pkg.candidate(cid)
        total += candidate_cost(c, rule)
        per_group[c.group_id] = per_group.get(c.group_id, 0) + 1
    if total > budget + BUDGET_TOL:
        return False
    return all(n <= k for n in per_group.values())


# --- serialization -------------------------------------------------------------


def _num(x: float) -> str:
    s = f"{float(x):.{DECIMALS}f}"
    return "0.000000" if s == "-0.000000" else s


def _dump(obj: Any) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, Enum):
        return json.dumps(obj.value, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{_dump(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any) -> bytes:
    """Compact JSON with sorted keys and floats at fixed six-decimal precision."""
    return _dump(obj).encode("utf-8")


def package_to_dict(pkg: Package) -> dict[str, Any]:
    return {
        "package_id": pkg.package_id,
        "candidates": [
            {
                "candidate_id": c.candidate_id,
                "group_id": int(c.group_id),
                "kind": CandidateKind(c.kind).value,
                "text": c.text,
                "cost": None if c.explicit_cost is None else float(c.explicit_cost),
            }
            for c in pkg.candidates
        ],
        "groups": [{"group_id": int(g.group_id), "members": list(g.members)} for g in pkg.groups],
        "evidence_units": [
            {"unit_id": u.unit_id, "description": u.description, "unit_class": UnitClass(u.unit_class).value}
            for u in pkg.evidence_units
        ],
        "weights": {u.unit_id: float(u.weight) for u in pkg.evidence_units},
        "coverage": {c.candidate_id: {r: float(a) for r, a in c.coverage_row.items()} for c in pkg.candidates},
        "objective_kind": pkg.objective_kind,
        "metadata": dict(pkg.metadata),
    }


def serialize_package(pkg: Package) -> bytes:
    return canonical_json(package_to_dict(pkg)) + b"\n"


def _expect(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise PackageParseError(message, path)


def _field(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if not isinstance(obj, Mapping):
        raise PackageParseError("expected an object", path)
    if key not in obj:
        raise PackageParseError(f"missing field {key!r}", path)
    return obj[key]


def _real(x: Any, path: str) -> float:
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool), "expected a number", path)
    return quantize(x)


def package_from_dict(doc: Mapping[str, Any]) -> Package:
    package_id = _field(doc, "package_id", "$")
    _expect(isinstance(package_id, str), "expected a string", "$.package_id")
    weights = _field(doc, "weights", "$")
    _expect(isinstance(weights, Mapping), "expected an object", "$.weights")
    coverage = _field(doc, "coverage", "$")
    _expect(isinstance(coverage, Mapping), "expected an object", "$.coverage")

    units = []
    seen_units: set[str] = set()
    raw_units = _field(doc, "evidence_units", "$")
    _expect(isinstance(raw_units, list), "expected a list", "$.evidence_units")
    for i, u in enumerate(raw_units):
        p = f"$.evidence_units[{i}]"
        uid = _field(u, "unit_id", p)
        _expect(isinstance(uid, str), "expected a string", p + ".unit_id")
        if uid in seen_units:
            raise PackageParseError(f"duplicate evidence unit id {uid!r}", p + ".unit_id")
        seen_units.add(uid)
        raw_cls = _field(u, "unit_class", p)
        try:
            ucls = UnitClass(raw_cls)
        except ValueError:
            raise PackageParseError(f"unknown unit class {raw_cls!r}", p + ".unit_class") from None
        _expect(uid in weights, f"no weight for unit {uid!r}", "$.weights")
        units.append(EvidenceUnit(uid, str(u.get("description", "")), ucls, _real(weights[uid], f"$.weights.{uid}")))
    for uid in weights:
        _expect(uid in seen_units, f"weight for unknown unit {uid!r}", f"$.weights.{uid}")

    cands = []
    seen: set[str] = set()
    raw_cands = _field(doc, "candidates", "$")
    _expect(isinstance(raw_cands, list), "expected a list", "$.candidates")
    for i, c in enumerate(raw_cands):
        p = f"$.candidates[{i}]"
        cid = _field(c, "candidate_id", p)
        _expect(isinstance(cid, str), "expected a string", p + ".candidate_id")
        if cid in seen:
            raise PackageParseError(f"duplicate candidate id {cid!r}", p + ".candidate_id")
        seen.add(cid)
        gid = _field(c, "group_id", p)
        _expect(isinstance(gid, int) and not isinstance(gid, bool), "expected an integer", p + ".group_id")
        raw_kind = _field(c, "kind", p)
        try:
            kind = CandidateKind(raw_kind)
        except ValueError:
            raise PackageParseError(f"unknown candidate kind {raw_kind!r}", p + ".kind") from None
        text = c.get("text", "")
        _expect(isinstance(text, str), "expected a string", p + ".text")
        cost = c.get("cost")
        cost = None if cost is None else _real(cost, p + ".cost")
        row_doc = coverage.get(cid, {})
        _expect(isinstance(row_doc, Mapping), "expected an object", f"$.coverage.{cid}")
        row = {}
        for r, a in row_doc.items():
            _expect(r in seen_units, f"coverage references unknown unit {r!r}", f"$.coverage.{cid}.{r}")
            row[r] = _real(a, f"$.coverage.{cid}.{r}")
        cands.append(Candidate(cid, gid, kind, text, row, cost))
    for cid in coverage:
        _expect(cid in seen, f"coverage row for unknown candidate {cid!r}", f"$.coverage.{cid}")

    groups = []
    seen_groups: set[int] = set()
    placed: set[str] = set()
    raw_groups = _field(doc, "groups", "$")
    _expect(isinstance(raw_groups, list), "expected a list", "$.groups")
    for i, g in enumerate(raw_groups):
        p = f"$.groups[{i}]"
        gid = _field(g, "group_id", p)
        _expect(isinstance(gid, int) and not isinstance(gid, bool), "expected an integer", p + ".group_id")
        _expect(gid not in seen_groups, f"duplicate group id {gid}", p + ".group_id")
        seen_groups.add(gid)
        members = _field(g, "members", p)
        _expect(isinstance(members, list), "expected a list", p + ".members")
        for m in members:
            _expect(m in seen, f"group member {m!r} is not a candidate", p + ".members")
            _expect(m not in placed, f"candidate {m!r} appears in more than one group", p + ".members")
            placed.add(m)
        groups.append(Group(gid, tuple(members)))
    for c in cands:
        _expect(c.candidate_id in placed, f"candidate {c.candidate_id!r} is in no group", "$.groups")

    objective_kind = doc.get("objective_kind", "clipped")
    _expect(objective_kind == "clipped", f"unsupported objective kind {objective_kind!r}", "$.objective_kind")
    metadata = doc.get("metadata", {})
    _expect(isinstance(metadata, Mapping), "expected an object", "$.metadata")
    return Package.build(package_id, cands, units, groups=groups, objective_kind=objective_kind, metadata=metadata)


def parse_package(data: bytes | str) -> Package:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PackageParseError("input is not valid UTF-8", offset=exc.start) from None
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise PackageParseError(f"malformed JSON: {exc.msg}", offset=offset) from None
    return package_from_dict(doc)


def load_package(path) -> Package:
    with open(path, "rb") as fh:
        return parse_package(fh.read())


def write_package(pkg: Package, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_package(pkg))
