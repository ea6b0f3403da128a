"""Exported memory stores written by external systems.

File format (UTF-8 JSON)::

    {"system": "mem0",
     "memories": [{"memory_id": "m1", "text": "...", "timestamp": 3,
                   "salience": 0.7, "cost": {"word": 5, "byte_overhead": 10},
                   "coverage": {"u00.fact": 1.0}}]}

``salience`` and either entry of ``cost`` may be omitted; a missing cost is
computed from ``text`` under the requested rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .package import CostRule, PackageParseError, quantize, rule_cost


@dataclass(frozen=True)
class ExportedMemory:
    memory_id: str
    text: str
    timestamp: int
    coverage_row: Mapping[str, float] = field(default_factory=dict)
    salience: float | None = None
    cost: Mapping[str, float] = field(default_factory=dict)
    source_system: str = "external"

    @property
    def candidate_id(self) -> str:
        return f"x.{self.source_system}.{self.memory_id}"

    def cost_under(self, rule: CostRule | str) -> float:
        rule = CostRule.parse(rule)
        if rule.value in self.cost:
            return float(self.cost[rule.value])
        return rule_cost(self.text, rule)


@dataclass(frozen=True)
class ExportedStore:
    system: str
    memories: tuple[ExportedMemory, ...]


def _req(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, Mapping) or key not in obj:
        raise PackageParseError(f"missing field {key!r}", path)
    return obj[key]


def _number(x: Any, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise PackageParseError("expected a number", path)
    return quantize(x)


def export_from_dict(doc: Mapping[str, Any]) -> ExportedStore:
    system = _req(doc, "system", "$")
    if not isinstance(system, str) or not system:
        raise PackageParseError("expected a nonempty string", "$.system")
    raw = _req(doc, "memories", "$")
    if not isinstance(raw, list):
        raise PackageParseError("expected a list", "$.memories")
    out = []
    seen = set()
    for i, m in enumerate(raw):
        p = f"$.memories[{i}]"
        mid = str(_req(m, "memory_id", p))
        if mid in seen:
            raise PackageParseError(f"duplicate memory id {mid!r}", p + ".memory_id")
        seen.add(mid)
        text = m.get("text", "")
        if not isinstance(text, str):
            raise PackageParseError("expected a string", p + ".text")
        ts = _req(m, "timestamp", p)
        if isinstance(ts, bool) or not isinstance(ts, int):
            raise PackageParseError("expected an integer", p + ".timestamp")
        sal = m.get("salience")
        sal = None if sal is None else _number(sal, p + ".salience")
        cost = {}
        for key, val in (m.get("cost") or {}).items():
            try:
                rule = CostRule.parse(key)
            except ValueError:
                raise PackageParseError(f"unknown cost rule {key!r}", f"{p}.cost.{key}") from None
            c = _number(val, f"{p}.cost.{key}")
            if c <= 0:
                raise PackageParseError("cost must be positive", f"{p}.cost.{key}")
            cost[rule.value] = c
        if not cost and not text.strip():
            raise PackageParseError("memory has neither text nor cost", p)
        row = {}
        for r, a in (m.get("coverage") or {}).items():
            a = _number(a, f"{p}.coverage.{r}")
            if not 0 <= a <= 1:
                raise PackageParseError("coverage must lie in [0, 1]", f"{p}.coverage.{r}")
            row[str(r)] = a
        out.append(ExportedMemory(mid, text, ts, row, sal, cost, system))
    return ExportedStore(system, tuple(out))


def export_to_dict(store: ExportedStore) -> dict[str, Any]:
    return {
        "system": store.system,
        "memories": [
            {
                "memory_id": m.memory_id,
                "text": m.text,
                "timestamp": m.timestamp,
                "salience": m.salience,
                "cost": dict(m.cost),
                "coverage": dict(m.coverage_row),
            }
            for m in store.memories
        ],
    }


def load_export(path) -> ExportedStore:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PackageParseError("input is not valid UTF-8", offset=exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PackageParseError(f"malformed JSON: {exc.msg}", offset=len(text[: exc.pos].encode("utf-8"))) from None
    return export_from_dict(doc)


def write_export(store: ExportedStore, path) -> None:
    from .package import canonical_json

    with open(path, "wb") as fh:
        fh.write(canonical_json(export_to_dict(store)) + b"\n")


def memories_by_candidate(memories: Sequence[ExportedMemory]) -> dict[str, ExportedMemory]:
    return {m.candidate_id: m for m in memories}
