from __future__ import annotations

import json

import pytest
from hypothesis import given

from storebench.generator import GeneratorParams, generate_small
from storebench.package import (
    Candidate,
    CandidateKind,
    CostRule,
    EvidenceUnit,
    InvalidCandidateError,
    Package,
    PackageParseError,
    Store,
    UnitClass,
    UnknownCandidateError,
    candidate_cost,
    is_feasible,
    package_to_dict,
    parse_package,
    rule_cost,
    serialize_package,
    validate_package,
)

from conftest import two_item_package, small_packages


def three_candidates() -> Package:
    units = [EvidenceUnit("r1", "", UnitClass.FACT, 1.0), EvidenceUnit("r2", "", UnitClass.INVALIDATION, 0.5)]
    cands = [
        Candidate("x", 0, CandidateKind.ATOMIC_FACT, "x fact", {"r1": 1.0}, 0.5),
        Candidate("y", 0, CandidateKind.TOMBSTONE, "y gone", {"r2": 1.0}, 0.4),
        Candidate("z", 1, CandidateKind.RAW_SPAN, "z raw span text", {"r1": 0.7, "r2": 0.3}, 2.0),
    ]
    return Package.build("three", cands, units)


def test_well_formed_package_has_no_violations():
    assert validate_package(three_candidates()) == []


def test_zero_cost_is_one_violation_naming_candidate():
    pkg = three_candidates()
    bad = Package.build("bad", [c if c.candidate_id != "y" else Candidate("y", 0, c.kind, c.text, c.coverage_row, 0.0)
                                for c in pkg.candidates], pkg.evidence_units)
    v = validate_package(bad)
    assert len(v) == 1 and v[0].candidate_id == "y" and v[0].code == "cost"


def test_coverage_out_of_range_names_pair():
    pkg = three_candidates()
    cands = list(pkg.candidates)
    cands[0] = Candidate("x", 0, CandidateKind.ATOMIC_FACT, "x", {"r1": 1.5}, 0.5)
    v = validate_package(Package.build("bad", cands, pkg.evidence_units))
    assert [(x.code, x.candidate_id, x.unit_id) for x in v] == [("coverage_range", "x", "r1")]


def test_validity_flag_derived_from_coverage():
    pkg = three_candidates()
    assert not pkg.by_id["x"].validity_flag
    assert pkg.by_id["y"].validity_flag and pkg.by_id["z"].validity_flag


def test_word_cost():
    c = Candidate("c", 0, CandidateKind.ATOMIC_FACT, "user prefers vegetarian meals")
    assert candidate_cost(c, CostRule.WORD) == 4


def test_byte_overhead_cost():
    text = "x" * 48
    assert rule_cost(text, CostRule.BYTE_OVERHEAD) == 10
    assert rule_cost("x" * 49, "byte-overhead") == 11


def test_explicit_cost_wins():
    c = Candidate("c", 0, CandidateKind.ATOMIC_FACT, "some long text here", explicit_cost=0.25)
    assert candidate_cost(c, CostRule.WORD) == candidate_cost(c, CostRule.BYTE_OVERHEAD) == 0.25


def test_empty_text_without_cost_is_invalid():
    with pytest.raises(InvalidCandidateError):
        candidate_cost(Candidate("c", 0, CandidateKind.ATOMIC_FACT, "   "))


def test_word_count_minimum_is_one():
    assert rule_cost("", CostRule.WORD) == 1


def test_feasibility_examples():
    pkg = three_candidates()
    assert is_feasible(Store.of(()), pkg, 0.0)
    assert not is_feasible(Store.of(["x", "y"]), pkg, 10.0, k=1)
    assert is_feasible(Store.of(["x", "y"]), pkg, 10.0, k=2)
    assert not is_feasible(Store.of(["x", "z"]), pkg, 2.0)
    assert is_feasible(Store.of(["x", "z"]), pkg, 2.5)


def test_prop1_costs_in_distinct_groups_are_feasible():
    cands = [Candidate("a", 0, CandidateKind.ATOMIC_FACT, "a", {"r": 0.5}, 0.25),
             Candidate("b", 1, CandidateKind.RAW_SPAN, "b", {"r": 1.0}, 1.0)]
    pkg = Package.build("p", cands, [EvidenceUnit("r", weight=1.0)])
    assert is_feasible(Store.of(["a", "b"]), pkg, 2.0, k=1)
    assert not is_feasible(Store.of(["a", "b"]), two_item_package(), 2.0, k=1)


def test_unknown_candidate_in_store():
    with pytest.raises(UnknownCandidateError):
        is_feasible(Store.of(["nope"]), three_candidates(), 1.0)


def test_budget_tolerance():
    pkg = three_candidates()
    assert is_feasible(Store.of(["x"]), pkg, 0.5 - 1e-10)
    assert not is_feasible(Store.of(["x"]), pkg, 0.5 - 1e-6)


def test_round_trip_generated():
    pkg = generate_small(GeneratorParams(seed=11))
    again = parse_package(serialize_package(pkg))
    assert again == pkg
    assert serialize_package(again) == serialize_package(pkg)


@given(small_packages())
def test_round_trip_property(pkg):
    data = serialize_package(pkg)
    assert serialize_package(parse_package(data)) == data
    assert parse_package(data) == pkg


def test_serialization_is_canonical_regardless_of_input_order():
    pkg = three_candidates()
    shuffled = Package.build("three", list(reversed(pkg.candidates)), list(reversed(pkg.evidence_units)))
    assert serialize_package(shuffled) == serialize_package(pkg)


def test_same_seed_same_bytes():
    a = serialize_package(generate_small(GeneratorParams(seed=5)))
    b = serialize_package(generate_small(GeneratorParams(seed=5)))
    assert a == b


def test_duplicate_candidate_id_is_named():
    doc = package_to_dict(three_candidates())
    doc["candidates"].append(dict(doc["candidates"][0]))
    with pytest.raises(PackageParseError) as err:
        parse_package(json.dumps(doc))
    assert "'x'" in str(err.value)
    assert err.value.path == "$.candidates[3].candidate_id"


def test_malformed_json_reports_byte_offset():
    data = serialize_package(three_candidates())
    broken = data[:1] + b"@" + data[1:]
    with pytest.raises(PackageParseError) as err:
        parse_package(broken)
    assert err.value.offset == 1
    # offsets count bytes, not characters
    with pytest.raises(PackageParseError) as err:
        parse_package('{"package_id": "é", @}'.encode())
    assert err.value.offset == len('{"package_id": "é", '.encode())


def test_missing_field_has_path():
    doc = package_to_dict(three_candidates())
    del doc["candidates"][1]["kind"]
    with pytest.raises(PackageParseError) as err:
        parse_package(json.dumps(doc))
    assert err.value.path == "$.candidates[1]"


def test_unknown_unit_in_coverage_has_path():
    doc = package_to_dict(three_candidates())
    doc["coverage"]["x"]["ghost"] = 0.5
    with pytest.raises(PackageParseError) as err:
        parse_package(json.dumps(doc))
    assert err.value.path == "$.coverage.x.ghost"


def test_subpackage_drops_empty_groups():
    sub = three_candidates().subpackage(["z"])
    assert [g.group_id for g in sub.groups] == [1]
    assert validate_package(sub) == []


@given(small_packages())
def test_generated_partition_and_positive_costs(pkg):
    assert validate_package(pkg) == []
    members = sorted(m for g in pkg.groups for m in g.members)
    assert members == sorted(pkg.candidate_ids)
    assert all(pkg.cost(c) > 0 for c in pkg.candidate_ids)
