from __future__ import annotations

import pytest

from storebench.generator import (
    AUDIT_BUDGETS,
    FRACTION_BUDGETS,
    GeneratorError,
    GeneratorParams,
    adversarial_density_instance,
    budget_from_fraction,
    generate_audit_suite,
    generate_small,
    generate_stress,
    package_digest,
)
from storebench.package import CandidateKind, UnitClass, serialize_package, validate_package
from storebench.solvers import assignment_count


def units_of(pkg, cls):
    return [u for u in pkg.evidence_units if u.unit_class == cls]


def test_determinism():
    p = GeneratorParams(seed=123, distribution="update_chain")
    assert serialize_package(generate_small(p)) == serialize_package(generate_small(p))
    assert package_digest(generate_small(p)) != package_digest(generate_small(GeneratorParams(seed=124)))


def test_zero_experiences_rejected():
    with pytest.raises(GeneratorError):
        generate_small(GeneratorParams(num_experiences=0))


def test_bad_params_rejected():
    with pytest.raises(GeneratorError):
        GeneratorParams(update_probability=1.5).validate()
    with pytest.raises(GeneratorError):
        GeneratorParams.from_overrides({"cost_ranges": {"raw_span": [0, 1]}}).validate()
    with pytest.raises(GeneratorError):
        GeneratorParams.from_overrides({"nonsense": 1})
    with pytest.raises(GeneratorError):
        generate_stress(GeneratorParams(distribution="density_trap"))


def test_no_updates_means_no_invalidation_units():
    for seed in range(10):
        pkg = generate_small(GeneratorParams(seed=seed, update_probability=0.0))
        assert units_of(pkg, UnitClass.INVALIDATION) == []


def test_schema_and_group_sizes():
    for dist in ("base", "update_chain", "temporal_interval"):
        for seed in range(20):
            pkg = generate_stress(GeneratorParams(seed=seed, distribution=dist))
            assert validate_package(pkg) == []
            assert all(1 <= len(g.members) <= 5 for g in pkg.groups)
            assert len(pkg.groups) == 12


def test_kind_cost_ordering():
    pkg = generate_small(GeneratorParams(seed=2))
    cost = {k: [pkg.cost(c.candidate_id) for c in pkg.candidates if c.kind == k] for k in CandidateKind}
    assert min(cost[CandidateKind.RAW_SPAN]) > max(cost[CandidateKind.ATOMIC_FACT])


def test_update_chain_has_more_invalidation_units():
    base = chain = 0
    for seed in range(100):
        base += len(units_of(generate_stress(GeneratorParams(seed=seed)), UnitClass.INVALIDATION))
        chain += len(units_of(generate_stress(GeneratorParams(seed=seed, distribution="update_chain")),
                              UnitClass.INVALIDATION))
    assert chain > base


def test_temporal_interval_has_temporal_units_for_transitions():
    for seed in range(20):
        pkg = generate_stress(GeneratorParams(seed=seed, distribution="temporal_interval"))
        inv = {u.unit_id.split(".")[0] for u in units_of(pkg, UnitClass.INVALIDATION)}
        temporal = {u.unit_id.split(".")[0] for u in units_of(pkg, UnitClass.TEMPORAL)}
        assert inv <= temporal


@pytest.mark.parametrize("eta,delta", [(0.5, 0.25), (0.1, 0.05), (1.0, 0.25), (0.01, 0.005)])
def test_adversarial_instance(eta, delta):
    pkg = adversarial_density_instance(eta)
    a, b = pkg.by_id["a"], pkg.by_id["b"]
    assert a.explicit_cost == delta and a.coverage_row == {"r": 2 * delta}
    assert b.explicit_cost == 1.0 and b.coverage_row == {"r": 1.0}
    assert len(pkg.groups) == 1 and pkg.metadata["budget"] == 2.0


@pytest.mark.parametrize("eta", [0.0, -1.0, 1.5])
def test_adversarial_rejects_bad_eta(eta):
    with pytest.raises(GeneratorError):
        adversarial_density_instance(eta)


def test_audit_suite_scope():
    suite = generate_audit_suite(60, seed=1)
    assert len(suite) == 60
    for pkg, budget in suite:
        assert budget in AUDIT_BUDGETS
        assert validate_package(pkg) == []
        assert len(pkg.groups) <= 10
        assert all(len(g.members) <= 4 for g in pkg.groups)
        assert assignment_count(pkg) <= 10**7
    with pytest.raises(GeneratorError):
        generate_audit_suite(0)


def test_budget_mapping():
    assert [budget_from_fraction(f) for f in FRACTION_BUDGETS] == [1, 2, 4, 8, 16]
