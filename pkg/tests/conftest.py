from __future__ import annotations

import os

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from storebench.package import Candidate, CandidateKind, EvidenceUnit, Package, UnitClass

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def two_item_package(cost_a: float = 0.25, cov_a: float = 0.5) -> Package:
    cands = [
        Candidate("a", 0, CandidateKind.ATOMIC_FACT, "a", {"r": cov_a}, cost_a),
        Candidate("b", 0, CandidateKind.RAW_SPAN, "b", {"r": 1.0}, 1.0),
    ]
    return Package.build("two-item", cands, [EvidenceUnit("r", "", UnitClass.FACT, 1.0)])


_KINDS = [CandidateKind.ATOMIC_FACT, CandidateKind.RAW_SPAN, CandidateKind.ENTITY_SUMMARY,
          CandidateKind.TOMBSTONE, CandidateKind.COMPOUND_UPDATE]


@st.composite
def small_packages(draw, max_groups: int = 4, max_per_group: int = 3, max_units: int = 4) -> Package:
    """Random packages small enough for exhaustive enumeration."""
    n_units = draw(st.integers(1, max_units))
    units = []
    for j in range(n_units):
        cls = draw(st.sampled_from([UnitClass.FACT, UnitClass.TEMPORAL, UnitClass.INVALIDATION]))
        w = draw(st.integers(0, 100)) / 50
        units.append(EvidenceUnit(f"u{j}", "", cls, w))
    cands = []
    n_groups = draw(st.integers(1, max_groups))
    for g in range(n_groups):
        for m in range(draw(st.integers(1, max_per_group))):
            covered = draw(st.lists(st.integers(0, n_units - 1), min_size=0, max_size=n_units, unique=True))
            row = {f"u{j}": draw(st.integers(0, 20)) / 20 for j in covered}
            cost = draw(st.integers(1, 40)) / 10
            kind = draw(st.sampled_from(_KINDS))
            cands.append(Candidate(f"c{g}{m}", g, kind, f"text {g} {m}", row, cost))
    return Package.build("hyp", cands, units)


budgets = st.integers(0, 80).map(lambda x: x / 10)
