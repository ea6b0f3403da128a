"""Exact package denominators for auditing budgeted memory writers."""

from __future__ import annotations

from .objective import CoverageState, coverage_value, incorporate, marginal_gain
from .package import (
    Candidate,
    CandidateKind,
    CostRule,
    EvidenceUnit,
    Group,
    Package,
    Store,
    is_feasible,
    load_package,
    parse_package,
    serialize_package,
    validate_package,
)
from .scoring import build_union_package, package_ratio, sensitivity_audit, union_ratio
from .solvers import certify, solve_exact_bnb, solve_exact_enumeration, solve_milp
from .writers import density_only_write, estimated_gvt_write, gvt_best_over_grid, gvt_write

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "CandidateKind",
    "CostRule",
    "CoverageState",
    "EvidenceUnit",
    "Group",
    "Package",
    "Store",
    "build_union_package",
    "certify",
    "coverage_value",
    "density_only_write",
    "estimated_gvt_write",
    "gvt_best_over_grid",
    "gvt_write",
    "incorporate",
    "is_feasible",
    "load_package",
    "marginal_gain",
    "package_ratio",
    "parse_package",
    "sensitivity_audit",
    "serialize_package",
    "solve_exact_bnb",
    "solve_exact_enumeration",
    "solve_milp",
    "union_ratio",
    "validate_package",
]
