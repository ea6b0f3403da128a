"""Ratios against certified denominators, union packages, and audit statistics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exports import ExportedMemory, ExportedStore
from .objective import coverage_value, coverage_z
from .package import (
    Candidate,
    CandidateKind,
    CostRule,
    Group,
    Package,
    PackageError,
    Store,
    is_feasible,
    quantize,
)
from .solvers import SolveResult, solve_exact_bnb
from .writers import PRUNE_POLICIES, WRITERS, prune_exported


class InfeasibleStoreError(ValueError):
    pass


class UnknownUnitError(PackageError):
    pass


@dataclass(frozen=True)
class RatioReport:
    method: str
    budget: float
    cost_rule: str
    k: int
    value: float
    denominator: float
    ratio: float | None
    denominator_kind: str = "package"
    invalidation_coverage: float = 0.0
    ci: tuple[float, float] | None = None
    denominator_solver: str = "bnb"
    certified: bool = True
    package_ratio: float | None = None
    analysis_only: bool = False

    def as_row(self) -> dict:
        return {
            "method": self.method,
            "budget": self.budget,
            "cost_rule": self.cost_rule,
            "k": self.k,
            "denominator_kind": self.denominator_kind,
            "value": self.value,
            "denominator": self.denominator,
            "ratio": self.ratio,
            "package_ratio": self.package_ratio,
            "invalidation_coverage": self.invalidation_coverage,
            "analysis_only": self.analysis_only,
            "denominator_solver": self.denominator_solver,
            "certified": self.certified,
        }


def ratio_or_none(value: float, denominator: float) -> float | None:
    return None if denominator <= 0 else value / denominator


def invalidation_coverage(store: Store | Iterable[str], pkg: Package) -> float:
    """Covered mass of invalidation/abstention units: sum of min(1, z_r)."""
    z = coverage_z(store, pkg)
    return sum(min(1.0, z[j]) for j, u in enumerate(pkg.evidence_units) if u.is_validity)


def package_ratio(
    store: Store,
    pkg: Package,
    budget: float,
    k: int = 1,
    rule: CostRule | str = CostRule.WORD,
    method: str = "store",
    opt: SolveResult | None = None,
) -> RatioReport:
    rule = CostRule.parse(rule)
    if not is_feasible(store, pkg, budget, k, rule):
        raise InfeasibleStoreError(f"store for {method!r} is infeasible at budget {budget} (k={k}); prune it first")
    opt = opt or solve_exact_bnb(pkg, budget, k, rule)
    value = coverage_value(store, pkg)
    return RatioReport(
        method, budget, rule.value, k, value, opt.opt_value, ratio_or_none(value, opt.opt_value),
        "package", invalidation_coverage(store, pkg), denominator_solver=opt.solver, certified=opt.exact,
    )


def build_union_package(
    pkg: Package,
    exports: Sequence[ExportedMemory] | ExportedStore,
    rule: CostRule | str = CostRule.WORD,
) -> Package:
    """Add exported memories as external candidates, each in a fresh singleton group."""
    memories = exports.memories if isinstance(exports, ExportedStore) else tuple(exports)
    if not memories:
        return pkg
    known = set(pkg.unit_by_id)
    next_group = max((g.group_id for g in pkg.groups), default=-1) + 1
    added, groups = [], list(pkg.groups)
    for m in sorted(memories, key=lambda m: m.candidate_id):
        for r in m.coverage_row:
            if r not in known:
                raise UnknownUnitError(f"memory {m.memory_id!r} covers unknown evidence unit {r!r}")
        if m.candidate_id in pkg.by_id:
            raise PackageError(f"exported candidate id {m.candidate_id!r} collides with a package candidate")
        added.append(
            Candidate(m.candidate_id, next_group, CandidateKind.EXTERNAL, m.text, dict(m.coverage_row),
                      quantize(m.cost_under(rule)))
        )
        groups.append(Group(next_group, (m.candidate_id,)))
        next_group += 1
    systems = sorted({m.source_system for m in memories})
    meta = {**pkg.metadata, "union_of": pkg.package_id, "union_systems": systems}
    return Package.build(
        f"{pkg.package_id}+{'+'.join(systems)}",
        list(pkg.candidates) + added,
        pkg.evidence_units,
        groups=groups,
        objective_kind=pkg.objective_kind,
        metadata=meta,
    )


def union_ratio(
    exports: Sequence[ExportedMemory] | ExportedStore,
    pkg: Package,
    budget: float,
    prune_policy: str,
    rule: CostRule | str = CostRule.WORD,
    k: int = 1,
    package_opt: SolveResult | None = None,
) -> RatioReport:
    """Score a pruned export inside ``P+`` against ``OPT_{P+}``.

    ``package_ratio`` on the report divides the same value by the original
    package optimum instead; it can exceed 1.
    """
    rule = CostRule.parse(rule)
    memories = exports.memories if isinstance(exports, ExportedStore) else tuple(exports)
    union = build_union_package(pkg, memories, rule)
    store = prune_exported(memories, budget, prune_policy, union, rule)
    value = coverage_value(store, union)
    opt_union = solve_exact_bnb(union, budget, k, rule)
    opt_pkg = package_opt or solve_exact_bnb(pkg, budget, k, rule)
    system = memories[0].source_system if memories else "empty"
    return RatioReport(
        f"{system}:{prune_policy}", budget, rule.value, k, value, opt_union.opt_value,
        ratio_or_none(value, opt_union.opt_value), "union", invalidation_coverage(store, union),
        denominator_solver=opt_union.solver, certified=opt_union.exact,
        package_ratio=ratio_or_none(value, opt_pkg.opt_value), analysis_only=prune_policy == "upper",
    )


def bootstrap_ci(
    values: Sequence[float],
    level: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, data.size, size=(resamples, data.size))
    means = data[idx].mean(axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    # resampled means can never leave the sample range
    return float(max(lo, data.min())), float(min(hi, data.max()))


def spearman(a: Sequence[float], b: Sequence[float]) -> float | None:
    from scipy.stats import spearmanr

    if len(a) < 2:
        return None
    if len(set(a)) == 1 and len(set(b)) == 1:
        return 1.0
    rho = spearmanr(a, b).statistic
    return None if np.isnan(rho) else float(rho)


def ranking(scores: Mapping[str, float | None]) -> list[str]:
    return sorted(scores, key=lambda m: (-(scores[m] if scores[m] is not None else -1.0), m))


@dataclass(frozen=True)
class SensitivityReport:
    package_id: str
    budget: float
    opt: Mapping[str, float]  # "k1_word", "k2_word", "k1_byte_overhead", "k2_byte_overhead"
    k_ratio: Mapping[str, float | None]  # per rule: OPT(k=2) / OPT(k=1)
    rule_ratio: Mapping[str, float | None]  # per k: byte / word
    method_ratios: Mapping[str, Mapping[str, float | None]] = field(default_factory=dict)  # rule -> method -> ratio
    rankings: Mapping[str, list[str]] = field(default_factory=dict)
    rank_correlation: float | None = None

    def as_dict(self) -> dict:
        return {
            "package_id": self.package_id,
            "budget": self.budget,
            "opt": dict(self.opt),
            "k_ratio": dict(self.k_ratio),
            "rule_ratio": dict(self.rule_ratio),
            "method_ratios": {r: dict(v) for r, v in self.method_ratios.items()},
            "rankings": {r: list(v) for r, v in self.rankings.items()},
            "rank_correlation": self.rank_correlation,
        }


def sensitivity_audit(
    pkg: Package,
    budget: float,
    exports: Sequence[ExportedStore] = (),
    policies: Sequence[str] | Mapping[str, Sequence[str]] = ("recency", "salience"),
    writers: Sequence[str] = (),
) -> SensitivityReport:
    """OPT under (k=1, k=2) x (word, byte_overhead) plus method rankings per rule.

    Package writers are scored against the package OPT of the same rule.
    Each (system, policy) pruned export is scored against the OPT of its own
    union package under that rule, which keeps every ratio inside [0, 1].
    ``policies`` is either one list for every system or a per-system mapping.
    """
    rules = (CostRule.WORD, CostRule.BYTE_OVERHEAD)
    opt: dict[str, float] = {}
    for rule in rules:
        for k in (1, 2):
            opt[f"k{k}_{rule.value}"] = solve_exact_bnb(pkg, budget, k, rule).opt_value
    k_ratio = {r.value: ratio_or_none(opt[f"k2_{r.value}"], opt[f"k1_{r.value}"]) for r in rules}
    rule_ratio = {f"k{k}": ratio_or_none(opt[f"k{k}_byte_overhead"], opt[f"k{k}_word"]) for k in (1, 2)}

    method_ratios: dict[str, dict[str, float | None]] = {}
    for rule in rules:
        denom = opt[f"k1_{rule.value}"]
        scores: dict[str, float | None] = {}
        for name in writers:
            res = WRITERS[name](pkg, budget, rule=rule)
            scores[name] = ratio_or_none(res.value, denom)
        for exp in exports:
            union = build_union_package(pkg, exp.memories, rule)
            union_opt = solve_exact_bnb(union, budget, 1, rule).opt_value
            chosen = policies.get(exp.system, ()) if isinstance(policies, Mapping) else policies
            for policy in chosen:
                store = prune_exported(exp.memories, budget, policy, union, rule)
                scores[f"{exp.system}:{policy}"] = ratio_or_none(coverage_value(store, union), union_opt)
        method_ratios[rule.value] = scores
    rankings = {r: ranking(s) for r, s in method_ratios.items()}
    corr = None
    names = sorted(method_ratios[CostRule.WORD.value])
    if len(names) >= 2:
        a = [method_ratios["word"][m] for m in names]
        b = [method_ratios["byte_overhead"][m] for m in names]
        if None not in a and None not in b:
            corr = spearman(a, b)
    return SensitivityReport(pkg.package_id, budget, opt, k_ratio, rule_ratio, method_ratios, rankings, corr)


def with_ci(report: RatioReport, values: Sequence[float], seed: int = 0, resamples: int = 10_000) -> RatioReport:
    return replace(report, ci=bootstrap_ci(values, resamples=resamples, seed=seed))


__all__ = [
    "InfeasibleStoreError",
    "PRUNE_POLICIES",
    "RatioReport",
    "SensitivityReport",
    "bootstrap_ci",
    "build_union_package",
    "invalidation_coverage",
    "package_ratio",
    "ranking",
    "sensitivity_audit",
    "spearman",
    "union_ratio",
]
