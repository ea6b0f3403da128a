"""Insertion-only memory writers and export pruning policies.

All writers see groups in experience order (ascending group id), decide once
per group, and never evict.  Each returns a :class:`WriterResult` whose store is
feasible for ``(budget, k=1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .exports import ExportedMemory
from .objective import coverage_value, gain
from .package import (
    BUDGET_TOL,
    VALIDITY_KINDS,
    CandidateKind,
    CostRule,
    Package,
    Store,
)
from .rng import XorShift64Star
from .solvers import SolveResult, solve_exact_bnb

DEFAULT_EPSILON = 0.1
ALL_KINDS = frozenset(CandidateKind)
NO_TOMBSTONE_KINDS = ALL_KINDS - VALIDITY_KINDS
FACT_ONLY_KINDS = frozenset({CandidateKind.ATOMIC_FACT})
SUMMARY_ONLY_KINDS = frozenset({CandidateKind.ENTITY_SUMMARY})


@dataclass(frozen=True)
class TraceStep:
    group_id: int
    chosen: str | None
    marginal: float
    action: str = "insert"  # insert | discard; never evict

    def as_dict(self) -> dict:
        return {"group_id": self.group_id, "chosen": self.chosen, "marginal": self.marginal, "action": self.action}


@dataclass(frozen=True)
class WriterResult:
    store: Store
    method: str
    value: float
    grid_lambda_used: float | None = None
    trace: tuple[TraceStep, ...] = ()
    warnings: tuple[str, ...] = ()
    estimated_value: float | None = None

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(step.as_dict(), sort_keys=True) + "\n" for step in self.trace)


@dataclass(frozen=True)
class ThresholdGrid:
    lambdas: tuple[float, ...]
    epsilon: float

    @classmethod
    def geometric(cls, lam_max: float, lam_min: float, epsilon: float = DEFAULT_EPSILON) -> ThresholdGrid:
        """Descending grid ``lam_max * (1 - eps)**j`` down to the first point at or below ``lam_min``."""
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < lam_min <= lam_max:
            raise ValueError("need 0 < lam_min <= lam_max")
        out = [lam_max]
        while out[-1] > lam_min:
            out.append(out[-1] * (1 - epsilon))
        return cls(tuple(out), epsilon)

    @classmethod
    def for_package(
        cls,
        pkg: Package,
        budget: float,
        epsilon: float = DEFAULT_EPSILON,
        rule: CostRule | str = CostRule.WORD,
    ) -> ThresholdGrid:
        """Grid that brackets ``OPT / (2B)`` without knowing OPT.

        Top: the largest singleton density among candidates that fit.  Bottom:
        the smaller of ``top * eps / (2|U|)`` and ``max singleton value / (2B)``;
        the latter is a lower bound on ``OPT / (2B)``.
        """
        comp = pkg.compiled(rule)
        zero = [0.0] * len(comp.unit_ids)
        dens, vals = [], []
        for i, c in enumerate(comp.costs):
            if c <= budget + BUDGET_TOL:
                v = gain(comp.rows[i], zero, comp.weights)
                if v > 0:
                    dens.append(v / c)
                    vals.append(v)
        if not dens or budget <= 0:
            return cls((1.0,), epsilon)
        top = max(dens)
        bottom = min(top * epsilon / (2 * len(comp.ids)), max(vals) / (2 * budget))
        return cls.geometric(top, bottom, epsilon)

    def brackets(self, target: float) -> bool:
        return any((1 - self.epsilon) * target - 1e-15 <= lam <= target + 1e-15 for lam in self.lambdas)


# scorer(true marginal, candidate index) -> the marginal the writer believes in
Estimator = Callable[[float, int], float]


def _exact(g: float, i: int) -> float:
    return g


def _stream(
    pkg: Package,
    budget: float,
    rule: CostRule | str,
    choose: Callable[[list[tuple[int, float, float, float]]], int | None],
    estimator: Estimator = _exact,
    order: Iterable[int] | None = None,
) -> tuple[list[int], list[TraceStep], float]:
    comp = pkg.compiled(rule)
    z = [0.0] * len(comp.unit_ids)
    used = 0.0
    chosen: list[int] = []
    trace: list[TraceStep] = []
    est_total = 0.0
    for gi in order if order is not None else range(len(comp.groups)):
        options = []
        for i in comp.groups[gi]:
            c = comp.costs[i]
            if used + c > budget + BUDGET_TOL:
                continue
            g = gain(comp.rows[i], z, comp.weights)
            options.append((i, g, estimator(g, i), c))
        pick = choose(options) if options else None
        if pick is None:
            trace.append(TraceStep(comp.group_ids[gi], None, 0.0, "discard"))
            continue
        i, g, est, c = next(o for o in options if o[0] == pick)
        for j, a in comp.rows[i]:
            z[j] += a
        used += c
        est_total += est
        chosen.append(i)
        trace.append(TraceStep(comp.group_ids[gi], comp.ids[i], g))
    return chosen, trace, est_total


def _result(pkg, chosen, trace, method, rule, **kw) -> WriterResult:
    comp = pkg.compiled(rule)
    store = Store.of((comp.ids[i] for i in chosen), "writer")
    return WriterResult(store, method, coverage_value(store, pkg), trace=tuple(trace), **kw)


def _threshold_rule(lam: float):
    def choose(options):
        admissible = [(est, i) for i, _, est, c in options if est > 0 and est / c >= lam]
        if not admissible:
            return None
        # largest (estimated) raw marginal; ties -> smallest id (= smallest index)
        return min(admissible, key=lambda t: (-t[0], t[1]))[1]

    return choose


def gvt_write(
    pkg: Package,
    budget: float,
    lam: float,
    rule: CostRule | str = CostRule.WORD,
    estimator: Estimator = _exact,
    method: str = "gvt",
) -> WriterResult:
    """Grouped value-threshold writer at one threshold."""
    chosen, trace, est = _stream(pkg, budget, rule, _threshold_rule(lam), estimator)
    return _result(pkg, chosen, trace, method, rule, grid_lambda_used=lam, estimated_value=est)


def small_item_violations(pkg: Package, budget: float, rule: CostRule | str = CostRule.WORD) -> list[str]:
    return [c.candidate_id for c in pkg.candidates if pkg.cost(c.candidate_id, rule) > budget / 2 + BUDGET_TOL]


def small_item_restriction(pkg: Package, budget: float, rule: CostRule | str = CostRule.WORD) -> Package:
    """Sub-package holding only candidates with cost <= budget / 2."""
    bad = set(small_item_violations(pkg, budget, rule))
    return pkg.subpackage((cid for cid in pkg.candidate_ids if cid not in bad), suffix=f"small-{budget:g}")


def _best_over_grid(pkg, budget, grid, rule, estimator_for, method) -> WriterResult:
    warnings = ()
    bad = small_item_violations(pkg, budget, rule)
    if bad:
        warnings = (f"small-item condition violated by {len(bad)} candidate(s) (cost > B/2): "
                    f"{', '.join(bad[:5])}{' ...' if len(bad) > 5 else ''}; guarantee void",)
    best = None
    best_key = -math.inf
    for t, lam in enumerate(grid.lambdas):
        res = gvt_write(pkg, budget, lam, rule, estimator_for(t), method)
        key = res.value
        if key > best_key + 1e-12:
            best, best_key = res, key
    assert best is not None
    return WriterResult(best.store, method, best.value, best.grid_lambda_used, best.trace, warnings,
                        best.estimated_value)


def gvt_best_over_grid(
    pkg: Package,
    budget: float,
    grid: ThresholdGrid | None = None,
    rule: CostRule | str = CostRule.WORD,
    epsilon: float = DEFAULT_EPSILON,
) -> WriterResult:
    """Best GVT run over a threshold grid (ties keep the larger threshold)."""
    grid = grid or ThresholdGrid.for_package(pkg, budget, epsilon, rule)
    return _best_over_grid(pkg, budget, grid, rule, lambda t: _exact, "gvt")


def lognormal_factors(n: int, sigma: float, seed: int) -> list[float]:
    if sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    rng = XorShift64Star(seed)
    return [rng.lognormal(sigma) for _ in range(n)]


def estimated_gvt_write(
    pkg: Package,
    budget: float,
    grid: ThresholdGrid | None = None,
    sigma: float = 0.5,
    seed: int = 0,
    rule: CostRule | str = CostRule.WORD,
    epsilon: float = DEFAULT_EPSILON,
) -> WriterResult:
    """GVT whose threshold test and argmax see noisy marginals.

    Every (grid run, candidate) decision point draws its own factor
    ``exp(sigma * N(0, 1))`` from a stream spawned off ``seed``.  Reported
    values, and the choice of the best grid run, use the true coverage.
    """
    if sigma < 0:
        raise ValueError("noise sigma must be nonnegative")
    grid = grid or ThresholdGrid.for_package(pkg, budget, epsilon, rule)
    root = XorShift64Star(seed)
    n = len(pkg.candidates)

    def estimator_for(t: int) -> Estimator:
        factors = lognormal_factors(n, sigma, root.spawn(t).next_u64())
        return lambda g, i: g * factors[i]

    return _best_over_grid(pkg, budget, grid, rule, estimator_for, "estimated_gvt")


def density_only_write(pkg: Package, budget: float, rule: CostRule | str = CostRule.WORD) -> WriterResult:
    """Per group, insert the fitting candidate with the best marginal per unit cost."""

    def choose(options):
        positive = [(g / c, i) for i, g, _, c in options if g > 0]
        if not positive:
            return None
        return min(positive, key=lambda t: (-t[0], t[1]))[1]

    chosen, trace, _ = _stream(pkg, budget, rule, choose)
    return _result(pkg, chosen, trace, "density_only", rule)


def recency_raw_write(pkg: Package, budget: float, rule: CostRule | str = CostRule.WORD) -> WriterResult:
    """Newest experience first, keep each raw span that still fits."""
    comp = pkg.compiled(rule)
    raw = {i for i, c in enumerate(pkg.candidates) if c.kind == CandidateKind.RAW_SPAN}

    def choose(options):
        fits = [i for i, _, _, _ in options if i in raw]
        return min(fits) if fits else None

    order = range(len(comp.groups) - 1, -1, -1)
    chosen, trace, _ = _stream(pkg, budget, rule, choose, order=order)
    return _result(pkg, chosen, trace, "recency_raw", rule)


def restricted_exact(
    pkg: Package,
    budget: float,
    allowed_kinds: Iterable[CandidateKind | str],
    k: int = 1,
    rule: CostRule | str = CostRule.WORD,
    drop_validity: bool = False,
) -> SolveResult:
    """Exact OPT over the candidates whose kind is allowed.

    With ``drop_validity`` every validity-bearing candidate is removed too,
    whatever its kind.
    """
    allowed = {CandidateKind(x) for x in allowed_kinds}
    if not allowed:
        raise ValueError("allowed_kinds must be nonempty")
    keep = [
        c.candidate_id
        for c in pkg.candidates
        if c.kind in allowed and not (drop_validity and c.validity_flag)
    ]
    sub = pkg.subpackage(keep, suffix="restricted")
    res = solve_exact_bnb(sub, budget, k, rule)
    return res


def no_tombstone_opt(pkg: Package, budget: float, k: int = 1, rule: CostRule | str = CostRule.WORD) -> SolveResult:
    return restricted_exact(pkg, budget, NO_TOMBSTONE_KINDS, k, rule, drop_validity=True)


PRUNE_POLICIES = ("recency", "salience", "upper")


class MissingSalienceError(ValueError):
    pass


def prune_exported(
    memories: Sequence[ExportedMemory],
    budget: float,
    policy: str,
    pkg_union: Package,
    rule: CostRule | str = CostRule.WORD,
) -> Store:
    """Cut an exported store down to the budget.

    ``recency`` and ``salience`` walk the memories newest-first or most-salient
    first, skipping any memory that no longer fits.  ``upper`` is the exact
    optimum over the exported memories alone (analysis only).
    """
    ids = [m.candidate_id for m in memories]
    for cid in ids:
        pkg_union.candidate(cid)
    if policy == "upper":
        sub = pkg_union.subpackage(ids, suffix="export-only")
        return Store(solve_exact_bnb(sub, budget, 1, rule).opt_store.selected, "pruned")
    if policy == "recency":
        ranked = sorted(memories, key=lambda m: (-m.timestamp, m.memory_id))
    elif policy == "salience":
        missing = [m.memory_id for m in memories if m.salience is None]
        if missing:
            raise MissingSalienceError(f"salience pruning needs scores; missing for {missing[:5]}")
        ranked = sorted(memories, key=lambda m: (-m.salience, m.memory_id))
    else:
        raise ValueError(f"unknown prune policy {policy!r}; expected one of {PRUNE_POLICIES}")
    kept, used = [], 0.0
    for m in ranked:
        c = pkg_union.cost(m.candidate_id, rule)
        if used + c <= budget + BUDGET_TOL:
            kept.append(m.candidate_id)
            used += c
    return Store.of(kept, "pruned")


WRITERS = {
    "gvt": gvt_best_over_grid,
    "estimated_gvt": estimated_gvt_write,
    "density_only": density_only_write,
    "recency_raw": recency_raw_write,
}
