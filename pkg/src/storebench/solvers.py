"""Exact package optima.

Two independent routes compute ``OPT_P(B)``:

* :func:`solve_exact_bnb` -- depth-first branch-and-bound over groups, pruning
  with an optimistic fractional bound on current marginal gains;
* :func:`solve_exact_enumeration` -- brute-force enumeration of every per-group
  assignment.  It shares no search or evaluation code with the B&B and is
  used as the certifier.

:func:`solve_milp` solves the linearized integer program with HiGHS; it is
only used as a third cross-check on small instances.

Tie-breaking: among optimal stores, solvers return the inclusion-minimal one
(no member can be dropped without losing value) whose sorted id sequence is
lexicographically smallest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

from .objective import coverage_value, gain
from .package import (
    BUDGET_TOL,
    DECIMALS,
    Compiled,
    CostRule,
    Package,
    Store,
    candidate_cost,
)

TIE_TOL = 1e-9
MINIMAL_TOL = 1e-12
DEFAULT_MAX_ASSIGNMENTS = 10**7


class AuditScopeError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True)
class SolveResult:
    opt_value: float
    opt_store: Store
    nodes_explored: int
    pruned_by_bound: int
    k: int
    budget: float
    exact: bool = True
    solver: str = "bnb"


@dataclass(frozen=True)
class CertificationRow:
    package_id: str
    budget: float
    k: int
    bnb_value: float
    audit_value: float
    equal: bool
    max_diff: float
    nodes_explored: int

    def as_dict(self) -> dict:
        return {
            "package_id": self.package_id,
            "budget": self.budget,
            "k": self.k,
            "bnb_value": self.bnb_value,
            "audit_value": self.audit_value,
            "equal": self.equal,
            "max_diff": self.max_diff,
            "nodes_explored": self.nodes_explored,
        }


# (value, live items [(index, gain, cost)], residual budget, compiled package, k) -> upper bound
BoundFn = Callable[[float, Sequence[tuple[int, float, float]], float, Compiled, int], float]


def _fractional_fill(value: float, items: Sequence[tuple[int, float, float]], residual: float) -> float:
    ranked = sorted(((g / c, g, c) for _, g, c in items), reverse=True)
    ub = value
    cap = residual
    for dens, g, c in ranked:
        if c <= cap:
            ub += g
            cap -= c
        else:
            ub += dens * max(cap, 0.0)
            break
    return ub


def group_bound(value: float, items, residual: float, comp: Compiled, k: int) -> float:
    """Fractional knapsack bound, tightened by the per-group top-``k`` gain sum."""
    frac = _fractional_fill(value, items, residual)
    by_group: dict[int, list[float]] = {}
    for i, g, _ in items:
        by_group.setdefault(comp.group_of[i], []).append(g)
    capped = value
    for gains in by_group.values():
        if len(gains) > k:
            gains.sort(reverse=True)
            gains = gains[:k]
        capped += sum(gains)
    return min(frac, capped)


def fractional_upper_bound(state, remaining, residual_budget: float, rule: CostRule | str = CostRule.WORD) -> float:
    """Admissible bound on the best completion of ``state`` using ``remaining``.

    Current value plus a fractional-knapsack fill of the remaining candidates
    ranked by current marginal density.  The group constraint is ignored.
    Candidates that cannot fit the residual budget on their own are skipped.
    """
    comp = state.pkg.compiled(rule)
    items = []
    for cid in remaining:
        i = comp.index[cid]
        if cid in state.store.selected:
            raise ValueError(f"remaining candidate {cid!r} is already in the store")
        c = comp.costs[i]
        if c > residual_budget + BUDGET_TOL:
            continue
        g = gain(comp.rows[i], state.z, comp.weights)
        if g > 0:
            items.append((i, g, c))
    return _fractional_fill(state.value, items, residual_budget)


def _static_orders(comp: Compiled, budget: float) -> list[list[int]]:
    zero = [0.0] * len(comp.unit_ids)
    single = [gain(comp.rows[i], zero, comp.weights) for i in range(len(comp.ids))]
    orders = []
    for members in comp.groups:
        useful = [i for i in members if single[i] > 0 and comp.costs[i] <= budget + BUDGET_TOL]
        # ids are index-ordered, so ties on singleton value fall back to id order
        orders.append(sorted(useful, key=lambda i: (-single[i], i)))
    return orders


def solve_exact_bnb(
    pkg: Package,
    budget: float,
    k: int = 1,
    rule: CostRule | str = CostRule.WORD,
    bound: BoundFn | None = None,
) -> SolveResult:
    """Certified-exact maximization of F over budget/partition feasible stores."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if k < 1:
        raise ValueError("k must be a positive integer")
    bound = bound or group_bound
    comp = pkg.compiled(rule)
    rows, weights, costs, ids = comp.rows, comp.weights, comp.costs, comp.ids
    orders = _static_orders(comp, budget)
    n_groups = len(orders)
    suffix: list[list[int]] = [[] for _ in range(n_groups + 1)]
    for d in range(n_groups - 1, -1, -1):
        suffix[d] = orders[d] + suffix[d + 1]

    z = [0.0] * len(comp.unit_ids)
    chosen: list[int] = []
    stats = {"nodes": 0, "pruned": 0}
    best = {"prune": -math.inf, "value": -math.inf, "ids": None, "idx": None}

    def is_minimal() -> bool:
        for i in chosen:
            loss = 0.0
            for j, a in rows[i]:
                zj = z[j]
                w = weights[j]
                if w:
                    hi = zj if zj < 1.0 else 1.0
                    lo = zj - a
                    lo = lo if lo < 1.0 else 1.0
                    loss += w * (hi - lo)
            if loss <= MINIMAL_TOL:
                return False
        return True

    def leaf(value: float) -> None:
        if value > best["prune"]:
            best["prune"] = value
        if value < best["value"] - TIE_TOL:
            return
        if not is_minimal():
            return
        sid = tuple(sorted(ids[i] for i in chosen))
        if value > best["value"] + TIE_TOL or best["ids"] is None or sid < best["ids"]:
            best["value"] = value
            best["ids"] = sid

    def apply(i: int) -> float:
        g = gain(rows[i], z, weights)
        for j, a in rows[i]:
            z[j] += a
        chosen.append(i)
        return g

    def dfs(d: int, value: float, used: float) -> None:
        stats["nodes"] += 1
        residual = budget - used
        live = []
        for i in suffix[d]:
            c = costs[i]
            if c <= residual + BUDGET_TOL:
                g = gain(rows[i], z, weights)
                if g > 0:
                    live.append((i, g, c))
        if not live:
            leaf(value)
            return
        if bound(value, live, residual, comp, k) < best["prune"] - TIE_TOL:
            stats["pruned"] += 1
            return
        group_live = [i for i, _, _ in live if comp.group_of[i] == d]
        for r in range(1, min(k, len(group_live)) + 1):
            for combo in combinations(group_live, r):
                c = sum(costs[i] for i in combo)
                if used + c > budget + BUDGET_TOL:
                    continue
                saved = z[:]
                n0 = len(chosen)
                total = value
                for i in combo:
                    g = apply(i)
                    if g <= 0:
                        break
                    total += g
                else:
                    dfs(d + 1, total, used + c)
                z[:] = saved
                del chosen[n0:]
        dfs(d + 1, value, used)

    dfs(0, 0.0, 0.0)
    store = Store.of(best["ids"] or (), "solver")
    value = coverage_value(store, pkg) if store.selected else 0.0
    return SolveResult(value, store, stats["nodes"], stats["pruned"], k, budget, True, "bnb")


# --- independent certifier ----------------------------------------------------


def _group_choices(n: int, k: int) -> int:
    return 1 + sum(math.comb(n, r) for r in range(1, min(n, k) + 1))


def assignment_count(pkg: Package, k: int = 1) -> int:
    return math.prod(_group_choices(len(g.members), k) for g in pkg.groups)


def _evaluate(store: Sequence[str], coverage: dict, weights: dict) -> float:
    totals = dict.fromkeys(weights, 0.0)
    for cid in store:
        for r, a in coverage[cid].items():
            totals[r] += a
    return sum(weights[r] * min(1.0, totals[r]) for r in sorted(weights))


def solve_exact_enumeration(
    pkg: Package,
    budget: float,
    k: int = 1,
    max_assignments: int = DEFAULT_MAX_ASSIGNMENTS,
    rule: CostRule | str = CostRule.WORD,
) -> SolveResult:
    """Exhaustive OPT: every per-group assignment (discard included) is scored.

    Prefixes that already exceed the budget are cut, which drops exactly the
    assignments the budget filter would reject.
    """
    total = assignment_count(pkg, k)
    if total > max_assignments:
        raise AuditScopeError(
            f"package {pkg.package_id!r} has {total} assignments under k={k}, "
            f"above the audit cap of {max_assignments}; shrink the instance"
        )
    weights = {u.unit_id: float(u.weight) for u in pkg.evidence_units}
    coverage = {c.candidate_id: dict(c.coverage_row) for c in pkg.candidates}
    cost = {c.candidate_id: candidate_cost(c, rule) for c in pkg.candidates}
    choices = []
    for g in pkg.groups:
        opts: list[tuple[str, ...]] = [()]
        for r in range(1, min(k, len(g.members)) + 1):
            opts.extend(combinations(sorted(g.members), r))
        choices.append(opts)

    best_value = -math.inf
    best_ids: tuple[str, ...] | None = None
    leaves = 0
    picked: list[str] = []

    def minimal(ids: tuple[str, ...], value: float) -> bool:
        return all(
            _evaluate([x for x in ids if x != cid], coverage, weights) < value - MINIMAL_TOL for cid in ids
        )

    def walk(d: int, spent: float) -> None:
        nonlocal best_value, best_ids, leaves
        if d == len(choices):
            leaves += 1
            ids = tuple(sorted(picked))
            value = _evaluate(ids, coverage, weights)
            if value < best_value - TIE_TOL:
                return
            if not minimal(ids, value):
                return
            if value > best_value + TIE_TOL or best_ids is None or ids < best_ids:
                best_value, best_ids = value, ids
            return
        for opt in choices[d]:
            c = sum(cost[cid] for cid in opt)
            if spent + c > budget + BUDGET_TOL:
                continue
            picked.extend(opt)
            walk(d + 1, spent + c)
            del picked[len(picked) - len(opt):]

    walk(0, 0.0)
    ids = best_ids or ()
    value = _evaluate(ids, coverage, weights) if ids else 0.0
    return SolveResult(value, Store.of(ids, "solver"), leaves, 0, k, budget, True, "enumeration")


def canonical(x: float) -> float:
    return round(x, DECIMALS) + 0.0


def certify(
    pkg: Package,
    budget: float,
    k: int = 1,
    rule: CostRule | str = CostRule.WORD,
    bound: BoundFn | None = None,
    max_assignments: int = DEFAULT_MAX_ASSIGNMENTS,
) -> CertificationRow:
    """Cross-check B&B against enumeration on objective value only."""
    audit = solve_exact_enumeration(pkg, budget, k, max_assignments, rule)
    bnb = solve_exact_bnb(pkg, budget, k, rule, bound=bound)
    a, b = canonical(audit.opt_value), canonical(bnb.opt_value)
    diff = canonical(abs(a - b))
    return CertificationRow(pkg.package_id, budget, k, b, a, diff == 0.0, diff, bnb.nodes_explored)


# --- MILP formulation -----------------------------------------------------------


@dataclass(frozen=True)
class MilpModel:
    """``max sum_r w_r y_r`` s.t. budget, per-group ``<= k``, ``y_r <= sum_u a_ur x_u``, ``0 <= y_r <= 1``.

    Variables are ordered ``x`` (one binary per candidate) then ``y`` (one
    continuous per evidence unit).
    """

    objective: list[float]  # minimization form
    rows: list[list[float]]
    upper: list[float]
    integrality: list[int]
    n_candidates: int
    n_units: int


def milp_model(pkg: Package, budget: float, k: int = 1, rule: CostRule | str = CostRule.WORD) -> MilpModel:
    comp = pkg.compiled(rule)
    n, m = len(comp.ids), len(comp.unit_ids)
    objective = [0.0] * n + [-w for w in comp.weights]
    rows = [list(comp.costs) + [0.0] * m]
    upper = [budget]
    for members in comp.groups:
        row = [0.0] * (n + m)
        for i in members:
            row[i] = 1.0
        rows.append(row)
        upper.append(float(k))
    for j in range(m):
        row = [0.0] * (n + m)
        row[n + j] = 1.0
        for i in range(n):
            for jj, a in comp.rows[i]:
                if jj == j:
                    row[i] -= a
        rows.append(row)
        upper.append(0.0)
    return MilpModel(objective, rows, upper, [1] * n + [0] * m, n, m)


def solve_milp(pkg: Package, budget: float, k: int = 1, rule: CostRule | str = CostRule.WORD) -> SolveResult:
    """Solve the linearized program with HiGHS (scipy).  Cross-check only."""
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp

    model = milp_model(pkg, budget, k, rule)
    comp = pkg.compiled(rule)
    if model.n_candidates == 0:
        return SolveResult(0.0, Store.of((), "solver"), 0, 0, k, budget, True, "milp")
    res = milp(
        c=np.array(model.objective),
        constraints=[LinearConstraint(np.array(model.rows), -np.inf, np.array(model.upper) + BUDGET_TOL)],
        integrality=np.array(model.integrality),
        bounds=Bounds(0.0, 1.0),
        options={"mip_rel_gap": 0.0},
    )
    if not res.success:
        raise RuntimeError(f"MILP solve failed: {res.message}")
    ids = [comp.ids[i] for i in range(model.n_candidates) if res.x[i] > 0.5]
    store = Store.of(ids, "solver")
    return SolveResult(coverage_value(store, pkg), store, 0, 0, k, budget, True, "milp")
