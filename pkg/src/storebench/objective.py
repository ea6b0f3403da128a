"""Clipped semantic-coverage utility and its incremental evaluation.

``F(X) = sum_r w_r * min(1, sum_{u in X} a_ur)``.  The value is normalized,
monotone and submodular; every solver and writer in this package relies on
those three properties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .package import Compiled, CostRule, Package, Store, UnknownCandidateError


class DuplicateCandidateError(ValueError):
    pass


def clipped(z: float) -> float:
    return z if z < 1.0 else 1.0


def value_from_z(z: Iterable[float], weights: Iterable[float]) -> float:
    return sum(w * clipped(zr) for w, zr in zip(weights, z) if w)


def gain(row, z, weights) -> float:
    """Marginal of a compiled coverage row given accumulated coverage ``z``."""
    g = 0.0
    for j, a in row:
        zr = z[j]
        if zr < 1.0:
            w = weights[j]
            if w:
                g += w * ((zr + a if zr + a < 1.0 else 1.0) - zr)
    return g


def _indices(ids: Iterable[str], comp: Compiled) -> list[int]:
    try:
        return [comp.index[cid] for cid in ids]
    except KeyError as exc:
        raise UnknownCandidateError(f"unknown candidate id {exc.args[0]!r}") from None


def coverage_z(store: Store | Iterable[str], pkg: Package) -> list[float]:
    comp = pkg.compiled()
    ids = store.selected if isinstance(store, Store) else store
    z = [0.0] * len(comp.unit_ids)
    # canonical order so equal stores give bit-identical sums
    for i in sorted(_indices(ids, comp)):
        for j, a in comp.rows[i]:
            z[j] += a
    return z


def coverage_value(store: Store | Iterable[str], pkg: Package) -> float:
    """F(X) recomputed from scratch."""
    comp = pkg.compiled()
    return value_from_z(coverage_z(store, pkg), comp.weights)


@dataclass(frozen=True)
class CoverageState:
    z: tuple[float, ...]
    value: float
    store: Store
    pkg: Package

    @classmethod
    def empty(cls, pkg: Package) -> CoverageState:
        comp = pkg.compiled()
        return cls(tuple(0.0 for _ in comp.unit_ids), 0.0, Store.of(()), pkg)

    @classmethod
    def of(cls, store: Store | Iterable[str], pkg: Package) -> CoverageState:
        ids = store.selected if isinstance(store, Store) else frozenset(store)
        z = coverage_z(ids, pkg)
        return cls(tuple(z), value_from_z(z, pkg.compiled().weights), Store.of(ids), pkg)


def marginal_gain(cand: str, state: CoverageState, pkg: Package | None = None) -> float:
    """Delta(u | X) = F(X + u) - F(X)."""
    pkg = pkg or state.pkg
    if cand in state.store.selected:
        raise DuplicateCandidateError(f"candidate {cand!r} already in store")
    comp = pkg.compiled()
    i = _indices([cand], comp)[0]
    return gain(comp.rows[i], state.z, comp.weights)


def incorporate(cand: str, state: CoverageState) -> CoverageState:
    if cand in state.store.selected:
        raise DuplicateCandidateError(f"candidate {cand!r} already in store")
    comp = state.pkg.compiled()
    i = _indices([cand], comp)[0]
    g = gain(comp.rows[i], state.z, comp.weights)
    z = list(state.z)
    for j, a in comp.rows[i]:
        z[j] += a
    store = Store(state.store.selected | {cand}, state.store.source)
    return CoverageState(tuple(z), state.value + g, store, state.pkg)


def singleton_values(pkg: Package) -> dict[str, float]:
    comp = pkg.compiled()
    zero = [0.0] * len(comp.unit_ids)
    return {cid: gain(comp.rows[i], zero, comp.weights) for i, cid in enumerate(comp.ids)}


__all__ = [
    "CoverageState",
    "DuplicateCandidateError",
    "coverage_value",
    "coverage_z",
    "incorporate",
    "marginal_gain",
    "singleton_values",
]
