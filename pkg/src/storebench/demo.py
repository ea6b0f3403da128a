"""Synthetic exported stores for scoring and sensitivity runs.

The demo package is an ordinary generated package whose explicit costs are
dropped, so candidate cost comes from text under either cost rule.  Three
made-up systems then "write" memories over its evidence units:

* ``compact``: one short note per current fact and per transition.
* ``verbose``: long paraphrases of the same facts.
* ``noisy``: notes about stale facts and incidental events.
* ``archive``: a single full-history dump that fits no demo budget under
  either rule.

Each system is scored under one pruning policy (``DEMO_POLICIES``), and the
systems differ enough in quality that their ranking does not depend on the
cost rule.
"""

from __future__ import annotations

from dataclasses import replace

from .exports import ExportedMemory, ExportedStore
from .generator import GeneratorParams, generate_small
from .package import CostRule, Package
from .rng import XorShift64Star

DEMO_BUDGETS = (20.0, 30.0, 50.0)
DEMO_POLICIES = {"compact": ("salience",), "verbose": ("recency",), "noisy": ("salience",), "archive": ("recency",)}
DEMO_SEED = 7

_FILLER = ("the user said this again later in a longer conversation about plans and people they know "
           "and it came up while they were talking about the week").split()


def demo_package(seed: int = DEMO_SEED, num_experiences: int = 8) -> Package:
    pkg = generate_small(GeneratorParams(seed=seed, num_experiences=num_experiences))
    cands = [replace(c, explicit_cost=None) for c in pkg.candidates]
    return Package.build(
        f"demo-{seed:06d}", cands, pkg.evidence_units, groups=pkg.groups,
        objective_kind=pkg.objective_kind, metadata={**pkg.metadata, "demo": True},
    )


def _step(unit_id: str) -> int:
    return int(unit_id[1:3])


def _pad(text: str, words: int) -> str:
    out = text.split()
    i = 0
    while len(out) < words:
        out.append(_FILLER[i % len(_FILLER)])
        i += 1
    return " ".join(out)


def demo_exports(pkg: Package, seed: int = DEMO_SEED) -> list[ExportedStore]:
    rng = XorShift64Star(seed)
    units = pkg.evidence_units
    heavy = sorted((u for u in units if u.weight >= 0.5), key=lambda u: u.unit_id)
    light = sorted((u for u in units if u.weight < 0.5), key=lambda u: u.unit_id)

    compact = []
    for n, u in enumerate(heavy):
        compact.append(ExportedMemory(
            f"c{n:02d}", f"{u.description}", _step(u.unit_id), {u.unit_id: 1.0},
            round(0.5 + 0.5 * u.weight, 6), source_system="compact",
        ))

    verbose = []
    for n, u in enumerate(heavy):
        verbose.append(ExportedMemory(
            f"v{n:02d}", _pad(f"on step {_step(u.unit_id)} {u.description}", 16), _step(u.unit_id),
            {u.unit_id: 0.9}, round(rng.uniform(0.2, 0.9), 6), source_system="verbose",
        ))

    noisy = []
    for n, u in enumerate(light):
        noisy.append(ExportedMemory(
            f"n{n:02d}", _pad(f"maybe {u.description}", 8), _step(u.unit_id), {u.unit_id: 0.6},
            round(rng.uniform(0.1, 1.0), 6), source_system="noisy",
        ))
    dump = ExportedMemory(
        "dump", _pad("full transcript dump", 450), max(_step(u.unit_id) for u in units) + 1,
        {u.unit_id: 1.0 for u in units}, 1.0, source_system="archive",
    )
    return [ExportedStore("compact", tuple(compact)), ExportedStore("verbose", tuple(verbose)),
            ExportedStore("noisy", tuple(noisy)), ExportedStore("archive", (dump,))]


def oversized_ids(exports: list[ExportedStore], budget: float) -> list[str]:
    """Memories that exceed ``budget`` under every cost rule."""
    return sorted(
        m.candidate_id
        for e in exports
        for m in e.memories
        if all(m.cost_under(r) > budget for r in CostRule)
    )


def random_export(pkg: Package, seed: int, system: str = "synthetic", size: int | None = None) -> ExportedStore:
    """A random export over the package's evidence units (for union-law checks)."""
    rng = XorShift64Star(seed)
    units = [u.unit_id for u in pkg.evidence_units]
    size = size if size is not None else rng.randint(1, max(1, len(units)))
    out = []
    for n in range(size):
        row = {}
        for _ in range(rng.randint(1, 3)):
            row[rng.choice(units)] = round(rng.uniform(0.2, 1.0), 6)
        cost = round(rng.uniform(0.2, 3.0), 6)
        out.append(ExportedMemory(
            f"m{n:03d}", f"memory {n}", rng.randint(0, 50), row, round(rng.random(), 6),
            {"word": cost, "byte_overhead": cost}, system,
        ))
    return ExportedStore(system, tuple(out))


def unique_coverage_export(pkg: Package, budget: float) -> ExportedStore:
    """Export whose cheap bundled memory beats every package-feasible store.

    The bundle restates everything the package optimum covers plus every
    unit the optimum misses, for half the budget.  A newer, weak memory takes
    the other half, so recency pruning keeps both and the union optimum
    (bundle plus package candidates) is at least as good.
    """
    units = pkg.evidence_units
    bundle_row = {u.unit_id: 1.0 for u in units}
    weakest = min(units, key=lambda u: (u.weight, u.unit_id))
    half = round(budget / 2, 6)
    last = max((_step(u.unit_id) for u in units if u.unit_id[1:3].isdigit()), default=0)
    bundle = ExportedMemory("bundle", "compressed bundle of the whole history", last,
                            bundle_row, 0.9, {r.value: half for r in CostRule}, "bundler")
    weak = ExportedMemory("weak", "small talk", last + 1, {weakest.unit_id: 0.1}, 0.1,
                          {r.value: half for r in CostRule}, "bundler")
    return ExportedStore("bundler", (bundle, weak))


__all__ = [
    "DEMO_BUDGETS",
    "DEMO_POLICIES",
    "demo_exports",
    "demo_package",
    "oversized_ids",
    "random_export",
    "unique_coverage_export",
]
