"""Suite generation, budget sweeps, certification runs and export scoring.

All outputs are plain files.  Rows are produced by pure per-cell functions
and written by one collector in a fixed order, so a run with ``jobs > 1``
writes the same bytes as a serial run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .demo import DEMO_POLICIES
from .exports import ExportedStore
from .generator import (
    DISTRIBUTIONS,
    SWEEP_BUDGETS,
    GeneratorParams,
    generate_audit_suite,
    generate_stress,
)
from .package import CostRule, Package, canonical_json, parse_package, write_package
from .scoring import bootstrap_ci, invalidation_coverage, ranking, sensitivity_audit, spearman, union_ratio
from .solvers import BoundFn, SolveResult, certify, solve_exact_bnb
from .writers import (
    FACT_ONLY_KINDS,
    PRUNE_POLICIES,
    SUMMARY_ONLY_KINDS,
    WRITERS,
    estimated_gvt_write,
    no_tombstone_opt,
    restricted_exact,
)

CACHE_VERSION = "1"
EXACT_METHODS = ("opt", "no_tombstone_opt", "fact_only_opt", "summary_only_opt")
METHODS = tuple(WRITERS) + EXACT_METHODS

SWEEP_FIELDS = (
    "seed", "package_id", "budget", "method", "cost_rule", "k", "value", "opt", "ratio",
    "invalidation_coverage", "opt_invalidation_coverage", "denominator_solver", "certified", "store",
)
CERT_FIELDS = ("package_id", "budget", "k", "bnb_value", "audit_value", "equal", "max_diff", "nodes_explored")
SCORE_FIELDS = (
    "system", "policy", "budget", "cost_rule", "k", "denominator_kind", "value", "denominator", "ratio",
    "invalidation_coverage", "analysis_only", "denominator_solver", "certified",
)


class HarnessError(Exception):
    """Bad input data (missing manifest, unreadable package, ...)."""


class CertificationError(Exception):
    def __init__(self, message: str, rows: Sequence[Mapping[str, Any]] = ()):
        super().__init__(message)
        self.rows = list(rows)


def fmt(x: Any) -> str:
    """CSV cell text; floats are fixed to six decimals so files are byte-stable."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x + 0.0:.6f}"
    return str(x)


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([fmt(row.get(f)) for f in fields])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, obj: Any) -> None:
    path.write_bytes(canonical_json(obj) + b"\n")


def parse_budgets(text: str | Sequence[float] | None, default: Sequence[float] = SWEEP_BUDGETS) -> list[float]:
    if text is None:
        return [float(b) for b in default]
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for item in items:
        b = float(item)
        if not math.isfinite(b) or b <= 0:
            raise ValueError(f"budgets must be positive, got {item!r}")
        out.append(b)
    if not out:
        raise ValueError("at least one budget is required")
    return out


def parse_methods(text: str | Sequence[str] | None) -> list[str]:
    if text is None:
        return ["opt", "gvt", "estimated_gvt", "density_only", "recency_raw", "no_tombstone_opt"]
    items = [m.strip() for m in text.split(",")] if isinstance(text, str) else list(text)
    unknown = [m for m in items if m not in METHODS]
    if unknown or not items:
        raise ValueError(f"unknown methods {unknown}; expected a subset of {list(METHODS)}")
    return items


# --- generate -----------------------------------------------------------------


def cmd_generate(
    distribution: str,
    n_seeds: int,
    out_dir: str | os.PathLike,
    seed: int = 0,
    overrides: Mapping[str, Any] | None = None,
    budgets: Sequence[float] = SWEEP_BUDGETS,
) -> Path:
    """Write ``n_seeds`` packages plus ``manifest.json``; returns the manifest path."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    out = Path(out_dir)
    pkg_dir = out / "packages"
    pkg_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(seed, seed + n_seeds):
        params = GeneratorParams.from_overrides(overrides, seed=s, distribution=distribution)
        pkg = generate_stress(params)
        name = f"{distribution}_{s:06d}.json"
        write_package(pkg, pkg_dir / name)
        data = (pkg_dir / name).read_bytes()
        entries.append({"file": f"packages/{name}", "seed": s, "package_id": pkg.package_id,
                        "sha256": hashlib.sha256(data).hexdigest()})
    manifest = {
        "distribution": distribution,
        "seed": seed,
        "n_seeds": n_seeds,
        "overrides": dict(overrides or {}),
        "budgets": [float(b) for b in budgets],
        "packages": entries,
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def load_manifest(path: str | os.PathLike) -> tuple[dict, list[tuple[int, Path]]]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise HarnessError(f"manifest not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise HarnessError(f"{path}: unreadable manifest ({exc})") from None
    try:
        files = [(int(e["seed"]), path.parent / e["file"]) for e in manifest["packages"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise HarnessError(f"{path}: malformed manifest entry ({exc})") from None
    return manifest, files


# --- sweep --------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    manifest: str
    budgets: tuple[float, ...] = SWEEP_BUDGETS
    methods: tuple[str, ...] = ("opt", "gvt", "estimated_gvt", "density_only", "recency_raw", "no_tombstone_opt")
    cost_rule: CostRule = CostRule.WORD
    k: int = 1
    out_dir: str = "out"
    resamples: int = 10_000
    ci_seed: int = 0
    sigma: float = 0.5
    jobs: int = 1
    use_cache: bool = True

    def validate(self) -> None:
        parse_budgets(self.budgets)
        parse_methods(self.methods)
        if self.k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.resamples < 1:
            raise ValueError("resamples must be at least 1")


class UncertifiedDenominatorError(CertificationError):
    pass


def _exact_method(method: str, pkg: Package, budget: float, k: int, rule: CostRule) -> SolveResult:
    if method == "no_tombstone_opt":
        return no_tombstone_opt(pkg, budget, k, rule)
    if method == "fact_only_opt":
        return restricted_exact(pkg, budget, FACT_ONLY_KINDS, k, rule)
    if method == "summary_only_opt":
        return restricted_exact(pkg, budget, SUMMARY_ONLY_KINDS, k, rule)
    raise ValueError(method)


def _method_store(method: str, pkg: Package, budget: float, k: int, rule: CostRule, seed: int,
                  sigma: float, opt: SolveResult):
    if method == "opt":
        return opt.opt_store, opt.opt_value
    if method in EXACT_METHODS:
        res = _exact_method(method, pkg, budget, k, rule)
        return res.opt_store, res.opt_value
    if method == "estimated_gvt":
        res = estimated_gvt_write(pkg, budget, sigma=sigma, seed=seed, rule=rule)
    else:
        res = WRITERS[method](pkg, budget, rule=rule)
    return res.store, res.value


def cell_key(pkg_bytes: bytes, budget: float, method: str, rule: CostRule, k: int, sigma: float, seed: int) -> str:
    h = hashlib.sha256()
    h.update(pkg_bytes)
    h.update(canonical_json({"v": CACHE_VERSION, "budget": budget, "method": method, "rule": rule.value,
                             "k": k, "sigma": sigma, "seed": seed}))
    return h.hexdigest()


def _sweep_unit(args) -> list[dict]:
    """All requested methods for one (package, budget); OPT is solved once."""
    pkg_path, seed, budget, methods, rule, k, sigma, cache_dir = args
    data = Path(pkg_path).read_bytes()
    pkg = parse_package(data)
    rows: list[dict | None] = []
    todo = []
    for m in methods:
        key = cell_key(data, budget, m, rule, k, sigma, seed)
        cached = Path(cache_dir) / f"{key}.json" if cache_dir else None
        if cached is not None and cached.exists():
            rows.append(json.loads(cached.read_text(encoding="utf-8")))
        else:
            rows.append(None)
            todo.append((len(rows) - 1, m, cached))
    if todo:
        opt = solve_exact_bnb(pkg, budget, k, rule)
        if not opt.exact:
            raise UncertifiedDenominatorError(f"{pkg.package_id} B={budget}: denominator not certified")
        opt_inv = invalidation_coverage(opt.opt_store, pkg)
        for pos, m, cached in todo:
            store, value = _method_store(m, pkg, budget, k, rule, seed, sigma, opt)
            row = {
                "seed": seed,
                "package_id": pkg.package_id,
                "budget": budget,
                "method": m,
                "cost_rule": rule.value,
                "k": k,
                "value": round(value, 6),
                "opt": round(opt.opt_value, 6),
                "ratio": None if opt.opt_value <= 0 else round(value / opt.opt_value, 6),
                "invalidation_coverage": round(invalidation_coverage(store, pkg), 6),
                "opt_invalidation_coverage": round(opt_inv, 6),
                "denominator_solver": opt.solver,
                "certified": opt.exact,
                "store": ";".join(store.sorted_ids()),
            }
            rows[pos] = row
            if cached is not None:
                tmp = cached.with_suffix(".tmp")
                tmp.write_bytes(canonical_json(row))
                os.replace(tmp, cached)
    return rows  # type: ignore[return-value]


def summarize(rows: Sequence[Mapping[str, Any]], resamples: int = 10_000, seed: int = 0) -> dict:
    cells: dict[tuple[float, str], list[Mapping[str, Any]]] = {}
    for r in rows:
        cells.setdefault((float(r["budget"]), r["method"]), []).append(r)
    out = []
    for (budget, method), rs in sorted(cells.items()):
        ratios = [float(r["ratio"]) for r in rs if r["ratio"] is not None]
        entry: dict[str, Any] = {
            "budget": budget,
            "method": method,
            "n": len(ratios),
            "excluded_null": len(rs) - len(ratios),
            "mean_invalidation_coverage": round(sum(float(r["invalidation_coverage"]) for r in rs) / len(rs), 6),
            "mean_opt_invalidation_coverage": round(
                sum(float(r["opt_invalidation_coverage"]) for r in rs) / len(rs), 6),
        }
        if ratios:
            lo, hi = bootstrap_ci(ratios, resamples=resamples, seed=seed)
            entry.update(mean_ratio=round(sum(ratios) / len(ratios), 6), ci_low=round(lo, 6), ci_high=round(hi, 6))
        else:
            entry.update(mean_ratio=None, ci_low=None, ci_high=None)
        out.append(entry)
    return {"cells": out}


def plot_data(summary: Mapping[str, Any]) -> dict:
    """Series keyed by method: ``[budget, mean, ci_low, ci_high]`` and invalidation coverage."""
    ratio: dict[str, list] = {}
    inv: dict[str, list] = {}
    for c in summary["cells"]:
        ratio.setdefault(c["method"], []).append([c["budget"], c["mean_ratio"], c["ci_low"], c["ci_high"]])
        inv.setdefault(c["method"], []).append([c["budget"], c["mean_invalidation_coverage"]])
    return {"x": "budget", "ratio": ratio, "invalidation_coverage": inv}


def cmd_sweep(config: SweepConfig) -> dict:
    config.validate()
    manifest, files = load_manifest(config.manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = out / "cache"
    if config.use_cache:
        cache_dir.mkdir(exist_ok=True)
    for _, f in files:
        if not f.exists():
            raise HarnessError(f"package listed in manifest is missing: {f}")
    units = [
        (str(f), s, float(b), tuple(config.methods), config.cost_rule, config.k, config.sigma,
         str(cache_dir) if config.use_cache else None)
        for s, f in files
        for b in config.budgets
    ]
    if config.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(_sweep_unit, units, chunksize=max(1, len(units) // (4 * config.jobs))))
    else:
        chunks = [_sweep_unit(u) for u in units]
    rows = [r for chunk in chunks for r in chunk]
    for r in rows:
        if not r["certified"]:
            raise UncertifiedDenominatorError(f"{r['package_id']} B={r['budget']}: uncertified denominator")
    write_csv(out / "results.csv", SWEEP_FIELDS, rows)
    summary = summarize(rows, config.resamples, config.ci_seed)
    summary.update(
        # content hash, not the path: runs in different directories must match byte for byte
        manifest_sha256=hashlib.sha256(canonical_json(manifest)).hexdigest(),
        distribution=manifest.get("distribution"),
        n_packages=len(files),
        cost_rule=config.cost_rule.value,
        k=config.k,
        sigma=config.sigma,
        resamples=config.resamples,
        ci_level=0.95,
    )
    write_json(out / "summary.json", summary)
    write_json(out / "plot_data.json", plot_data(summary))
    return summary


# --- certify ------------------------------------------------------------------


def cmd_certify(
    n: int,
    seed: int,
    out: str | os.PathLike,
    k: int = 1,
    rule: CostRule = CostRule.WORD,
    bound: BoundFn | None = None,
) -> list[dict]:
    """Certify B&B against enumeration on an audit suite; raises on any unequal row."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rows = []
    for pkg, budget in generate_audit_suite(n, seed):
        rows.append(certify(pkg, budget, k, rule, bound=bound).as_dict())
    out = Path(out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "certification.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, CERT_FIELDS, rows)
    bad = [r for r in rows if not r["equal"]]
    if bad:
        raise CertificationError(f"{len(bad)} of {len(rows)} rows disagree", bad)
    return rows


# --- score-export ---------------------------------------------------------------


def cmd_score_export(
    exports: Sequence[ExportedStore],
    pkg: Package,
    budgets: Sequence[float],
    policies: Sequence[str] = PRUNE_POLICIES,
    rules: Sequence[CostRule] = (CostRule.WORD,),
    out: str | os.PathLike = "out",
    k: int = 1,
) -> dict:
    """Union-denominator rows plus package-denominator rows per (budget, policy, rule)."""
    for p in policies:
        if p not in PRUNE_POLICIES:
            raise ValueError(f"unknown prune policy {p!r}; expected one of {PRUNE_POLICIES}")
    rows = []
    scores: dict[str, dict[str, float | None]] = {}
    for rule in rules:
        for budget in budgets:
            opt = solve_exact_bnb(pkg, budget, k, rule)
            for exp in exports:
                for policy in policies:
                    rep = union_ratio(exp, pkg, budget, policy, rule, k, package_opt=opt)
                    base = {"system": exp.system, "policy": policy, "budget": budget, "cost_rule": rule.value,
                            "k": k, "value": round(rep.value, 6),
                            "invalidation_coverage": round(rep.invalidation_coverage, 6),
                            "analysis_only": rep.analysis_only}
                    rows.append({**base, "denominator_kind": "union", "denominator": round(rep.denominator, 6),
                                 "ratio": None if rep.ratio is None else round(rep.ratio, 6),
                                 "denominator_solver": rep.denominator_solver, "certified": rep.certified})
                    rows.append({**base, "denominator_kind": "package", "denominator": round(opt.opt_value, 6),
                                 "ratio": None if rep.package_ratio is None else round(rep.package_ratio, 6),
                                 "denominator_solver": opt.solver, "certified": opt.exact})
                    if not rep.analysis_only:
                        scores.setdefault(f"{rule.value}@{budget:g}", {})[f"{exp.system}:{policy}"] = rep.ratio
    for r in rows:
        if not r["certified"]:
            raise UncertifiedDenominatorError(f"{r['system']} B={r['budget']}: uncertified denominator")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "scores.csv", SCORE_FIELDS, rows)
    summary: dict[str, Any] = {"rankings": {key: ranking(s) for key, s in sorted(scores.items())}}
    if len(rules) == 2:
        corr = {}
        for budget in budgets:
            a = scores.get(f"word@{budget:g}", {})
            b = scores.get(f"byte_overhead@{budget:g}", {})
            names = sorted(set(a) & set(b))
            va, vb = [a[m] for m in names], [b[m] for m in names]
            corr[f"{budget:g}"] = None if None in va or None in vb else spearman(va, vb)
        summary["rank_correlation"] = corr
    write_json(out / "score_summary.json", summary)
    return {"rows": rows, **summary}


# --- sensitivity ----------------------------------------------------------------


def cmd_sensitivity(
    pkg: Package,
    budgets: Sequence[float],
    exports: Sequence[ExportedStore] = (),
    out: str | os.PathLike = "out",
    policies: Sequence[str] | Mapping[str, Sequence[str]] | None = None,
    writers: Sequence[str] = (),
) -> list[dict]:
    if policies is None:
        policies = DEMO_POLICIES if {e.system for e in exports} <= set(DEMO_POLICIES) else ("recency", "salience")
    reports = [sensitivity_audit(pkg, b, exports, policies, writers).as_dict() for b in budgets]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "sensitivity.json", {"package_id": pkg.package_id, "reports": reports})
    return reports


__all__ = [
    "CertificationError",
    "HarnessError",
    "METHODS",
    "SweepConfig",
    "UncertifiedDenominatorError",
    "cmd_certify",
    "cmd_generate",
    "cmd_score_export",
    "cmd_sensitivity",
    "cmd_sweep",
    "load_manifest",
    "parse_budgets",
    "parse_methods",
    "summarize",
]
