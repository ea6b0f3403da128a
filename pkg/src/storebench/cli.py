"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 certification failure, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .demo import DEMO_BUDGETS, DEMO_SEED, demo_exports, demo_package
from .exports import load_export, write_export
from .generator import DISTRIBUTIONS, GeneratorError
from .harness import (
    CertificationError,
    HarnessError,
    SweepConfig,
    cmd_certify,
    cmd_generate,
    cmd_score_export,
    cmd_sensitivity,
    cmd_sweep,
    parse_budgets,
    parse_methods,
)
from .package import CostRule, PackageError, load_package, write_package
from .solvers import AuditScopeError
from .writers import PRUNE_POLICIES

EXIT_OK, EXIT_USAGE, EXIT_CERT, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; 2 is reserved here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rules(text: str) -> list[CostRule]:
    if text == "both":
        return [CostRule.WORD, CostRule.BYTE_OVERHEAD]
    return [CostRule.parse(text)]


def _overrides(text: str | None) -> dict:
    if not text:
        return {}
    p = Path(text)
    raw = p.read_text(encoding="utf-8") if p.exists() else text
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is neither a JSON file nor JSON text: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError("--params must be a JSON object")
    return data


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="storebench", description="Exact-denominator audits for memory-store writers.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded package suite and its manifest")
    g.add_argument("--distribution", choices=DISTRIBUTIONS, default="base")
    g.add_argument("--n", type=int, default=500, help="number of seeds")
    g.add_argument("--seed", type=int, default=0, help="first seed")
    g.add_argument("--budgets", default=None)
    g.add_argument("--params", default=None, help="generator overrides: JSON text or file")
    g.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="score methods against certified OPT over a suite")
    s.add_argument("--manifest", required=True, help="manifest.json or the directory holding it")
    s.add_argument("--budgets", default=None)
    s.add_argument("--methods", default=None)
    s.add_argument("--cost-rule", choices=("word", "byte-overhead"), default="word")
    s.add_argument("--k", type=int, choices=(1, 2), default=1)
    s.add_argument("--sigma", type=float, default=0.5, help="estimated-GVT noise")
    s.add_argument("--resamples", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-cache", action="store_true")
    s.add_argument("--out", required=True)

    c = sub.add_parser("certify", help="cross-check branch-and-bound against enumeration")
    c.add_argument("--n", type=int, default=1200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--k", type=int, choices=(1, 2), default=1)
    c.add_argument("--cost-rule", choices=("word", "byte-overhead"), default="word")
    c.add_argument("--out", required=True)

    e = sub.add_parser("score-export", help="union and package ratios for pruned exported stores")
    e.add_argument("--package", required=True)
    e.add_argument("--export", required=True, action="append", help="export file (repeatable)")
    e.add_argument("--budgets", required=True)
    e.add_argument("--policies", default=",".join(PRUNE_POLICIES))
    e.add_argument("--cost-rule", choices=("word", "byte-overhead", "both"), default="word")
    e.add_argument("--k", type=int, choices=(1, 2), default=1)
    e.add_argument("--out", required=True)

    t = sub.add_parser("sensitivity", help="k and cost-rule sensitivity audit")
    t.add_argument("--package", default=None, help="package file; the demo suite is used when omitted")
    t.add_argument("--export", action="append", default=[], help="export file (repeatable)")
    t.add_argument("--budgets", default=None)
    t.add_argument("--seed", type=int, default=DEMO_SEED, help="demo suite seed")
    t.add_argument("--writers", default="", help="package writers to rank as well")
    t.add_argument("--out", required=True)
    return ap


def _run(args) -> int:
    if args.command == "generate":
        budgets = parse_budgets(args.budgets)
        path = cmd_generate(args.distribution, args.n, args.out, args.seed, _overrides(args.params), budgets)
        print(path)
        return EXIT_OK

    if args.command == "sweep":
        cfg = SweepConfig(
            manifest=args.manifest,
            budgets=tuple(parse_budgets(args.budgets)),
            methods=tuple(parse_methods(args.methods)),
            cost_rule=CostRule.parse(args.cost_rule),
            k=args.k,
            out_dir=args.out,
            resamples=args.resamples,
            ci_seed=args.seed,
            sigma=args.sigma,
            jobs=args.jobs,
            use_cache=not args.no_cache,
        )
        summary = cmd_sweep(cfg)
        for cell in summary["cells"]:
            mean = "null" if cell["mean_ratio"] is None else f"{cell['mean_ratio']:.4f}"
            print(f"B={cell['budget']:g}\t{cell['method']}\t{mean}\tn={cell['n']}")
        return EXIT_OK

    if args.command == "certify":
        try:
            rows = cmd_certify(args.n, args.seed, args.out, args.k, CostRule.parse(args.cost_rule))
        except CertificationError as exc:
            print(f"certification failed: {exc}", file=sys.stderr)
            for r in exc.rows[:20]:
                print(f"  {r['package_id']} B={r['budget']:g} bnb={r['bnb_value']:.6f} "
                      f"audit={r['audit_value']:.6f}", file=sys.stderr)
            return EXIT_CERT
        print(f"{len(rows)}/{len(rows)} rows equal")
        return EXIT_OK

    if args.command == "score-export":
        pkg = load_package(args.package)
        exports = [load_export(p) for p in args.export]
        policies = [p.strip() for p in args.policies.split(",") if p.strip()]
        res = cmd_score_export(exports, pkg, parse_budgets(args.budgets), policies, _rules(args.cost_rule),
                               args.out, args.k)
        print(f"{len(res['rows'])} rows")
        return EXIT_OK

    if args.command == "sensitivity":
        if args.package:
            pkg = load_package(args.package)
            exports = [load_export(p) for p in args.export]
            budgets = parse_budgets(args.budgets)
        else:
            pkg = demo_package(args.seed)
            exports = demo_exports(pkg, args.seed)
            budgets = parse_budgets(args.budgets, DEMO_BUDGETS)
            out = Path(args.out)
            (out / "demo").mkdir(parents=True, exist_ok=True)
            write_package(pkg, out / "demo" / "package.json")
            for e in exports:
                write_export(e, out / "demo" / f"export_{e.system}.json")
        writers = [w for w in args.writers.split(",") if w]
        reports = cmd_sensitivity(pkg, budgets, exports, args.out, writers=writers)
        for r in reports:
            print(f"B={r['budget']:g}\tk2/k1={r['k_ratio']}\trank_correlation={r['rank_correlation']}")
        return EXIT_OK
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, parse errors exit 1
        return int(exc.code or 0)
    try:
        return _run(args)
    except (UsageError, ValueError) as exc:
        if isinstance(exc, (PackageError, GeneratorError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (HarnessError, AuditScopeError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
