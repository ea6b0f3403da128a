from __future__ import annotations

import csv
import functools
import json

import pytest

from storebench import cli, harness
from storebench.demo import demo_exports, demo_package
from storebench.exports import write_export
from storebench.package import write_package


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("generate", "--n", 4, "--seed", 10, "--out", out) == 0
    return out


def test_generate_manifest(suite):
    man = json.loads((suite / "manifest.json").read_text())
    assert [e["seed"] for e in man["packages"]] == [10, 11, 12, 13]
    assert all((suite / e["file"]).exists() for e in man["packages"])


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run("sweep", "--out", tmp_path) == 1
    assert run("frobnicate") == 1
    assert run("certify", "--k", 3, "--out", tmp_path) == 1
    assert run("sweep", "--manifest", tmp_path, "--methods", "magic", "--out", tmp_path) == 1
    assert run("generate", "--n", 0, "--out", tmp_path) != 0


def test_missing_or_corrupt_data_exit_3(tmp_path, suite):
    assert run("sweep", "--manifest", tmp_path / "nope", "--out", tmp_path) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("score-export", "--package", bad, "--export", bad, "--budgets", "4", "--out", tmp_path) == 3


def test_sweep_opt_ratio_is_one(tmp_path, suite):
    assert run("sweep", "--manifest", suite, "--methods", "opt", "--budgets", "2,4",
               "--resamples", 200, "--out", tmp_path) == 0
    got = rows(tmp_path / "results.csv")
    assert len(got) == 8
    assert {r["ratio"] for r in got} == {"1.000000"}
    assert all(r["certified"] == "true" for r in got)


def test_sweep_deterministic_cached_and_parallel(tmp_path, suite):
    args = ("sweep", "--manifest", suite, "--methods", "gvt,estimated_gvt,density_only",
            "--budgets", "2,4", "--resamples", 300)
    assert run(*args, "--no-cache", "--out", tmp_path / "a") == 0
    assert run(*args, "--no-cache", "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    # cold cache, then warm cache
    assert run(*args, "--out", tmp_path / "c") == 0
    assert run(*args, "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "results.csv").read_bytes() == a
    assert run(*args, "--no-cache", "--jobs", 2, "--out", tmp_path / "d") == 0
    assert (tmp_path / "d" / "results.csv").read_bytes() == a


def test_certify_ok_and_failure(tmp_path, monkeypatch):
    assert run("certify", "--n", 6, "--out", tmp_path / "ok") == 0
    got = rows(tmp_path / "ok" / "certification.csv")
    assert len(got) == 6 and all(r["equal"] == "true" for r in got)

    def broken(value, live, residual, comp, k):
        return value

    monkeypatch.setattr(cli, "cmd_certify", functools.partial(harness.cmd_certify, bound=broken))
    assert run("certify", "--n", 40, "--seed", 5, "--out", tmp_path / "bad") == 2
    assert any(r["equal"] == "false" for r in rows(tmp_path / "bad" / "certification.csv"))


def test_score_export_both_rules(tmp_path):
    pkg = demo_package()
    write_package(pkg, tmp_path / "pkg.json")
    paths = []
    for e in demo_exports(pkg):
        p = tmp_path / f"{e.system}.json"
        write_export(e, p)
        paths += ["--export", p]
    assert run("score-export", "--package", tmp_path / "pkg.json", *paths, "--budgets", "20",
               "--cost-rule", "both", "--out", tmp_path / "out") == 0
    got = rows(tmp_path / "out" / "scores.csv")
    # 4 systems x 3 policies x 2 rules x (union + package)
    assert len(got) == 4 * 3 * 2 * 2
    assert {r["cost_rule"] for r in got} == {"word", "byte_overhead"}
    archive = [r for r in got if r["system"] == "archive"]
    assert {r["value"] for r in archive} == {"0.000000"}
    summary = json.loads((tmp_path / "out" / "score_summary.json").read_text())
    # every policy is ranked here, not just one per system
    assert summary["rank_correlation"]["20"] > 0.9


def test_sensitivity_demo(tmp_path, capsys):
    assert run("sensitivity", "--out", tmp_path) == 0
    data = json.loads((tmp_path / "sensitivity.json").read_text())
    assert len(data["reports"]) == 3
    assert all(r["rank_correlation"] == 1.0 for r in data["reports"])
    assert (tmp_path / "demo" / "export_archive.json").exists()
