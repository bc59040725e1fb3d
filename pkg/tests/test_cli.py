from __future__ import annotations

import argparse
import csv
import json
import shutil
from dataclasses import replace
from pathlib import Path

import pytest

import synthetic
from conftest import FIXED_CLOCK, FIXTURES, FakeResponse, FakeSession, fixture_name, no_wait_http
from refaudit.cli import build_parser, cmd_harvest, load_config, main
from refaudit.model import SourceKind

RUNNING = synthetic.RUNNING_EXAMPLE


def small_cache(root: Path) -> Path:
    """Cache laid out like a harvest, holding the recorded fixtures."""
    cache = root / "cache"
    for sub, src in (("works", "crossref"), ("pages", "pages"), ("depositor", "depositor")):
        shutil.copytree(FIXTURES / src, cache / sub)
    return cache


def base_args(cache: Path, out: Path, *extra: str) -> list[str]:
    return ["--cache-dir", str(cache), "--out", str(out), "--offline", "--fixed-clock", FIXED_CLOCK, *extra]


def test_inventory_from_depositor_reports(tmp_path, capsys):
    cache, out = small_cache(tmp_path), tmp_path / "out"
    extra = tmp_path / "extra.txt"
    extra.write_text(f"# overlaps the reports\nhttps://doi.org/{RUNNING.upper()}\n10.9999/standalone\n")
    argv = ["inventory", *base_args(cache, out), "--doi-file", str(extra)]
    for pubid in synthetic.JOURNALS:
        argv += ["--pubid", pubid]
    assert main(argv) == 0
    lines = (out / "inventory.txt").read_text().split()
    assert len(lines) == 3686 + 1
    assert len(set(lines)) == len(lines)
    printed = capsys.readouterr().out
    assert "J325422\t1063" in printed and "inventory\t3687" in printed


def test_inventory_single_doi_file(tmp_path):
    doi_file = tmp_path / "dois.txt"
    doi_file.write_text(f"{RUNNING}\n")
    assert main(["inventory", *base_args(tmp_path / "c", tmp_path / "o"), "--doi-file", str(doi_file)]) == 0
    assert (tmp_path / "o" / "inventory.txt").read_text() == f"{RUNNING}\n"


def _audit_one(tmp_path: Path, doi: str, *extra: str) -> tuple[int, Path]:
    cache, out = small_cache(tmp_path), tmp_path / "out"
    doi_file = tmp_path / "dois.txt"
    doi_file.write_text(doi + "\n")
    assert main(["inventory", *base_args(cache, out), "--doi-file", str(doi_file)]) == 0
    code = main(["audit", *base_args(cache, out, *extra)])
    return code, out


def test_audit_running_example_exits_sneaked(tmp_path):
    code, out = _audit_one(
        tmp_path, RUNNING, "--dimensions-export", str(FIXTURES / "dimensions" / "specials.csv")
    )
    assert code == 2
    rows = {(r["doi"], r["comparator"]): r for r in csv.DictReader((out / "flagged.csv").open())}
    assert rows[(RUNNING, "crossref")]["delta"] == "40"
    assert rows[(RUNNING, "dimensions")]["delta"] == "6"
    report = json.loads((out / "report.json").read_text())
    assert report["generated_at"] == FIXED_CLOCK


def test_audit_clean_corpus_exits_zero(tmp_path):
    cache = small_cache(tmp_path)
    # make the registered list mirror the page
    model = synthetic.build_model()
    pub = model.publications[RUNNING]
    pub.crossref = list(pub.html)
    (cache / "works" / fixture_name(RUNNING, ".json")).write_bytes(synthetic.crossref_payload(pub))
    out = tmp_path / "out"
    (tmp_path / "dois.txt").write_text(RUNNING + "\n")
    assert main(["inventory", *base_args(cache, out), "--doi-file", str(tmp_path / "dois.txt")]) == 0
    assert main(["audit", *base_args(cache, out), "--comparator", "crossref"]) == 0
    assert (out / "flagged.csv").read_text().strip() == ",".join(
        ["doi", "comparator", "s", "r", "delta", "status", "duplication_factor"]
    )


def test_offline_audit_does_not_touch_cache(tmp_path):
    cache = small_cache(tmp_path)
    before = {p: p.read_bytes() for p in cache.rglob("*") if p.is_file()}
    out = tmp_path / "out"
    (tmp_path / "dois.txt").write_text(f"{RUNNING}\n10.32628/ijsrst00000\n")
    main(["inventory", *base_args(cache, out), "--doi-file", str(tmp_path / "dois.txt")])
    assert main(["audit", *base_args(cache, out), "--comparator", "crossref"]) == 2
    after = {p: p.read_bytes() for p in cache.rglob("*") if p.is_file()}
    assert before == after
    report = json.loads((out / "report.json").read_text())
    assert report["reconciliation"]["unavailable"]["crossref"] == ["10.32628/ijsrst00000"]


def test_report_command_rerenders(tmp_path, capsys):
    code, out = _audit_one(tmp_path, RUNNING, "--comparator", "crossref")
    md = (out / "report.md").read_bytes()
    (out / "report.md").unlink()
    assert main(["report", *base_args(tmp_path / "cache", out)]) == code == 2
    assert (out / "report.md").read_bytes() == md
    assert "| Sneaked | 1 | 7 | 47 | 40 |" in capsys.readouterr().out


def test_operational_errors_exit_one(tmp_path, capsys):
    assert main(["audit", *base_args(tmp_path / "c", tmp_path / "o")]) == 1
    assert "no inventory" in capsys.readouterr().err
    assert main(["inventory", *base_args(tmp_path / "c", tmp_path / "o")]) == 1
    assert main(["audit", *base_args(tmp_path / "c", tmp_path / "o"), "--threshold", "1.5"]) == 1


def test_config_precedence(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text(
        "corpus:\n  depositor_pubids: [J325422]\n"
        "cache_dir: from-yaml\nthreshold: 0.7\nrate_limit: 0.5\ncomparators: [crossref]\ncorpus_id: yaml-id\n"
    )
    parser = build_parser()
    args = parser.parse_args(["audit", "--config", str(config)])
    cfg = load_config(args, environ={})
    assert cfg.cache_dir == tmp_path / "from-yaml"
    assert (cfg.threshold, cfg.rate_limit, cfg.comparators, cfg.corpus_id) == (0.7, 0.5, (SourceKind.CROSSREF,), "yaml-id")
    assert cfg.depositor_pubids == ("J325422",)

    cfg = load_config(args, environ={"REFAUDIT_CACHE_DIR": "/env/cache", "REFAUDIT_CONTACT": "a@b.c"})
    assert cfg.cache_dir == Path("/env/cache") and cfg.contact == "a@b.c"

    args = parser.parse_args(["audit", "--config", str(config), "--cache-dir", "/flag/cache", "--threshold", "0.9"])
    cfg = load_config(args, environ={"REFAUDIT_CACHE_DIR": "/env/cache"})
    assert (cfg.cache_dir, cfg.threshold) == (Path("/flag/cache"), 0.9)

    defaults = load_config(argparse.Namespace(config=None, cache_dir=None, out=None, threshold=None, rate_limit=None,
                                              fixed_clock=None, comparator=None, offline=False), environ={})
    assert defaults.threshold == 0.6 and defaults.comparators == (SourceKind.CROSSREF, SourceKind.DIMENSIONS)


def test_harvest_fills_cache(tmp_path, capsys):
    page = (FIXTURES / "pages" / fixture_name(RUNNING, ".html")).read_bytes()
    work = (FIXTURES / "crossref" / fixture_name(RUNNING, ".json")).read_bytes()
    session = FakeSession({"/works/10.32628/ijsrst229212": [FakeResponse(200, work)], "doi.org/10.32628/ijsrst229212": [FakeResponse(200, page)]})
    out = tmp_path / "out"
    (tmp_path / "dois.txt").write_text(f"{RUNNING}\n10.32628/ijsrst11111\n")
    args = build_parser().parse_args(
        ["harvest", "--cache-dir", str(tmp_path / "cache"), "--out", str(out), "--fixed-clock", FIXED_CLOCK]
    )
    cfg = load_config(args, environ={})
    cfg = replace(cfg, doi_file=tmp_path / "dois.txt")
    tally = cmd_harvest(cfg, http=no_wait_http(session))
    assert tally == {"works": 1, "not_registered": 1, "pages": 1, "failed": 1}
    assert (tmp_path / "cache" / "works" / fixture_name(RUNNING, ".json")).read_bytes() == work
    manifest = (tmp_path / "cache" / "works" / "manifest.jsonl").read_text()
    assert '"status": "not_found"' in manifest and FIXED_CLOCK in manifest
    assert FIXED_CLOCK in (tmp_path / "cache" / "pages" / "manifest.jsonl").read_text()


@pytest.mark.parametrize("command", ["inventory", "harvest", "ingest-dimensions", "audit", "report"])
def test_subcommands_have_help(command, capsys):
    with pytest.raises(SystemExit) as info:
        main([command, "--help"])
    assert info.value.code == 0
