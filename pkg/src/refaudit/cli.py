"""Command-line pipeline: inventory -> harvest -> ingest-dimensions -> audit -> report.

Exit codes: 0 clean corpus, 2 at least one Sneaked publication, 1 operational error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from .audit import CorpusAudit, audit_corpus, beneficiary_profile
from .cache import atomic_write
from .crossref import CachePolicy, CrossrefClient, utc_now
from .dimensions import join_to_corpus, parse_export
from .errors import (
    CacheMiss,
    ExtractionFailed,
    NotRegistered,
    ParseError,
    RefAuditError,
    TransportError,
)
from .http import HttpClient, RateLimiter, default_user_agent
from .model import Doi, PublicationRecord, SourceKind, normalize_doi
from .publisher import PublisherClient, default_adapters_path, load_adapters
from .refmatch import DEFAULT_THRESHOLD
from .report import AuditReport, build_report, parse_json, render_flagged_csv, render_json, render_markdown

logger = logging.getLogger("refaudit")

EXIT_CLEAN, EXIT_ERROR, EXIT_SNEAKED = 0, 1, 2
INVENTORY_FILE = "inventory.txt"
BENEFICIARY_TOP_N = 50


@dataclass(frozen=True)
class RunConfig:
    depositor_pubids: tuple[str, ...] = ()
    doi_file: Optional[Path] = None
    cache_dir: Path = Path(".refaudit-cache")
    adapters_file: Path = field(default_factory=default_adapters_path)
    dimensions_export: Optional[Path] = None
    comparators: tuple[SourceKind, ...] = (SourceKind.CROSSREF, SourceKind.DIMENSIONS)
    threshold: float = DEFAULT_THRESHOLD
    rate_limit: float = 1.0
    offline: bool = False
    fixed_clock: Optional[str] = None
    out_dir: Path = Path("refaudit-out")
    corpus_id: str = "corpus"
    contact: Optional[str] = None
    workers: int = 4
    api_base: str = "https://api.crossref.org"

    def __post_init__(self) -> None:
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        if not self.comparators:
            raise ValueError("at least one comparator is required")
        for kind in self.comparators:
            SourceKind.comparator(kind)
        if self.fixed_clock is not None:
            datetime.fromisoformat(self.fixed_clock)

    def require_corpus(self) -> None:
        if not self.depositor_pubids and self.doi_file is None:
            raise ValueError("configure depositor_pubids or doi_file")

    @property
    def cache_policy(self) -> CachePolicy:
        return CachePolicy.OFFLINE_ONLY if self.offline else CachePolicy.PREFER_CACHE

    def now(self) -> datetime:
        return datetime.fromisoformat(self.fixed_clock) if self.fixed_clock else utc_now()


_PATH_KEYS = {"doi_file", "cache_dir", "adapters_file", "dimensions_export", "out_dir"}


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    if key in _PATH_KEYS:
        return Path(value)
    if key == "comparators":
        return tuple(SourceKind.comparator(v) for v in value)
    if key == "depositor_pubids":
        return tuple(value)
    if key in ("threshold", "rate_limit"):
        return float(value)
    if key == "workers":
        return int(value)
    if key == "fixed_clock" and isinstance(value, datetime):
        return value.isoformat()
    return value


def load_config(args: argparse.Namespace, environ: Optional[dict[str, str]] = None) -> RunConfig:
    """Layer defaults < config file < environment < command-line flags."""
    environ = os.environ if environ is None else environ
    values: dict[str, Any] = {}
    if getattr(args, "config", None):
        data = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        corpus = data.pop("corpus", {}) or {}
        data.setdefault("depositor_pubids", corpus.get("depositor_pubids", ()))
        if corpus.get("doi_file"):
            data.setdefault("doi_file", corpus["doi_file"])
        base = Path(args.config).parent
        for key, value in data.items():
            if key in _PATH_KEYS and value is not None and not Path(value).is_absolute():
                value = base / value
            values[key] = _coerce(key, value)
    if environ.get("REFAUDIT_CACHE_DIR"):
        values["cache_dir"] = Path(environ["REFAUDIT_CACHE_DIR"])
    if environ.get("REFAUDIT_CONTACT"):
        values["contact"] = environ["REFAUDIT_CONTACT"]
    flags = {
        "cache_dir": args.cache_dir,
        "out_dir": args.out,
        "threshold": args.threshold,
        "rate_limit": args.rate_limit,
        "fixed_clock": args.fixed_clock,
        "comparators": args.comparator,
        "depositor_pubids": getattr(args, "pubid", None),
        "doi_file": getattr(args, "doi_file", None),
        "dimensions_export": getattr(args, "dimensions_export", None),
        "adapters_file": getattr(args, "adapters", None),
        "corpus_id": getattr(args, "corpus_id", None),
    }
    for key, value in flags.items():
        if value:
            values[key] = _coerce(key, value)
    if args.offline:
        values["offline"] = True
    return replace(RunConfig(), **values)


def _http(config: RunConfig) -> HttpClient:
    return HttpClient(RateLimiter(config.rate_limit), user_agent=default_user_agent(config.contact))


def crossref_client(config: RunConfig, http: Optional[HttpClient] = None) -> CrossrefClient:
    return CrossrefClient(config.cache_dir, http=http, api_base=config.api_base, now=config.now)


def read_doi_file(path: Path) -> list[Doi]:
    dois: dict[Doi, None] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            dois.setdefault(normalize_doi(line), None)
    return list(dois)


def cmd_inventory(config: RunConfig, http: Optional[HttpClient] = None) -> Path:
    """Build the deduplicated DOI inventory and write it to ``out_dir/inventory.txt``."""
    config.require_corpus()
    client = crossref_client(config, http)
    dois: dict[Doi, None] = {}
    for pubid in config.depositor_pubids:
        report = client.fetch_depositor_report(pubid, config.cache_policy)
        print(f"{pubid}\t{len(report.dois)}\t{report.journal_title}")
        for doi in report.dois:
            dois.setdefault(doi, None)
    if config.doi_file is not None:
        listed = read_doi_file(config.doi_file)
        print(f"{config.doi_file}\t{len(listed)}")
        for doi in listed:
            dois.setdefault(doi, None)
    path = config.out_dir / INVENTORY_FILE
    atomic_write(path, "".join(f"{d.value}\n" for d in dois).encode("utf-8"))
    print(f"inventory\t{len(dois)}\t{path}")
    return path


def load_inventory(config: RunConfig) -> list[Doi]:
    path = config.out_dir / INVENTORY_FILE
    if path.exists():
        return read_doi_file(path)
    if config.doi_file is not None:
        return read_doi_file(config.doi_file)
    raise RefAuditError(f"no inventory at {path}; run `refaudit inventory` first")


def cmd_harvest(config: RunConfig, http: Optional[HttpClient] = None) -> dict[str, int]:
    """Fetch every inventory DOI's Crossref record and publisher page into the cache."""
    dois = load_inventory(config)
    http = http or _http(config)
    client = crossref_client(config, http)
    publisher = PublisherClient(config.cache_dir, load_adapters(config.adapters_file), http, now=config.now)
    policy = config.cache_policy
    tally = {"works": 0, "not_registered": 0, "pages": 0, "failed": 0}

    def one(doi: Doi) -> list[str]:
        outcome = []
        try:
            client.fetch_work(doi, policy)
            outcome.append("works")
        except NotRegistered:
            outcome.append("not_registered")
        except (TransportError, ParseError, CacheMiss) as exc:
            logger.warning("crossref %s: %s", doi, exc)
            outcome.append("failed")
        try:
            publisher.fetch_page(doi, policy)
            outcome.append("pages")
        except (TransportError, CacheMiss) as exc:
            logger.warning("publisher %s: %s", doi, exc)
            outcome.append("failed")
        return outcome

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        for outcome in pool.map(one, dois):
            for key in outcome:
                tally[key] += 1
    print("\t".join(f"{k}={v}" for k, v in tally.items()))
    return tally


def cmd_ingest_dimensions(config: RunConfig) -> dict[str, int]:
    if config.dimensions_export is None:
        raise RefAuditError("no dimensions_export configured")
    rows = parse_export(config.dimensions_export)
    joined = join_to_corpus(rows, load_inventory(config))
    summary = {
        "rows": len(rows),
        "joined": len(joined.references),
        "unmatched_rows": len(joined.unmatched_rows),
        "unavailable": len(joined.unavailable),
        "duplicates": len(joined.duplicates),
    }
    print("\t".join(f"{k}={v}" for k, v in summary.items()))
    return summary


def collect_publications(config: RunConfig, dois: Sequence[Doi], http: Optional[HttpClient] = None):
    """Assemble per-source reference lists; returns (publications, unavailable, unmatched_rows)."""
    policy = config.cache_policy
    client = crossref_client(config, http)
    publisher = PublisherClient(config.cache_dir, load_adapters(config.adapters_file), http, now=config.now)
    unavailable: dict[str, list[Doi]] = {k.value: [] for k in SourceKind}
    lists: dict[Doi, dict[SourceKind, tuple]] = {d: {} for d in dois}

    for doi in dois:
        try:
            lists[doi][SourceKind.PUBLISHER] = tuple(publisher.references(doi, policy))
        except (CacheMiss, ExtractionFailed, TransportError) as exc:
            logger.info("publisher list unavailable for %s: %s", doi, exc)
            unavailable[SourceKind.PUBLISHER.value].append(doi)

    if SourceKind.CROSSREF in config.comparators:
        for doi in dois:
            try:
                lists[doi][SourceKind.CROSSREF] = client.fetch_work(doi, policy).references
            except (NotRegistered, CacheMiss, TransportError, ParseError) as exc:
                logger.info("crossref list unavailable for %s: %s", doi, exc)
                unavailable[SourceKind.CROSSREF.value].append(doi)

    unmatched_rows = 0
    if SourceKind.DIMENSIONS in config.comparators:
        if config.dimensions_export is None:
            raise RefAuditError("comparator dimensions needs a dimensions_export")
        joined = join_to_corpus(parse_export(config.dimensions_export), dois)
        for doi, refs in joined.references.items():
            lists[doi][SourceKind.DIMENSIONS] = refs
        unavailable[SourceKind.DIMENSIONS.value].extend(joined.unavailable)
        unmatched_rows = len(joined.unmatched_rows)

    publications = [PublicationRecord(doi, lists[doi]) for doi in dois]
    return publications, {k: v for k, v in unavailable.items() if v}, unmatched_rows


def cmd_audit(config: RunConfig, http: Optional[HttpClient] = None) -> AuditReport:
    """Audit the inventory against each comparator and write report.md/json and flagged.csv."""
    dois = load_inventory(config)
    publications, unavailable, unmatched = collect_publications(config, dois, http)
    audits: list[CorpusAudit] = [audit_corpus(publications, c, config.threshold) for c in config.comparators]

    by_kind = {a.comparator: a for a in audits}
    source = by_kind.get(SourceKind.CROSSREF) or audits[0]
    profile = beneficiary_profile(source.sneaked_references).truncated(BENEFICIARY_TOP_N)

    report = build_report(
        config.corpus_id,
        config.now().isoformat(),
        audits,
        beneficiaries=profile,
        unavailable=unavailable,
        unmatched_rows=unmatched,
    )
    write_outputs(report, config.out_dir)
    for name, skipped in report.reconciliation.unavailable.items():
        if skipped and not name.endswith(" comparison"):
            logger.warning("%d DOIs have no %s list", len(skipped), name)
    return report


def write_outputs(report: AuditReport, out_dir: Path) -> None:
    atomic_write(out_dir / "report.json", render_json(report))
    atomic_write(out_dir / "report.md", render_markdown(report).encode("utf-8"))
    atomic_write(out_dir / "flagged.csv", render_flagged_csv(report))


def cmd_report(config: RunConfig) -> AuditReport:
    report = parse_json((config.out_dir / "report.json").read_bytes())
    write_outputs(report, config.out_dir)
    sys.stdout.write(render_markdown(report))
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--cache-dir", help="snapshot cache directory (env REFAUDIT_CACHE_DIR)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--offline", action="store_true", help="use cached snapshots only")
    common.add_argument(
        "--comparator", action="append", choices=["crossref", "dimensions"], help="repeatable; default both"
    )
    common.add_argument("--threshold", type=float, help="alignment similarity threshold (0, 1]")
    common.add_argument("--rate-limit", type=float, help="requests per second")
    common.add_argument("--fixed-clock", help="ISO 8601 timestamp used instead of the current time")
    common.add_argument("--adapters", help="publisher adapter YAML file")
    common.add_argument("--dimensions-export", help="bibliometric mapping CSV export")
    common.add_argument("--corpus-id", help="label used in reports")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="refaudit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    inv = sub.add_parser("inventory", parents=[common], help="build the DOI inventory")
    inv.add_argument("--pubid", action="append", help="Crossref depositor publication id (repeatable)")
    inv.add_argument("--doi-file", help="file with one DOI per line")
    sub.add_parser("harvest", parents=[common], help="cache Crossref records and publisher pages")
    sub.add_parser("ingest-dimensions", parents=[common], help="parse and reconcile the platform export")
    sub.add_parser("audit", parents=[common], help="compute deltas and write reports")
    sub.add_parser("report", parents=[common], help="re-render report.md and flagged.csv from report.json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args)
        if args.command == "inventory":
            cmd_inventory(config)
        elif args.command == "harvest":
            cmd_harvest(config)
        elif args.command == "ingest-dimensions":
            cmd_ingest_dimensions(config)
        elif args.command == "audit":
            report = cmd_audit(config)
            print(f"wrote {config.out_dir / 'report.md'}")
            return EXIT_SNEAKED if report.has_sneaked else EXIT_CLEAN
        elif args.command == "report":
            report = cmd_report(config)
            return EXIT_SNEAKED if report.has_sneaked else EXIT_CLEAN
    except (RefAuditError, ValueError, OSError) as exc:
        print(f"refaudit: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_CLEAN


if __name__ == "__main__":
    sys.exit(main())
