"""Rendering of audit results: Markdown tables, versioned JSON, flagged CSV."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from .audit import CorpusAudit, Rates, compute_rates
from .errors import DivisionByZeroCorpus
from .model import (
    STATUS_ORDER,
    AuditStatus,
    BeneficiaryProfile,
    CorpusTable,
    Doi,
    Entity,
    EntityKind,
    SourceKind,
    StatusRow,
)

SCHEMA_VERSION = "1"
FLAGGED_COLUMNS = ("doi", "comparator", "s", "r", "delta", "status", "duplication_factor")
SOURCE_LABELS = {SourceKind.CROSSREF: "Crossref", SourceKind.DIMENSIONS: "Dimensions", SourceKind.PUBLISHER: "HTML"}


@dataclass(frozen=True)
class FlaggedEntry:
    doi: Doi
    comparator: SourceKind
    s: int
    r: int
    delta: int
    status: AuditStatus
    duplication_factor: int = 1
    sneaked_sample: tuple[str, ...] = ()


@dataclass(frozen=True)
class Reconciliation:
    # source name -> DOIs of the inventory that source did not cover
    unavailable: Mapping[str, tuple[Doi, ...]] = field(default_factory=dict)
    unmatched_rows: int = 0


@dataclass(frozen=True)
class AuditReport:
    corpus_id: str
    generated_at: str
    tables: tuple[CorpusTable, ...] = ()
    rates: tuple[Optional[Rates], ...] = ()
    flagged: tuple[FlaggedEntry, ...] = ()
    beneficiaries: BeneficiaryProfile = field(default_factory=BeneficiaryProfile)
    reconciliation: Reconciliation = field(default_factory=Reconciliation)

    @property
    def has_sneaked(self) -> bool:
        return any(t.rows[AuditStatus.SNEAKED].article_count for t in self.tables)


def safe_rates(table: CorpusTable) -> Optional[Rates]:
    try:
        return compute_rates(table)
    except DivisionByZeroCorpus:
        return None


def _flag_order(entry: FlaggedEntry) -> tuple:
    return (-abs(entry.delta), entry.doi.value, entry.comparator.value)


def build_report(
    corpus_id: str,
    generated_at: str,
    audits: Sequence[CorpusAudit],
    beneficiaries: Optional[BeneficiaryProfile] = None,
    unavailable: Optional[Mapping[str, Iterable[Doi]]] = None,
    unmatched_rows: int = 0,
    sample_size: int = 5,
) -> AuditReport:
    flagged = []
    for audit in audits:
        for finding in audit.findings:
            res = finding.result
            if res.status is AuditStatus.OK:
                continue
            flagged.append(
                FlaggedEntry(
                    res.doi,
                    res.comparator,
                    res.s,
                    res.r,
                    res.delta,
                    res.status,
                    finding.duplication.factor,
                    tuple(ref.raw for ref in finding.sneaked[:sample_size]),
                )
            )
    merged_unavailable: dict[str, tuple[Doi, ...]] = {}
    for name, dois in (unavailable or {}).items():
        merged_unavailable[name] = tuple(sorted(set(dois)))
    for audit in audits:
        # publications left out of a comparison because either side had no list
        if audit.unavailable:
            merged_unavailable[f"{audit.comparator.value} comparison"] = tuple(sorted(set(audit.unavailable)))
    tables = tuple(a.table for a in audits)
    return AuditReport(
        corpus_id=corpus_id,
        generated_at=generated_at,
        tables=tables,
        rates=tuple(safe_rates(t) for t in tables),
        flagged=tuple(sorted(flagged, key=_flag_order)),
        beneficiaries=beneficiaries or BeneficiaryProfile(),
        reconciliation=Reconciliation(dict(sorted(merged_unavailable.items())), unmatched_rows),
    )


def _n(value: int) -> str:
    return f"{value:,}"


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}%"


def _table_lines(table: Optional[CorpusTable], label: str) -> list[str]:
    lines = [
        f"| Status | Articles | Refs in HTML | Refs in {label} | {label} - HTML |",
        "|---|---:|---:|---:|---:|",
    ]
    if table is not None:
        for status in STATUS_ORDER:
            row = table.rows[status]
            lines.append(
                f"| {status.label} | {_n(row.article_count)} | {_n(row.refs_in_html)} | "
                f"{_n(row.refs_in_source)} | {_n(row.difference)} |"
            )
        totals = table.totals
    else:
        totals = StatusRow()
    lines.append(f"| Total | {_n(totals.article_count)} | {_n(totals.refs_in_html)} | {_n(totals.refs_in_source)} | |")
    return lines


def render_markdown(report: AuditReport) -> str:
    out = [f"# Reference audit: {report.corpus_id}", "", f"Generated: {report.generated_at}", ""]
    if not report.tables:
        out += ["## No comparator audited", ""] + _table_lines(None, "source") + [""]
    for table, rates in zip(report.tables, report.rates):
        label = SOURCE_LABELS[table.comparator]
        out += [f"## HTML vs {label}", ""] + _table_lines(table, label) + [""]
        out.append(f"- Sneaked lower bound: {_n(table.delta_sneaked)}")
        out.append(f"- Lost lower bound: {_n(table.delta_missing)}")
        if rates is not None:
            out.append(f"- Sneaked share of registered references: {_pct(rates.sneaked_share_of_registered)}")
            out.append(f"- Augmentation of the original references: {_pct(rates.sneaked_augmentation)}")
            out.append(f"- Original references lost: {_pct(rates.missing_share_of_original)}")
        out.append("")

    if report.flagged:
        out += [
            "## Flagged publications",
            "",
            "| DOI | Comparator | HTML | Registered | Delta | Status | Duplication |",
            "|---|---|---:|---:|---:|---|---:|",
        ]
        for e in report.flagged:
            out.append(
                f"| {e.doi} | {SOURCE_LABELS[e.comparator]} | {_n(e.s)} | {_n(e.r)} | {_n(e.delta)} | "
                f"{e.status.label} | {e.duplication_factor} |"
            )
        out.append("")

    profile = report.beneficiaries
    if profile.entity_counts:
        out += ["## Most frequent names in sneaked references", ""]
        for kind, title in ((EntityKind.AUTHOR, "Authors"), (EntityKind.CONTAINER, "Journals")):
            top = profile.top(kind, 10)
            if not top:
                continue
            out.append(f"{title}:")
            out.append("")
            for name, count in top:
                flag = " (from free text)" if Entity(kind, name) in profile.low_confidence else ""
                out.append(f"- {name}: {_n(count)}{flag}")
            out.append("")

    recon = report.reconciliation
    if any(recon.unavailable.values()) or recon.unmatched_rows:
        out += ["## Reconciliation", ""]
        for name, dois in recon.unavailable.items():
            if name.endswith(" comparison"):
                out.append(f"- Skipped in the {name}: {_n(len(dois))}")
            else:
                out.append(f"- Unavailable in {name}: {_n(len(dois))}")
        out.append(f"- Unmatched export rows: {_n(recon.unmatched_rows)}")
        out.append("")
    return "\n".join(out).rstrip("\n") + "\n"


def _row_dict(row: StatusRow) -> dict[str, int]:
    return {"articles": row.article_count, "refs_in_html": row.refs_in_html, "refs_in_source": row.refs_in_source}


def _row_from(d: Mapping[str, int]) -> StatusRow:
    return StatusRow(int(d["articles"]), int(d["refs_in_html"]), int(d["refs_in_source"]))


def report_to_dict(report: AuditReport) -> dict[str, Any]:
    profile = report.beneficiaries
    return {
        "schema_version": SCHEMA_VERSION,
        "corpus_id": report.corpus_id,
        "generated_at": report.generated_at,
        "tables": [
            {
                "comparator": t.comparator.value,
                "rows": {s.value: _row_dict(t.rows[s]) for s in STATUS_ORDER},
                "delta_sneaked": t.delta_sneaked,
                "delta_missing": t.delta_missing,
                "totals": _row_dict(t.totals),
                "rates": None
                if r is None
                else {
                    "sneaked_share_of_registered": r.sneaked_share_of_registered,
                    "sneaked_augmentation": r.sneaked_augmentation,
                    "missing_share_of_original": r.missing_share_of_original,
                },
            }
            for t, r in zip(report.tables, report.rates)
        ],
        "flagged": [
            {
                "doi": e.doi.value,
                "comparator": e.comparator.value,
                "s": e.s,
                "r": e.r,
                "delta": e.delta,
                "status": e.status.value,
                "duplication_factor": e.duplication_factor,
                "sneaked_sample": list(e.sneaked_sample),
            }
            for e in report.flagged
        ],
        "beneficiaries": {
            "tokens": [{"token": t, "count": c} for t, c in profile.token_counts.items()],
            "entities": [
                {"kind": e.kind.value, "name": e.name, "count": c, "low_confidence": e in profile.low_confidence}
                for e, c in profile.entity_counts.items()
            ],
        },
        "reconciliation": {
            "unavailable": {k: [d.value for d in v] for k, v in report.reconciliation.unavailable.items()},
            "unmatched_rows": report.reconciliation.unmatched_rows,
        },
    }


def render_json(report: AuditReport) -> bytes:
    text = json.dumps(report_to_dict(report), sort_keys=True, indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def report_from_dict(data: Mapping[str, Any]) -> AuditReport:
    version = str(data.get("schema_version"))
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {version!r}")
    tables, rates = [], []
    for t in data["tables"]:
        rows = {AuditStatus(k): _row_from(v) for k, v in t["rows"].items()}
        tables.append(
            CorpusTable(SourceKind(t["comparator"]), rows, t["delta_sneaked"], t["delta_missing"], _row_from(t["totals"]))
        )
        rates.append(None if t["rates"] is None else Rates(**t["rates"]))
    flagged = tuple(
        FlaggedEntry(
            Doi(e["doi"]),
            SourceKind(e["comparator"]),
            e["s"],
            e["r"],
            e["delta"],
            AuditStatus(e["status"]),
            e["duplication_factor"],
            tuple(e["sneaked_sample"]),
        )
        for e in data["flagged"]
    )
    ben = data["beneficiaries"]
    entities = {Entity(EntityKind(e["kind"]), e["name"]): e["count"] for e in ben["entities"]}
    low = frozenset(Entity(EntityKind(e["kind"]), e["name"]) for e in ben["entities"] if e["low_confidence"])
    profile = BeneficiaryProfile({t["token"]: t["count"] for t in ben["tokens"]}, entities, low)
    recon = data["reconciliation"]
    return AuditReport(
        corpus_id=data["corpus_id"],
        generated_at=data["generated_at"],
        tables=tuple(tables),
        rates=tuple(rates),
        flagged=flagged,
        beneficiaries=profile,
        reconciliation=Reconciliation(
            {k: tuple(Doi(d) for d in v) for k, v in recon["unavailable"].items()}, recon["unmatched_rows"]
        ),
    )


def parse_json(data: bytes | str) -> AuditReport:
    return report_from_dict(json.loads(data))


def render_flagged_csv(report: AuditReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FLAGGED_COLUMNS)
    for e in report.flagged:
        writer.writerow([e.doi.value, e.comparator.value, e.s, e.r, e.delta, e.status.value, e.duplication_factor])
    return buf.getvalue().encode("utf-8")
