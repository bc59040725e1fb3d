"""Per-publication deltas, corpus tables, content-level sneaked sets and beneficiaries."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

from .errors import DivisionByZeroCorpus, MixedComparators, SourceUnavailable
from .model import (
    AuditStatus,
    BeneficiaryProfile,
    CorpusTable,
    DeltaResult,
    Doi,
    Entity,
    EntityKind,
    PublicationRecord,
    ReferenceRecord,
    SourceKind,
    StatusRow,
    normalize_entity_name,
)
from .refmatch import DEFAULT_THRESHOLD, Alignment, Duplication, align, canonicalize, canonicalize_all, detect_duplication

Counting = Literal["reference", "token"]


def _lists(pub: PublicationRecord, comparator: SourceKind) -> tuple[tuple[ReferenceRecord, ...], tuple[ReferenceRecord, ...]]:
    comparator = SourceKind.comparator(comparator)
    html = pub.references(SourceKind.PUBLISHER)
    registered = pub.references(comparator)
    missing = [k.value for k, v in ((SourceKind.PUBLISHER, html), (comparator, registered)) if v is None]
    if missing:
        raise SourceUnavailable(f"{pub.doi}: no {' or '.join(missing)} reference list")
    return html, registered


def compute_delta(pub: PublicationRecord, comparator: SourceKind) -> DeltaResult:
    """Registered count minus version-of-record count, with its status."""
    html, registered = _lists(pub, comparator)
    return DeltaResult.from_counts(pub.doi, SourceKind.comparator(comparator), len(html), len(registered))


def aggregate(results: Iterable[DeltaResult], comparator: Optional[SourceKind] = None) -> CorpusTable:
    """Fold per-publication deltas into one corpus table.

    ``comparator`` only matters for an empty input, which yields an all-zero
    table for it (Crossref if not given).
    """
    rows = {status: StatusRow() for status in AuditStatus}
    seen: Optional[SourceKind] = comparator
    for res in results:
        if seen is None:
            seen = res.comparator
        elif res.comparator is not seen:
            raise MixedComparators(f"got {res.comparator.value} results in a {seen.value} table")
        rows[res.status] = rows[res.status] + StatusRow(1, res.s, res.r)
    totals = sum(rows.values(), StatusRow())
    return CorpusTable(
        comparator=seen or SourceKind.CROSSREF,
        rows=rows,
        delta_sneaked=rows[AuditStatus.SNEAKED].difference,
        delta_missing=rows[AuditStatus.MISSING].difference,
        totals=totals,
    )


@dataclass(frozen=True)
class Rates:
    sneaked_share_of_registered: float
    sneaked_augmentation: float
    missing_share_of_original: float


def compute_rates(table: CorpusTable) -> Rates:
    html = table.totals.refs_in_html
    registered = table.totals.refs_in_source
    if html == 0 or registered == 0:
        raise DivisionByZeroCorpus(
            f"{table.comparator.value} table has {html} original and {registered} registered references"
        )
    return Rates(
        sneaked_share_of_registered=table.delta_sneaked / registered,
        sneaked_augmentation=table.delta_sneaked / html,
        missing_share_of_original=abs(table.delta_missing) / html,
    )


def align_publication(
    pub: PublicationRecord, comparator: SourceKind, threshold: float = DEFAULT_THRESHOLD
) -> Alignment:
    html, registered = _lists(pub, comparator)
    return align(canonicalize_all(html), canonicalize_all(registered), threshold)


def extract_sneaked_references(
    pub: PublicationRecord, comparator: SourceKind, threshold: float = DEFAULT_THRESHOLD
) -> list[ReferenceRecord]:
    """Registered references with no counterpart in the version of record.

    This is the content-level sneaked set; its size is at least the delta,
    which only bounds it from below.
    """
    _, registered = _lists(pub, comparator)
    alignment = align_publication(pub, comparator, threshold)
    return [registered[j] for j in alignment.only_in_b]


def content_status(alignment: Alignment) -> AuditStatus:
    """Status judged on content: any unmatched registered item means Sneaked."""
    if alignment.only_in_b:
        return AuditStatus.SNEAKED
    if alignment.only_in_a:
        return AuditStatus.MISSING
    return AuditStatus.OK


_SURNAME_FIRST_RE = re.compile(r"\b([A-Z][\w'\-]+),\s*((?:[A-Z]\.\s*(?:-\s*)?)+)")
_INITIALS_FIRST_RE = re.compile(r"((?:\b[A-Z]\.\s*)+)([A-Z][\w'\-]+(?:\s+[A-Z][\w'\-]+)?)")
_AUTHOR_SEGMENT_END_RE = re.compile(r"\(\s*\d{4}|\"|“|\b\d{4}\b")
_COMMA_NAME_RE = re.compile(r"^\s*([^,]+),\s*([^,]+?)\s*$")


def person_name(raw: str) -> str:
    """Normalized display form: "Surname, Given" becomes "given surname"."""
    match = _COMMA_NAME_RE.match(raw)
    if match:
        raw = f"{match.group(2)} {match.group(1)}"
    return normalize_entity_name(raw)


def name_candidates(raw: str) -> list[str]:
    """Author names guessed from the leading segment of an unstructured reference."""
    end = _AUTHOR_SEGMENT_END_RE.search(raw)
    segment = raw[: end.start()] if end else raw[:120]
    names = [f"{initials.strip()} {surname}" for surname, initials in _SURNAME_FIRST_RE.findall(segment)]
    if not names:
        names = [f"{initials.strip()} {surname}" for initials, surname in _INITIALS_FIRST_RE.findall(segment)]
    seen: dict[str, None] = {}
    for name in names:
        seen.setdefault(normalize_entity_name(" ".join(name.split())), None)
    return [n for n in seen if n]


def beneficiary_profile(sneaked: Iterable[ReferenceRecord], counting: Counting = "reference") -> BeneficiaryProfile:
    """Frequency of tokens, authors and containers across sneaked references.

    With ``counting="reference"`` a token or entity counts once per reference;
    ``"token"`` counts every occurrence. Structured fields are preferred;
    names recovered from free text are marked low-confidence.
    """
    if counting not in ("reference", "token"):
        raise ValueError(f"unknown counting mode {counting!r}")
    tokens: Counter[str] = Counter()
    entities: Counter[Entity] = Counter()
    low_confidence: set[Entity] = set()
    high_confidence: set[Entity] = set()
    for ref in sneaked:
        words = [t for t in canonicalize(ref).tokens if not t.isdigit()]
        tokens.update(words if counting == "token" else set(words))

        found: list[Entity] = []
        structured = ref.structured
        if structured is not None and structured.authors:
            found += [Entity(EntityKind.AUTHOR, person_name(a)) for a in structured.authors]
            high_confidence.update(found)
        else:
            guessed = [Entity(EntityKind.AUTHOR, n) for n in name_candidates(ref.raw)]
            low_confidence.update(guessed)
            found += guessed
        if structured is not None and structured.container:
            container = Entity(EntityKind.CONTAINER, normalize_entity_name(structured.container))
            found.append(container)
            high_confidence.add(container)
        found = [e for e in found if e.name]
        entities.update(found if counting == "token" else set(found))
    return BeneficiaryProfile(dict(tokens), dict(entities), frozenset(low_confidence - high_confidence))


@dataclass(frozen=True)
class PublicationFinding:
    result: DeltaResult
    duplication: Duplication
    sneaked: tuple[ReferenceRecord, ...] = ()


@dataclass
class CorpusAudit:
    comparator: SourceKind
    table: CorpusTable
    findings: list[PublicationFinding] = field(default_factory=list)
    unavailable: list[Doi] = field(default_factory=list)

    @property
    def sneaked_references(self) -> list[ReferenceRecord]:
        return [ref for f in self.findings for ref in f.sneaked]


def audit_corpus(
    publications: Sequence[PublicationRecord],
    comparator: SourceKind,
    threshold: float = DEFAULT_THRESHOLD,
    content_level: bool = True,
) -> CorpusAudit:
    """Run the count-based audit for one comparator over a corpus.

    Publications lacking either list are set aside as unavailable. For
    publications with a non-zero delta the duplication factor of the
    registered list is recorded and, when ``content_level`` is set, the
    content-level sneaked set of Sneaked publications is extracted.
    """
    comparator = SourceKind.comparator(comparator)
    findings: list[PublicationFinding] = []
    unavailable: list[Doi] = []
    for pub in sorted(publications, key=lambda p: p.doi):
        try:
            result = compute_delta(pub, comparator)
        except SourceUnavailable:
            unavailable.append(pub.doi)
            continue
        registered = pub.references(comparator) or ()
        if result.status is AuditStatus.OK:
            duplication = Duplication(1, len(registered))
        else:
            duplication = detect_duplication(canonicalize_all(registered))
        sneaked: tuple[ReferenceRecord, ...] = ()
        if content_level and result.status is AuditStatus.SNEAKED:
            sneaked = tuple(extract_sneaked_references(pub, comparator, threshold))
        findings.append(PublicationFinding(result, duplication, sneaked))
    table = aggregate((f.result for f in findings), comparator)
    return CorpusAudit(comparator, table, findings, unavailable)
