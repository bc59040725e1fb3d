"""Crossref harvesting: depositor-report DOI inventories and works-API reference lists."""

from __future__ import annotations

import enum
import html
import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional
from urllib.parse import quote

from .cache import SnapshotStore
from .errors import CacheMiss, NotRegistered, ParseError, TransportError, UnrecognizedReportFormat
from .http import HttpClient
from .model import Doi, ReferenceRecord, StructuredFields, normalize_doi, try_normalize_doi

logger = logging.getLogger(__name__)

DEFAULT_API_BASE = "https://api.crossref.org"
DEPOSITOR_REPORT_URL = "https://data.crossref.org/depositorreport"

_TAG_RE = re.compile(r"<[^>]+>")
_DOI_IN_TEXT_RE = re.compile(r"10\.\d{4,9}(?:\.\d+)*/[^\s\"'<>,;|]+", re.IGNORECASE)
_TITLE_RE = re.compile(r"<title[^>]*>(.*?)</title>", re.IGNORECASE | re.DOTALL)
_LABELLED_TITLE_RE = re.compile(r"^\s*(?:journal(?:\s+title)?|publication(?:\s+title)?)\s*:\s*(.+)$", re.I | re.M)
_PUBID_RE = re.compile(r"\bpubid=(J\d+)|\bpublication\s+id\s*:\s*(J\d+)", re.IGNORECASE)
_TOTAL_RE = re.compile(r"^\s*total(?:\s+dois)?\s*[:=]\s*([\d,]+)\s*$", re.IGNORECASE | re.MULTILINE)
_YEAR_RE = re.compile(r"\d{4}")


class CachePolicy(str, enum.Enum):
    PREFER_CACHE = "prefer_cache"
    REFRESH = "refresh"
    OFFLINE_ONLY = "offline_only"


@dataclass(frozen=True)
class DepositorReport:
    publication_id: str
    journal_title: str
    dois: tuple[Doi, ...]
    stated_total: Optional[int] = None


@dataclass(frozen=True)
class CrossrefWork:
    doi: Doi
    declared_reference_count: int
    references: tuple[ReferenceRecord, ...]
    is_referenced_by_count: int
    fetched_at: datetime


@dataclass(frozen=True)
class CountCheck:
    consistent: bool
    declared: int
    actual: int


def parse_depositor_report(document: str, publication_id: str = "") -> DepositorReport:
    """List every DOI in a depositor report, normalized and deduplicated in order.

    Accepts HTML table rows as well as plain DOI-per-line listings.
    """
    title_match = _TITLE_RE.search(document)
    text = html.unescape(_TAG_RE.sub(" ", document))
    seen: dict[Doi, None] = {}
    for line in text.splitlines():
        for hit in _DOI_IN_TEXT_RE.findall(line):
            doi = try_normalize_doi(hit)
            if doi is not None:
                seen.setdefault(doi, None)
    if not seen:
        raise UnrecognizedReportFormat("no DOI lines found in depositor report")

    if not publication_id:
        pub_match = _PUBID_RE.search(document)
        publication_id = next((g for g in pub_match.groups() if g), "") if pub_match else ""
    labelled = _LABELLED_TITLE_RE.search(text)
    if labelled:
        journal_title = labelled.group(1).strip()
    elif title_match:
        journal_title = " ".join(html.unescape(title_match.group(1)).split())
    else:
        journal_title = ""

    stated_total = None
    total_match = _TOTAL_RE.search(text)
    if total_match:
        stated_total = int(total_match.group(1).replace(",", ""))
        if stated_total != len(seen):
            raise UnrecognizedReportFormat(
                f"report {publication_id or '?'} states {stated_total} DOIs but lists {len(seen)}"
            )
    return DepositorReport(publication_id, journal_title, tuple(seen), stated_total)


def _text(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, list):
        value = value[0] if value else None
        if value is None:
            return None
    value = " ".join(str(value).split())
    return value or None


def _year(value: Any) -> Optional[int]:
    text = _text(value)
    if not text:
        return None
    match = _YEAR_RE.search(text)
    if not match:
        return None
    year = int(match.group(0))
    return year if 1500 <= year <= 2100 else None


def parse_reference(item: dict) -> ReferenceRecord:
    """Map one entry of a work's ``reference`` array to a ReferenceRecord."""
    author = _text(item.get("author"))
    year = _year(item.get("year"))
    title = _text(item.get("article-title")) or _text(item.get("volume-title"))
    container = _text(item.get("journal-title")) or _text(item.get("series-title"))
    doi = try_normalize_doi(_text(item.get("DOI")))
    structured = StructuredFields(
        authors=(author,) if author else (), year=year, title=title, container=container, doi=doi
    )
    raw = _text(item.get("unstructured"))
    notes: tuple[str, ...] = ()
    if raw is None:
        parts = [p for p in (author, f"({year})" if year else None, title, container) if p]
        if doi:
            parts.append(f"doi:{doi}")
        raw = ". ".join(parts)
        notes = ("composed",)
    if not raw:
        raw = _text(item.get("key")) or "(empty reference)"
        notes = ("empty",)
    return ReferenceRecord(raw, None if structured.is_empty() else structured, notes)


def parse_work(body: bytes, fetched_at: datetime) -> CrossrefWork:
    """Parse a ``/works/{doi}`` response body."""
    try:
        payload = json.loads(body)
        message = payload["message"] if "message" in payload else payload
        doi = normalize_doi(message["DOI"])
        declared = int(message.get("reference-count", 0) or 0)
        refs = tuple(parse_reference(item) for item in message.get("reference") or [])
        cited_by = int(message.get("is-referenced-by-count", 0) or 0)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"malformed works payload: {exc}", body=body) from exc
    if declared < 0:
        raise ParseError("negative reference-count", body=body)
    return CrossrefWork(doi, declared, refs, cited_by, fetched_at)


def check_count_consistency(work: CrossrefWork) -> CountCheck:
    actual = len(work.references)
    return CountCheck(work.declared_reference_count == actual, work.declared_reference_count, actual)


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class CrossrefClient:
    """Fetch works and depositor reports, caching every raw body on disk.

    ``cache_dir/works`` holds one ``<percent-encoded DOI>.json`` per work and
    ``cache_dir/depositor`` one file per publication id.
    """

    def __init__(
        self,
        cache_dir: str | Path,
        http: Optional[HttpClient] = None,
        api_base: str = DEFAULT_API_BASE,
        report_url: str = DEPOSITOR_REPORT_URL,
        now: Callable[[], datetime] = utc_now,
    ):
        self.cache_dir = Path(cache_dir)
        self.works = SnapshotStore(self.cache_dir / "works", ".json")
        self.reports = SnapshotStore(self.cache_dir / "depositor", ".txt")
        self._http = http
        self.api_base = api_base.rstrip("/")
        self.report_url = report_url
        self._now = now

    @property
    def http(self) -> HttpClient:
        if self._http is None:
            self._http = HttpClient()
        return self._http

    def fetch_work(self, doi: Doi | str, cache_policy: CachePolicy | str = CachePolicy.PREFER_CACHE) -> CrossrefWork:
        doi = normalize_doi(doi)
        policy = CachePolicy(cache_policy)
        key = doi.value
        if policy is not CachePolicy.REFRESH:
            cached = self._from_cache(doi)
            if cached is not None:
                return cached
            if policy is CachePolicy.OFFLINE_ONLY:
                raise CacheMiss(f"no cached Crossref record for {doi}")

        url = f"{self.api_base}/works/{quote(key, safe='/')}"
        resp = self.http.get(url)
        stamp = self._now().isoformat()
        if resp.status == 404:
            self.works.write(key, b"", stamp, status="not_found")
            raise NotRegistered(key)
        if resp.status != 200:
            raise TransportError(f"GET {url} returned HTTP {resp.status}")
        self.works.write(key, resp.body, stamp)
        try:
            return parse_work(resp.body, datetime.fromisoformat(stamp))
        except ParseError as exc:
            exc.path = str(self.works.path_for(key))
            raise

    def _from_cache(self, doi: Doi) -> Optional[CrossrefWork]:
        key = doi.value
        entry = self.works.entry(key)
        if entry is not None and entry.status == "not_found":
            raise NotRegistered(key)
        body = self.works.read(key)
        if body is None:
            return None
        fetched_at = datetime.fromisoformat(entry.fetched_at) if entry else datetime.fromtimestamp(
            self.works.path_for(key).stat().st_mtime, timezone.utc
        ).replace(microsecond=0)
        try:
            return parse_work(body, fetched_at)
        except ParseError as exc:
            exc.path = str(self.works.path_for(key))
            raise

    def fetch_depositor_report(
        self, pubid: str, cache_policy: CachePolicy | str = CachePolicy.PREFER_CACHE
    ) -> DepositorReport:
        policy = CachePolicy(cache_policy)
        body = None if policy is CachePolicy.REFRESH else self.reports.read(pubid)
        if body is None:
            if policy is CachePolicy.OFFLINE_ONLY:
                raise CacheMiss(f"no cached depositor report for {pubid}")
            resp = self.http.get(self.report_url, params={"pubid": pubid})
            if resp.status != 200:
                raise TransportError(f"depositor report {pubid}: HTTP {resp.status}")
            body = resp.body
            self.reports.write(pubid, body, self._now().isoformat())
        try:
            return parse_depositor_report(body.decode("utf-8", errors="replace"), publication_id=pubid)
        except UnrecognizedReportFormat as exc:
            raise UnrecognizedReportFormat(f"{pubid}: {exc}") from exc
