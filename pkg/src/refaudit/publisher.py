"""Version-of-record reference lists scraped from publisher HTML pages.

Per-journal extraction rules live in a YAML file of adapter records; nothing
journal-specific is hard-coded here.
"""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Optional

import yaml
from bs4 import BeautifulSoup, Tag

from .cache import SnapshotStore
from .crossref import CachePolicy, utc_now
from .errors import CacheMiss, ExtractionFailed, TransportError
from .http import HttpClient
from .model import Doi, ReferenceRecord, normalize_doi

logger = logging.getLogger(__name__)

FALLBACK_CONTAINER = "@references-heading"
PLACEHOLDERS = frozenset({"doi", "suffix", "id"})

_NUMBERING_RE = re.compile(r"^\s*(?:\[\d+\]|\(\d+\)|\d+[\].)]|\d+(?=\s))\s*")
_ET_AL_RE = re.compile(r"^et\s+al\b", re.IGNORECASE)
_HEADING_RE = re.compile(r"^\s*(references?|bibliography|works cited|literature cited)\s*:?\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class AdapterSpec:
    journal_id: str
    url_template: str
    container_hint: str
    item_hint: str
    strip_patterns: tuple[str, ...] = ()
    doi_pattern: Optional[str] = None
    notes: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "strip_patterns", tuple(self.strip_patterns))
        names = [f for _, f, _, _ in string.Formatter().parse(self.url_template) if f is not None]
        if len(names) != 1 or names[0] not in PLACEHOLDERS:
            raise ValueError(
                f"adapter {self.journal_id}: url_template needs exactly one of "
                f"{{doi}}, {{suffix}}, {{id}}; got {names}"
            )
        if not self.container_hint.strip() or not self.item_hint.strip():
            raise ValueError(f"adapter {self.journal_id}: hints must be non-empty")
        for pattern in self.strip_patterns:
            re.compile(pattern)

    def url_for(self, doi: Doi) -> str:
        return self.url_template.format(doi=doi.value, suffix=doi.suffix, id=doi.suffix.upper())

    def handles(self, doi: Doi) -> bool:
        return bool(self.doi_pattern) and re.search(self.doi_pattern, doi.value) is not None


GENERIC_ADAPTER = AdapterSpec(
    journal_id="generic",
    url_template="https://doi.org/{doi}",
    container_hint=FALLBACK_CONTAINER,
    item_hint="li, p",
    notes="densest list-like block after a References heading",
)


@dataclass
class AdapterRegistry:
    adapters: list[AdapterSpec] = field(default_factory=list)
    fallback: AdapterSpec = GENERIC_ADAPTER

    def for_doi(self, doi: Doi) -> AdapterSpec:
        for adapter in self.adapters:
            if adapter.handles(doi):
                return adapter
        return self.fallback

    def get(self, journal_id: str) -> AdapterSpec:
        for adapter in self.adapters:
            if adapter.journal_id == journal_id:
                return adapter
        raise KeyError(journal_id)


def load_adapters(path: str | Path) -> AdapterRegistry:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    specs = []
    for rec in data.get("adapters", []):
        rule = rec.get("extraction", {})
        specs.append(
            AdapterSpec(
                journal_id=rec["journal_id"],
                url_template=rec["url_template"],
                container_hint=rule.get("container", ""),
                item_hint=rule.get("item", ""),
                strip_patterns=tuple(rule.get("strip", ())),
                doi_pattern=rec.get("doi_pattern"),
                notes=rec.get("notes", ""),
            )
        )
    return AdapterRegistry(specs)


def default_adapters_path() -> Path:
    return Path(__file__).parent / "data" / "adapters.yaml"


def _clean(text: str, strip_patterns: Iterable[str]) -> str:
    for pattern in strip_patterns:
        text = re.sub(pattern, " ", text)
    return " ".join(text.split())


def _find_by_heading(soup: BeautifulSoup, item_hint: str) -> Optional[Tag]:
    """Pick the block after a References heading holding the most list items."""
    best: Optional[Tag] = None
    best_count = 0
    for heading in soup.find_all(["h1", "h2", "h3", "h4", "h5", "h6", "strong", "b", "a", "span", "div", "p"]):
        if not _HEADING_RE.match(heading.get_text(" ", strip=True)):
            continue
        for candidate in heading.find_all_next(["ol", "ul", "div", "section"], limit=8):
            count = len(_top_level_items(candidate, item_hint))
            if count > best_count:
                best, best_count = candidate, count
    return best


def _top_level_items(container: Tag, item_hint: str) -> list[Tag]:
    items = container.select(item_hint)
    chosen = set(map(id, items))
    return [it for it in items if not any(id(p) in chosen for p in it.parents)]


def extract_references(document: str, spec: AdapterSpec) -> list[ReferenceRecord]:
    """Return the reference list of an article page, in page order.

    Numbering prefixes are stripped and whitespace collapsed. When most items
    are numbered, an unnumbered item (for instance an "et al." continuation
    line) is folded into the preceding one.
    """
    soup = BeautifulSoup(document, "html.parser")
    if spec.container_hint == FALLBACK_CONTAINER:
        container = _find_by_heading(soup, spec.item_hint)
    else:
        container = soup.select_one(spec.container_hint)
    if container is None:
        raise ExtractionFailed(f"{spec.journal_id}: no element matches {spec.container_hint!r}")

    entries: list[tuple[bool, str]] = []
    for item in _top_level_items(container, spec.item_hint):
        text = _clean(item.get_text(" ", strip=True), spec.strip_patterns)
        if not text or _HEADING_RE.match(text):
            continue
        numbered = bool(_NUMBERING_RE.match(text))
        if numbered:
            text = _NUMBERING_RE.sub("", text, count=1).strip()
            if not text:
                continue
        entries.append((numbered, text))

    numbered_share = sum(n for n, _ in entries) / len(entries) if entries else 0.0
    merged: list[str] = []
    for numbered, text in entries:
        continuation = merged and (
            _ET_AL_RE.match(text) or (numbered_share >= 0.5 and not numbered)
        )
        if continuation:
            merged[-1] = f"{merged[-1]} {text}"
        else:
            merged.append(text)
    return [ReferenceRecord(text) for text in merged]


@dataclass(frozen=True)
class PdfCheck:
    agrees: bool
    verified: bool


def verify_against_pdf_count(html_count: int, pdf_count: Optional[int]) -> PdfCheck:
    """Compare an extracted count with a manually recorded PDF count, if any."""
    if pdf_count is None:
        return PdfCheck(agrees=True, verified=False)
    return PdfCheck(agrees=html_count == pdf_count, verified=True)


class PageStore(SnapshotStore):
    """``cache_dir/pages/<percent-encoded DOI>.html`` snapshots."""

    def __init__(self, cache_dir: str | Path):
        super().__init__(Path(cache_dir) / "pages", ".html")


class PublisherClient:
    def __init__(
        self,
        cache_dir: str | Path,
        registry: AdapterRegistry,
        http: Optional[HttpClient] = None,
        now: Callable[[], datetime] = utc_now,
    ):
        self.pages = PageStore(cache_dir)
        self.registry = registry
        self._http = http
        self._now = now

    @property
    def http(self) -> HttpClient:
        if self._http is None:
            self._http = HttpClient()
        return self._http

    def fetch_page(self, doi: Doi | str, cache_policy: CachePolicy | str = CachePolicy.PREFER_CACHE) -> str:
        doi = normalize_doi(doi)
        policy = CachePolicy(cache_policy)
        if policy is not CachePolicy.REFRESH:
            body = self.pages.read(doi.value)
            if body is not None:
                return body.decode("utf-8", errors="replace")
            if policy is CachePolicy.OFFLINE_ONLY:
                raise CacheMiss(f"no page snapshot for {doi}")
        url = self.registry.for_doi(doi).url_for(doi)
        resp = self.http.get(url)
        if resp.status != 200:
            raise TransportError(f"GET {url} returned HTTP {resp.status}")
        self.pages.write(doi.value, resp.body, self._now().isoformat())
        return resp.body.decode("utf-8", errors="replace")

    def references(self, doi: Doi | str, cache_policy: CachePolicy | str = CachePolicy.OFFLINE_ONLY) -> list[ReferenceRecord]:
        doi = normalize_doi(doi)
        return extract_references(self.fetch_page(doi, cache_policy), self.registry.for_doi(doi))
