"""Domain types shared by every stage of the audit.

All types are frozen dataclasses; list-valued fields are stored as tuples so
instances can be shared between worker threads without copying.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional
from urllib.parse import unquote

from .errors import MalformedDoi

_DOI_RE = re.compile(r"10\.\d{4,9}(?:\.\d+)*/\S+", re.IGNORECASE)
_CANONICAL_DOI_RE = re.compile(r"^10\.\d{4,9}(?:\.\d+)*/\S+$")
_DOI_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "info:doi/",
    "doi:",
)
_TRAILING_JUNK = ".,;:)]}>\"'"


@dataclass(frozen=True, order=True)
class Doi:
    """A DOI name in canonical (lowercase, prefix-free) form.

    Construct through :func:`normalize_doi` unless the value is already
    canonical; the constructor only validates.
    """

    value: str

    def __post_init__(self) -> None:
        if not _CANONICAL_DOI_RE.match(self.value) or self.value != self.value.lower():
            raise MalformedDoi(f"not a canonical DOI: {self.value!r}")

    def __str__(self) -> str:
        return self.value

    @property
    def prefix(self) -> str:
        return self.value.split("/", 1)[0]

    @property
    def suffix(self) -> str:
        return self.value.split("/", 1)[1]


def normalize_doi(raw: str | Doi) -> Doi:
    """Return the canonical :class:`Doi` for ``raw``.

    Accepts bare DOI names, ``doi:`` labels and resolver URLs. Raises
    :class:`MalformedDoi` when no ``10.NNNN/suffix`` pattern is present.
    """
    if isinstance(raw, Doi):
        return raw
    if raw is None:
        raise MalformedDoi("empty DOI")
    text = raw.strip()
    lowered = text.lower()
    for prefix in _DOI_PREFIXES:
        if lowered.startswith(prefix):
            text = text[len(prefix):]
            break
    if "%2f" in text.lower():
        text = unquote(text)
    match = _DOI_RE.search(text)
    if not match:
        raise MalformedDoi(f"no DOI found in {raw!r}")
    value = match.group(0).rstrip(_TRAILING_JUNK).lower()
    if "/" not in value or value.endswith("/"):
        raise MalformedDoi(f"DOI has empty suffix: {raw!r}")
    return Doi(value)


def try_normalize_doi(raw: str | None) -> Optional[Doi]:
    if not raw or not raw.strip():
        return None
    try:
        return normalize_doi(raw)
    except MalformedDoi:
        return None


class SourceKind(str, enum.Enum):
    PUBLISHER = "publisher"
    CROSSREF = "crossref"
    DIMENSIONS = "dimensions"

    @property
    def is_comparator(self) -> bool:
        return self is not SourceKind.PUBLISHER

    @classmethod
    def comparator(cls, value: str | "SourceKind") -> "SourceKind":
        kind = cls(value.lower() if isinstance(value, str) else value)
        if not kind.is_comparator:
            raise ValueError(f"{kind.value} cannot be used as a comparator")
        return kind


@dataclass(frozen=True)
class StructuredFields:
    authors: tuple[str, ...] = ()
    year: Optional[int] = None
    title: Optional[str] = None
    container: Optional[str] = None
    doi: Optional[Doi] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "authors", tuple(self.authors))
        if self.year is not None and not 1500 <= self.year <= 2100:
            raise ValueError(f"implausible publication year: {self.year}")

    def is_empty(self) -> bool:
        return not (self.authors or self.year or self.title or self.container or self.doi)


@dataclass(frozen=True)
class ReferenceRecord:
    raw: str
    structured: Optional[StructuredFields] = None
    # free-form flags such as "unsplit" or "low-confidence"
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.raw, str) or not self.raw.strip():
            raise ValueError("reference text must be non-empty")
        object.__setattr__(self, "notes", tuple(self.notes))


@dataclass(frozen=True)
class PublicationRecord:
    """One article and whatever reference lists each source supplied.

    A source missing from ``lists`` did not cover the DOI at all; an empty
    tuple means the source covered it but registered nothing.
    """

    doi: Doi
    lists: Mapping[SourceKind, tuple[ReferenceRecord, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "lists", {SourceKind(k): tuple(v) for k, v in self.lists.items() if v is not None}
        )

    def references(self, source: SourceKind) -> Optional[tuple[ReferenceRecord, ...]]:
        return self.lists.get(source)

    def count(self, source: SourceKind) -> Optional[int]:
        refs = self.lists.get(source)
        return None if refs is None else len(refs)

    def with_list(self, source: SourceKind, refs: Iterable[ReferenceRecord]) -> "PublicationRecord":
        lists = dict(self.lists)
        lists[source] = tuple(refs)
        return PublicationRecord(self.doi, lists)


class AuditStatus(str, enum.Enum):
    OK = "ok"
    SNEAKED = "sneaked"
    MISSING = "missing"

    @classmethod
    def from_delta(cls, delta: int) -> "AuditStatus":
        if delta > 0:
            return cls.SNEAKED
        if delta < 0:
            return cls.MISSING
        return cls.OK

    @property
    def label(self) -> str:
        return {"ok": "OK", "sneaked": "Sneaked", "missing": "Missing"}[self.value]


STATUS_ORDER = (AuditStatus.OK, AuditStatus.SNEAKED, AuditStatus.MISSING)


@dataclass(frozen=True)
class DeltaResult:
    doi: Doi
    comparator: SourceKind
    s: int
    r: int
    delta: int
    status: AuditStatus

    def __post_init__(self) -> None:
        if not self.comparator.is_comparator:
            raise ValueError("comparator must be crossref or dimensions")
        if self.s < 0 or self.r < 0:
            raise ValueError("reference counts cannot be negative")
        if self.delta != self.r - self.s:
            raise ValueError(f"delta {self.delta} != r - s = {self.r - self.s}")
        if self.status is not AuditStatus.from_delta(self.delta):
            raise ValueError(f"status {self.status} inconsistent with delta {self.delta}")

    @classmethod
    def from_counts(cls, doi: Doi, comparator: SourceKind, s: int, r: int) -> "DeltaResult":
        delta = r - s
        return cls(doi, comparator, s, r, delta, AuditStatus.from_delta(delta))


@dataclass(frozen=True)
class StatusRow:
    article_count: int = 0
    refs_in_html: int = 0
    refs_in_source: int = 0

    def __add__(self, other: "StatusRow") -> "StatusRow":
        return StatusRow(
            self.article_count + other.article_count,
            self.refs_in_html + other.refs_in_html,
            self.refs_in_source + other.refs_in_source,
        )

    @property
    def difference(self) -> int:
        return self.refs_in_source - self.refs_in_html


@dataclass(frozen=True)
class CorpusTable:
    comparator: SourceKind
    rows: Mapping[AuditStatus, StatusRow]
    delta_sneaked: int
    delta_missing: int
    totals: StatusRow

    def __post_init__(self) -> None:
        rows = {status: self.rows.get(status, StatusRow()) for status in STATUS_ORDER}
        object.__setattr__(self, "rows", rows)
        if sum(r.article_count for r in rows.values()) != self.totals.article_count:
            raise ValueError("status rows do not partition the corpus")
        if self.delta_sneaked < 0 or self.delta_missing > 0:
            raise ValueError("delta bounds have the wrong sign")
        if self.delta_sneaked != rows[AuditStatus.SNEAKED].difference:
            raise ValueError("delta_sneaked disagrees with the Sneaked row")
        if self.delta_missing != rows[AuditStatus.MISSING].difference:
            raise ValueError("delta_missing disagrees with the Missing row")
        if rows[AuditStatus.OK].difference != 0:
            raise ValueError("OK row must have equal reference counts")
        balance = self.totals.refs_in_html + self.delta_sneaked + self.delta_missing
        if balance != self.totals.refs_in_source:
            raise ValueError("table does not balance")

    @classmethod
    def empty(cls, comparator: SourceKind) -> "CorpusTable":
        return cls(comparator, {}, 0, 0, StatusRow())


class EntityKind(str, enum.Enum):
    AUTHOR = "author"
    CONTAINER = "container"


@dataclass(frozen=True, order=True)
class Entity:
    kind: EntityKind
    name: str


@dataclass(frozen=True)
class BeneficiaryProfile:
    """Who appears in sneaked references, and how often.

    Both mappings are ordered by descending count, then key.
    ``low_confidence`` holds entities recovered only from unstructured text.
    """

    token_counts: Mapping[str, int] = field(default_factory=dict)
    entity_counts: Mapping[Entity, int] = field(default_factory=dict)
    low_confidence: frozenset[Entity] = frozenset()

    def __post_init__(self) -> None:
        for counts in (self.token_counts, self.entity_counts):
            if any(c < 1 for c in counts.values()):
                raise ValueError("profile counts must be positive")
        object.__setattr__(
            self, "token_counts", dict(sorted(self.token_counts.items(), key=lambda kv: (-kv[1], kv[0])))
        )
        object.__setattr__(
            self,
            "entity_counts",
            dict(sorted(self.entity_counts.items(), key=lambda kv: (-kv[1], kv[0].kind.value, kv[0].name))),
        )
        object.__setattr__(self, "low_confidence", frozenset(self.low_confidence))

    def top(self, kind: EntityKind, n: int = 10) -> list[tuple[str, int]]:
        hits = [(e.name, c) for e, c in self.entity_counts.items() if e.kind is kind]
        return hits[:n]

    def count(self, kind: EntityKind, name: str) -> int:
        return self.entity_counts.get(Entity(kind, normalize_entity_name(name)), 0)

    def truncated(self, n: int) -> "BeneficiaryProfile":
        tokens = dict(list(self.token_counts.items())[:n])
        entities: dict[Entity, int] = {}
        for kind in EntityKind:
            ranked = [(e, c) for e, c in self.entity_counts.items() if e.kind is kind]
            entities.update(ranked[:n])
        return BeneficiaryProfile(tokens, entities, frozenset(e for e in self.low_confidence if e in entities))


_EDGE_PUNCT = " \t\r\n.,;:!?\"'()[]{}<>-_/\\|*&"


def normalize_entity_name(name: str) -> str:
    return " ".join(name.lower().split()).strip(_EDGE_PUNCT)
