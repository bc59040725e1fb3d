"""Reference-string normalization, duplicated-block detection and list alignment."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .model import ReferenceRecord

DEFAULT_THRESHOLD = 0.6
YEAR_BONUS = 0.1

STOPWORDS = frozenset(
    """
    a an and are as at be but by for from has have he her his i if in into is it its no nor
    not of on or our she so than that the their them then there these they this those to
    upon was we were which who will with within without
    """.split()
)
BOILERPLATE = frozenset(
    {"vol", "pp", "doi", "http", "https", "www", "journal", "international", "org", "eds", "ed", "et", "al"}
)
IGNORED_TOKENS = STOPWORDS | BOILERPLATE

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_DOI_RE = re.compile(r"\b(?:doi:\s*)?10\.\d{4,9}/\S+", re.IGNORECASE)
_PLATFORM_ID_RE = re.compile(r"\bpub\.\d+\b", re.IGNORECASE)
_NON_WORD_RE = re.compile(r"[^a-z0-9]+")


def _is_year(token: str) -> bool:
    return len(token) == 4 and token.isdigit() and 1500 <= int(token) <= 2100


@dataclass(frozen=True)
class CanonicalReference:
    key: str
    tokens: tuple[str, ...]
    year: Optional[int]
    source_record: ReferenceRecord

    @property
    def token_set(self) -> frozenset[str]:
        return frozenset(self.tokens)


def fold(text: str) -> str:
    """Lowercase and strip diacritics."""
    if text.isascii():
        return text.lower()
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch)).lower()


def tokenize(text: str) -> list[str]:
    """Content tokens of a reference string, in order of appearance.

    Identifiers (URLs, DOIs, platform ids), stopwords, bibliographic
    boilerplate, non-year numbers and lone initials are dropped.
    """
    text = _URL_RE.sub(" ", text)
    text = _DOI_RE.sub(" ", text)
    text = _PLATFORM_ID_RE.sub(" ", text)
    raw_tokens = [t for t in _NON_WORD_RE.split(fold(text)) if t]
    kept = [
        t
        for t in raw_tokens
        if t not in IGNORED_TOKENS and not (t.isdigit() and not _is_year(t)) and len(t) > 1
    ]
    if kept:
        return kept
    # degenerate inputs such as "X": keep whatever survives punctuation removal
    return raw_tokens


def canonicalize(ref: ReferenceRecord) -> CanonicalReference:
    """Build the comparison key for one reference.

    A year that occurs exactly once (as a distinct value) is moved to the end
    of the key so that author-date and numbered styles of the same work agree.
    """
    tokens = tokenize(ref.raw)
    years = {t for t in tokens if _is_year(t)}
    year: Optional[int] = None
    if len(years) == 1:
        (y,) = years
        year = int(y)
        tokens = [t for t in tokens if t != y] + [y]
    elif not years and ref.structured is not None and ref.structured.year is not None:
        year = ref.structured.year
    return CanonicalReference(" ".join(tokens), tuple(tokens), year, ref)


def canonicalize_all(refs: Sequence[ReferenceRecord]) -> list[CanonicalReference]:
    return [canonicalize(r) for r in refs]


@dataclass(frozen=True)
class Duplication:
    factor: int
    block_length: int
    repeated_keys: tuple[str, ...] = ()


def detect_duplication(refs: Sequence[CanonicalReference]) -> Duplication:
    """Find the largest k such that ``refs`` is its first block repeated k times."""
    keys = [r.key for r in refs]
    n = len(keys)
    counts = Counter(keys)
    repeated = tuple(sorted(k for k, c in counts.items() if c > 1))
    if n == 0:
        return Duplication(1, 0, repeated)
    for block in range(1, n + 1):
        if n % block:
            continue
        head = keys[:block]
        if all(keys[i : i + block] == head for i in range(block, n, block)):
            return Duplication(n // block, block, repeated)
    raise AssertionError("unreachable: the whole list is always one block")


def similarity(a: CanonicalReference, b: CanonicalReference) -> float:
    """Token-set Jaccard plus a small bonus for equal extracted years, capped at 1."""
    sa, sb = a.token_set, b.token_set
    if not sa and not sb:
        return 1.0
    union = len(sa | sb)
    score = len(sa & sb) / union if union else 0.0
    if a.year is not None and a.year == b.year:
        score += YEAR_BONUS
    return min(score, 1.0)


@dataclass(frozen=True)
class Alignment:
    matched: tuple[tuple[int, int, float], ...]
    only_in_a: tuple[int, ...]
    only_in_b: tuple[int, ...]


def align(
    a: Sequence[CanonicalReference],
    b: Sequence[CanonicalReference],
    threshold: float = DEFAULT_THRESHOLD,
) -> Alignment:
    """Greedy best-first one-to-one matching of two reference lists.

    Candidate pairs are visited by descending similarity; ties go to the pair
    with the smaller (min index, max index), which keeps the result a mirror
    image when ``a`` and ``b`` are swapped.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    candidates = []
    for i, ra in enumerate(a):
        for j, rb in enumerate(b):
            score = similarity(ra, rb)
            if score >= threshold:
                candidates.append((-score, min(i, j), max(i, j), i, j, score))
    candidates.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matched = []
    for *_, i, j, score in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matched.append((i, j, score))
    matched.sort()
    return Alignment(
        tuple(matched),
        tuple(i for i in range(len(a)) if i not in used_a),
        tuple(j for j in range(len(b)) if j not in used_b),
    )
