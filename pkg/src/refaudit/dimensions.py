"""Ingest of bibliometric-platform CSV exports ("Export for bibliometric mapping").

The export carries one row per publication; the cited-references cell packs
the whole reference list as ``;``-separated records whose fields are
``|``-separated. Author lists inside a field are bracketed
(``[Rao, J. N.; Kataria, B.]``) and may themselves contain ``;``.
"""

from __future__ import annotations

import codecs
import csv
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Sequence

from .errors import EncodingError, HeaderMismatch, RowParseError
from .model import Doi, ReferenceRecord, StructuredFields, try_normalize_doi

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16
_NEWLINE_RE = re.compile(r"\r\n|\r|\n")
_YEAR_RE = re.compile(r"\b(\d{4})\b")


@dataclass(frozen=True)
class ExportLayout:
    """Column aliases and the reference-cell grammar; defaults follow the current export."""

    doi_columns: tuple[str, ...] = ("doi",)
    id_columns: tuple[str, ...] = ("publication id", "publication_id", "dimensions id", "id")
    title_columns: tuple[str, ...] = ("title",)
    references_columns: tuple[str, ...] = ("cited references", "cited_references", "references")
    cell_delimiter: str = ";"
    field_delimiter: str = "|"
    field_order: tuple[str, ...] = ("id", "authors", "source", "year", "title", "doi")
    header_search_rows: int = 5


DEFAULT_LAYOUT = ExportLayout()


@dataclass(frozen=True)
class ExportRow:
    doi: Optional[Doi]
    publication_id: str
    title: str
    cited_references_raw: str = ""

    def __post_init__(self) -> None:
        if not self.publication_id.strip():
            raise ValueError("publication_id must be non-empty")
        if self.doi is None and not self.title.strip():
            raise ValueError("row needs a DOI or a title")


def _decoded_lines(stream: BinaryIO) -> Iterator[str]:
    """Yield text lines (with their terminators) from UTF-8 bytes, BOM optional."""
    decoder = codecs.getincrementaldecoder("utf-8")()
    consumed = 0
    pending = ""
    first = True
    while True:
        chunk = stream.read(_CHUNK)
        final = not chunk
        if first and chunk.startswith(codecs.BOM_UTF8):
            chunk = chunk[len(codecs.BOM_UTF8):]
            consumed += len(codecs.BOM_UTF8)
        first = False
        buffered = len(decoder.getstate()[0])
        try:
            text = decoder.decode(chunk, final=final)
        except UnicodeDecodeError as exc:
            raise EncodingError(consumed - buffered + exc.start, "export is not valid UTF-8") from exc
        consumed += len(chunk)
        pending += text
        # hold back a trailing "\r" in case its "\n" is in the next chunk
        cut = len(pending) - 1 if pending.endswith("\r") and not final else len(pending)
        start = 0
        for match in _NEWLINE_RE.finditer(pending, 0, cut):
            yield pending[start : match.end()]
            start = match.end()
        pending = pending[start:]
        if final:
            if pending:
                yield pending
            return


def _open(source: BinaryIO | bytes | str | Path) -> BinaryIO:
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    if isinstance(source, (str, Path)):
        return open(source, "rb")
    return source


def _match_column(header: Sequence[str], aliases: Iterable[str]) -> Optional[int]:
    lowered = [h.strip().lower() for h in header]
    for alias in aliases:
        if alias in lowered:
            return lowered.index(alias)
    return None


def iter_export(source: BinaryIO | bytes | str | Path, layout: ExportLayout = DEFAULT_LAYOUT) -> Iterator[ExportRow]:
    """Stream rows out of an export without loading the file."""
    stream = _open(source)
    close = stream is not source
    try:
        reader = csv.reader(_decoded_lines(stream), strict=True)
        columns = None
        rows_seen = 0
        try:
            for record in reader:
                rows_seen += 1
                doi_col = _match_column(record, layout.doi_columns)
                id_col = _match_column(record, layout.id_columns)
                refs_col = _match_column(record, layout.references_columns)
                if None not in (doi_col, id_col, refs_col):
                    columns = (len(record), doi_col, id_col, refs_col, _match_column(record, layout.title_columns))
                    break
                if rows_seen >= layout.header_search_rows:
                    break
        except csv.Error as exc:
            raise HeaderMismatch(f"unreadable header: {exc}") from exc
        if columns is None:
            raise HeaderMismatch(
                "export lacks a DOI, publication id or cited references column "
                f"(aliases: {layout.doi_columns}, {layout.id_columns}, {layout.references_columns})"
            )
        width, doi_col, id_col, refs_col, title_col = columns
        row_number = 0
        while True:
            try:
                record = next(reader)
            except StopIteration:
                return
            except csv.Error as exc:
                raise RowParseError(row_number + 1, f"malformed quoting near line {reader.line_num}: {exc}") from exc
            row_number += 1
            if not any(cell.strip() for cell in record):
                continue
            if len(record) > width:
                raise RowParseError(row_number, f"expected {width} fields, got {len(record)}")
            record = record + [""] * (width - len(record))
            title = record[title_col].strip() if title_col is not None else ""
            try:
                yield ExportRow(
                    doi=try_normalize_doi(record[doi_col]),
                    publication_id=record[id_col].strip(),
                    title=title,
                    cited_references_raw=record[refs_col],
                )
            except ValueError as exc:
                raise RowParseError(row_number, str(exc)) from exc
    finally:
        if close:
            stream.close()


def parse_export(source: BinaryIO | bytes | str | Path, layout: ExportLayout = DEFAULT_LAYOUT) -> list[ExportRow]:
    return list(iter_export(source, layout))


def serialize_export(rows: Iterable[ExportRow]) -> bytes:
    """Write rows back in the export's column layout (used for round-trip checks)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["Publication ID", "DOI", "Title", "Cited references"])
    for row in rows:
        writer.writerow([row.publication_id, row.doi.value if row.doi else "", row.title, row.cited_references_raw])
    return buf.getvalue().encode("utf-8")


def _split_outside_brackets(text: str, delimiter: str) -> list[str]:
    if "[" not in text:
        return text.split(delimiter)
    parts: list[str] = []
    depth = 0
    start = 0
    for match in re.finditer(rf"[\[\]{re.escape(delimiter)}]", text):
        ch = match.group(0)
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth = max(depth - 1, 0)
        elif depth == 0:
            parts.append(text[start : match.start()])
            start = match.end()
    parts.append(text[start:])
    return parts


def _parse_record(record: str, layout: ExportLayout) -> ReferenceRecord:
    values = dict(zip(layout.field_order, (f.strip() for f in record.split(layout.field_delimiter))))
    authors_field = values.get("authors", "").strip()
    if authors_field.startswith("[") and authors_field.endswith("]"):
        authors_field = authors_field[1:-1]
    authors = tuple(a.strip() for a in authors_field.split(";") if a.strip())
    year = None
    year_match = _YEAR_RE.search(values.get("year", ""))
    if year_match and 1500 <= int(year_match.group(1)) <= 2100:
        year = int(year_match.group(1))
    structured = StructuredFields(
        authors=authors,
        year=year,
        title=values.get("title") or None,
        container=values.get("source") or None,
        doi=try_normalize_doi(values.get("doi")),
    )
    return ReferenceRecord(record.strip(), None if structured.is_empty() else structured)


def split_reference_cell(cell: str, layout: ExportLayout = DEFAULT_LAYOUT) -> list[ReferenceRecord]:
    """Split a cited-references cell into one record per reference.

    A non-empty cell with no field delimiter at all cannot be trusted to
    split; it comes back as a single record flagged ``"unsplit"``.
    """
    if not cell or not cell.strip():
        return []
    if layout.field_delimiter not in cell:
        logger.warning("reference cell has no %r delimiter; kept whole", layout.field_delimiter)
        return [ReferenceRecord(" ".join(cell.split()), notes=("unsplit",))]
    records = _split_outside_brackets(cell, layout.cell_delimiter)
    return [_parse_record(r, layout) for r in records if r.strip()]


@dataclass(frozen=True)
class DuplicateRow:
    doi: Doi
    kept: str
    dropped: tuple[str, ...]


@dataclass(frozen=True)
class JoinResult:
    references: dict[Doi, tuple[ReferenceRecord, ...]]
    unmatched_rows: tuple[str, ...] = ()
    unavailable: tuple[Doi, ...] = ()
    duplicates: tuple[DuplicateRow, ...] = field(default_factory=tuple)


def join_to_corpus(
    rows: Iterable[ExportRow], corpus_dois: Iterable[Doi], layout: ExportLayout = DEFAULT_LAYOUT
) -> JoinResult:
    """Attach export rows to the DOI inventory.

    Rows whose DOI is missing or outside the corpus are reported unmatched;
    corpus DOIs with no row are Unavailable. When two rows claim one DOI the
    first is kept and both are flagged.
    """
    corpus = set(corpus_dois)
    kept: dict[Doi, ExportRow] = {}
    dropped: dict[Doi, list[str]] = {}
    unmatched: list[str] = []
    for row in rows:
        if row.doi is None or row.doi not in corpus:
            unmatched.append(row.publication_id)
            continue
        if row.doi in kept:
            dropped.setdefault(row.doi, []).append(row.publication_id)
            continue
        kept[row.doi] = row
    references = {doi: tuple(split_reference_cell(row.cited_references_raw, layout)) for doi, row in kept.items()}
    duplicates = tuple(
        DuplicateRow(doi, kept[doi].publication_id, tuple(ids)) for doi, ids in sorted(dropped.items())
    )
    for dup in duplicates:
        logger.warning("DOI %s claimed by rows %s and %s; keeping the first", dup.doi, dup.kept, ", ".join(dup.dropped))
    unavailable = tuple(sorted(corpus - kept.keys()))
    return JoinResult(references, tuple(unmatched), unavailable, duplicates)
