from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from refaudit.errors import MalformedDoi
from refaudit.model import (
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
    StructuredFields,
    normalize_doi,
    normalize_entity_name,
    try_normalize_doi,
)

C = SourceKind.CROSSREF


@pytest.mark.parametrize(
    "raw",
    [
        "10.32628/IJSRST229212",
        "https://doi.org/10.32628/IJSRST229212",
        "http://dx.doi.org/10.32628/ijsrst229212",
        "doi:10.32628/IJSRST229212",
        "DOI: 10.32628/ijsrst229212",
        "info:doi/10.32628/ijsrst229212",
        "https://doi.org/10.32628%2FIJSRST229212",
        "  10.32628/ijsrst229212.  ",
    ],
)
def test_normalize_doi_variants(raw):
    assert normalize_doi(raw) == Doi("10.32628/ijsrst229212")


@pytest.mark.parametrize("raw", ["", "   ", "not a doi", "10.12/x", "10.32628/", "https://example.org/paper"])
def test_normalize_doi_rejects(raw):
    with pytest.raises(MalformedDoi):
        normalize_doi(raw)
    assert try_normalize_doi(raw) is None


def test_doi_parts_and_validation():
    doi = Doi("10.1000/abc.def")
    assert (doi.prefix, doi.suffix, str(doi)) == ("10.1000", "abc.def", "10.1000/abc.def")
    with pytest.raises(MalformedDoi):
        Doi("10.1000/ABC")
    assert isinstance(MalformedDoi("x"), ValueError)


doi_suffix = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=127) | st.sampled_from("-._;()/:"),
    min_size=1,
    max_size=30,
).filter(lambda s: s[-1].isalnum())


@given(prefix=st.integers(1000, 999999999), suffix=doi_suffix, wrap=st.sampled_from(["{}", "doi:{}", "https://doi.org/{}"]))
def test_normalize_doi_idempotent(prefix, suffix, wrap):
    first = normalize_doi(wrap.format(f"10.{prefix}/{suffix}"))
    assert normalize_doi(first.value) == first
    assert normalize_doi(first) is first
    assert first.value == first.value.lower()


def test_source_kind_comparator():
    assert SourceKind.comparator("crossref") is C
    assert SourceKind.comparator(SourceKind.DIMENSIONS) is SourceKind.DIMENSIONS
    with pytest.raises(ValueError):
        SourceKind.comparator("publisher")
    assert not SourceKind.PUBLISHER.is_comparator


def test_reference_and_fields_validation():
    with pytest.raises(ValueError):
        ReferenceRecord("   ")
    with pytest.raises(ValueError):
        StructuredFields(year=1200)
    assert StructuredFields().is_empty()
    assert not StructuredFields(title="x").is_empty()


def test_publication_record_absent_vs_empty():
    doi = Doi("10.1000/x")
    pub = PublicationRecord(doi, {SourceKind.PUBLISHER: [ReferenceRecord("a")]})
    assert pub.count(C) is None
    pub = pub.with_list(C, [])
    assert pub.count(C) == 0
    assert pub.count(SourceKind.PUBLISHER) == 1


@pytest.mark.parametrize("s,r,status", [(7, 47, AuditStatus.SNEAKED), (5, 5, AuditStatus.OK), (9, 2, AuditStatus.MISSING)])
def test_delta_result_from_counts(s, r, status):
    res = DeltaResult.from_counts(Doi("10.1000/x"), C, s, r)
    assert (res.delta, res.status) == (r - s, status)


def test_delta_result_rejects_inconsistency():
    doi = Doi("10.1000/x")
    with pytest.raises(ValueError):
        DeltaResult(doi, C, 7, 47, 39, AuditStatus.SNEAKED)
    with pytest.raises(ValueError):
        DeltaResult(doi, C, 7, 47, 40, AuditStatus.MISSING)
    with pytest.raises(ValueError):
        DeltaResult(doi, SourceKind.PUBLISHER, 7, 47, 40, AuditStatus.SNEAKED)
    with pytest.raises(ValueError):
        DeltaResult(doi, C, -1, 0, 1, AuditStatus.SNEAKED)


def _table(rows: dict[AuditStatus, tuple[int, int, int]]) -> CorpusTable:
    srows = {k: StatusRow(*v) for k, v in rows.items()}
    totals = sum(srows.values(), StatusRow())
    return CorpusTable(C, srows, srows[AuditStatus.SNEAKED].difference, srows[AuditStatus.MISSING].difference, totals)


def test_corpus_table_crossref_values_balance():
    table = _table({AuditStatus.OK: (3203, 55252, 55252), AuditStatus.SNEAKED: (230, 4426, 10404), AuditStatus.MISSING: (73, 957, 180)})
    assert (table.delta_sneaked, table.delta_missing) == (5978, -777)
    assert table.totals == StatusRow(3506, 60635, 65836)
    assert 60635 + 5978 - 777 == 65836


def test_corpus_table_dimensions_values_balance():
    table = _table({AuditStatus.OK: (202, 2414, 2414), AuditStatus.SNEAKED: (120, 1656, 2672), AuditStatus.MISSING: (3184, 56565, 31853)})
    assert (table.delta_sneaked, table.delta_missing) == (1016, -24712)
    assert (table.totals.refs_in_html, table.totals.refs_in_source) == (60635, 36939)


def test_corpus_table_invariants():
    good = {AuditStatus.OK: StatusRow(1, 3, 3), AuditStatus.SNEAKED: StatusRow(1, 2, 5)}
    totals = StatusRow(2, 5, 8)
    CorpusTable(C, good, 3, 0, totals)
    with pytest.raises(ValueError):
        CorpusTable(C, good, 3, 0, StatusRow(3, 5, 8))  # partition
    with pytest.raises(ValueError):
        CorpusTable(C, good, 4, 0, totals)  # delta vs row
    with pytest.raises(ValueError):
        CorpusTable(C, {AuditStatus.OK: StatusRow(1, 3, 4)}, 0, 0, StatusRow(1, 3, 4))  # OK row difference
    with pytest.raises(ValueError):
        CorpusTable(C, good, 3, 0, StatusRow(2, 5, 9))  # balance
    assert CorpusTable.empty(C).totals == StatusRow()


def test_beneficiary_profile_ordering_and_truncation():
    a, b, c = (Entity(EntityKind.AUTHOR, n) for n in ("rao", "kataria", "smith"))
    j = Entity(EntityKind.CONTAINER, "ijast")
    profile = BeneficiaryProfile({"x": 1, "y": 3}, {c: 1, a: 5, b: 3, j: 2}, frozenset({c}))
    assert list(profile.token_counts) == ["y", "x"]
    assert profile.top(EntityKind.AUTHOR, 2) == [("rao", 5), ("kataria", 3)]
    assert profile.count(EntityKind.AUTHOR, "  RAO ") == 5
    small = profile.truncated(1)
    assert small.top(EntityKind.AUTHOR) == [("rao", 5)]
    assert small.top(EntityKind.CONTAINER) == [("ijast", 2)]
    assert small.low_confidence == frozenset()
    with pytest.raises(ValueError):
        BeneficiaryProfile({"x": 0})


def test_normalize_entity_name():
    assert normalize_entity_name("  Rao,  J. Nageswara. ") == "rao, j. nageswara"
