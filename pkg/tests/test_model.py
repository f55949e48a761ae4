from __future__ import annotations

import pytest

from refaudit.model import (
    BiblioRecord,
    ConstraintViolation,
    InvalidKind,
    ParsedReference,
    RawReference,
    Source,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
    make_result,
)

REF = ParsedReference(title="Deep Residual Learning for Image Recognition")
REC = BiblioRecord(title="Deep Residual Learning for Image Recognition", source=Source.LOCAL_INDEX)


def test_make_result_valid():
    r = make_result(REF, Verdict(Status.VALID), 0.97, REC, Strategy.LOCAL_INDEX)
    assert r.status is Status.VALID
    assert r.matched == REC
    assert r.diagnosing_strategy is Strategy.LOCAL_INDEX


def test_make_result_valid_without_match_rejected():
    with pytest.raises(ConstraintViolation):
        make_result(REF, Verdict(Status.VALID), None, None, Strategy.NONE)


def test_make_result_invalid_ghost_without_match():
    r = make_result(REF, Verdict(Status.INVALID, InvalidKind.GHOST), 0.42, None, Strategy.WEB_SEARCH)
    assert r.verdict.invalid_kind is InvalidKind.GHOST
    assert r.matched is None


def test_valid_requires_similarity_above_threshold():
    with pytest.raises(ConstraintViolation):
        make_result(REF, Verdict(Status.VALID), 0.9, REC, Strategy.LOCAL_INDEX)
    make_result(REF, Verdict(Status.VALID), 0.9, REC, Strategy.LOCAL_INDEX, threshold=0.8)


def test_matched_requires_similarity():
    with pytest.raises(ConstraintViolation):
        VerificationResult(reference=REF, verdict=Verdict(Status.INVALID), matched=REC)


@pytest.mark.parametrize("sim", [-0.01, 1.01])
def test_similarity_range(sim):
    with pytest.raises(ConstraintViolation):
        VerificationResult(reference=REF, verdict=Verdict(Status.INVALID), best_similarity=sim)


def test_invalid_kind_only_on_invalid():
    with pytest.raises(ConstraintViolation):
        Verdict(Status.VALID, InvalidKind.METADATA_ERROR)
    assert Verdict("Invalid", "Ghost").invalid_kind is InvalidKind.GHOST


def test_raw_reference_constraints():
    with pytest.raises(ConstraintViolation):
        RawReference(text="   ", paper_id="p", ref_index=0)
    with pytest.raises(ConstraintViolation):
        RawReference(text="x", paper_id="p", ref_index=-1)
    assert RawReference(text="x", paper_id="p", ref_index=3).key == ("p", 3)


def test_parsed_reference_blank_fields_become_absent():
    ref = ParsedReference(title="  ", venue="", authors=("A", " ", ""))
    assert ref.title is None and ref.venue is None
    assert ref.authors == ("A",)


def test_parsed_reference_title_must_survive_normalization():
    with pytest.raises(ConstraintViolation):
        ParsedReference(title="%%%###")


def test_biblio_record_requires_title():
    with pytest.raises(ConstraintViolation):
        BiblioRecord(title=" ", source=Source.CACHE)


def test_values_are_frozen():
    with pytest.raises(AttributeError):
        REF.title = "x"  # type: ignore[misc]
