"""Shared value types for references, bibliographic records and verdicts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ConstraintViolation(ValueError):
    """A value object was constructed with inconsistent fields."""


class ReferenceType(str, enum.Enum):
    ARTICLE = "article"
    SERIES = "series"
    THESIS = "thesis"
    MONOGRAPH = "monograph"
    UNKNOWN = "unknown"


class Source(str, enum.Enum):
    LOCAL_INDEX = "LocalIndex"
    ACADEMIC_DB = "AcademicDB"
    WEB_SEARCH = "WebSearch"
    CACHE = "Cache"


class Status(str, enum.Enum):
    VALID = "Valid"
    INVALID = "Invalid"
    NON_ACADEMIC = "NonAcademic"
    PARSE_FAILURE = "ParseFailure"
    # every enabled source errored; not a finding about the reference itself
    UNVERIFIED = "Unverified"


class InvalidKind(str, enum.Enum):
    METADATA_ERROR = "MetadataError"
    GHOST = "Ghost"


class Strategy(str, enum.Enum):
    CACHE = "Cache"
    LOCAL_INDEX = "LocalIndex"
    ACADEMIC_DB = "AcademicDB"
    WEB_SEARCH = "WebSearch"
    LLM_REPARSE = "LLMReparse"
    NONE = "None"


def _clean_optional(value: str | None) -> str | None:
    if value is None:
        return None
    value = value.strip()
    return value or None


@dataclass(frozen=True)
class RawReference:
    """One verbatim bibliography entry and where it came from."""

    text: str
    paper_id: str
    ref_index: int

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ConstraintViolation("reference text is empty")
        if self.ref_index < 0:
            raise ConstraintViolation(f"ref_index must be >= 0, got {self.ref_index}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.paper_id, self.ref_index)


@dataclass(frozen=True)
class ParsedReference:
    title: str | None = None
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    url: str | None = None
    doi: str | None = None
    reference_type: ReferenceType = ReferenceType.UNKNOWN

    def __post_init__(self) -> None:
        # normalize empty strings to absent so "" never masquerades as a title
        for name in ("title", "venue", "url", "doi"):
            object.__setattr__(self, name, _clean_optional(getattr(self, name)))
        object.__setattr__(self, "authors", tuple(a.strip() for a in self.authors if a and a.strip()))
        object.__setattr__(self, "reference_type", ReferenceType(self.reference_type))
        if self.title is not None:
            from refaudit.matching import normalize_title

            if not normalize_title(self.title):
                raise ConstraintViolation(f"title {self.title!r} is empty after normalization")


@dataclass(frozen=True)
class BiblioRecord:
    """A ground-truth record returned by a bibliographic source."""

    title: str
    source: Source
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    external_id: str | None = None

    def __post_init__(self) -> None:
        if not self.title or not self.title.strip():
            raise ConstraintViolation("record title is empty")
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "venue", _clean_optional(self.venue))
        object.__setattr__(self, "external_id", _clean_optional(self.external_id))


@dataclass(frozen=True)
class Verdict:
    status: Status
    invalid_kind: InvalidKind | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", Status(self.status))
        if self.invalid_kind is not None:
            object.__setattr__(self, "invalid_kind", InvalidKind(self.invalid_kind))
            if self.status is not Status.INVALID:
                raise ConstraintViolation("invalid_kind is only allowed on Invalid verdicts")


VALID = Verdict(Status.VALID)
INVALID = Verdict(Status.INVALID)
NON_ACADEMIC = Verdict(Status.NON_ACADEMIC)
PARSE_FAILURE = Verdict(Status.PARSE_FAILURE)
UNVERIFIED = Verdict(Status.UNVERIFIED)


@dataclass(frozen=True)
class VerificationResult:
    """The verdict for a single reference.

    Construction enforces the structural invariants (a Valid verdict carries
    a matched record, a matched record carries a similarity).  The threshold
    invariant depends on run configuration and is checked by
    :func:`make_result`.
    """

    reference: ParsedReference
    verdict: Verdict
    best_similarity: float | None = None
    matched: BiblioRecord | None = None
    diagnosing_strategy: Strategy = Strategy.NONE
    notes: str = ""
    raw: RawReference | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "diagnosing_strategy", Strategy(self.diagnosing_strategy))
        if self.best_similarity is not None:
            if not 0.0 <= self.best_similarity <= 1.0:
                raise ConstraintViolation(f"similarity {self.best_similarity} outside [0, 1]")
        if self.matched is not None and self.best_similarity is None:
            raise ConstraintViolation("a matched record requires a similarity")
        if self.verdict.status is Status.VALID and self.matched is None:
            raise ConstraintViolation("a Valid verdict requires a matched record")

    @property
    def status(self) -> Status:
        return self.verdict.status


def make_result(
    ref: ParsedReference,
    verdict: Verdict,
    sim: float | None,
    matched: BiblioRecord | None,
    strategy: Strategy,
    *,
    threshold: float = 0.9,
    raw: RawReference | None = None,
    notes: str = "",
) -> VerificationResult:
    """Build a result, additionally requiring ``sim > threshold`` for Valid verdicts."""
    if verdict.status is Status.VALID and (sim is None or not sim > threshold):
        raise ConstraintViolation(f"Valid verdict needs similarity > {threshold}, got {sim}")
    return VerificationResult(
        reference=ref,
        verdict=verdict,
        best_similarity=sim,
        matched=matched,
        diagnosing_strategy=strategy,
        notes=notes,
        raw=raw,
    )
