"""Title normalization, edit-distance similarity and threshold classification."""

from __future__ import annotations

import unicodedata
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from rapidfuzz.distance import Levenshtein as _Levenshtein

from refaudit.model import BiblioRecord, Verdict, Status

DEFAULT_THRESHOLD = 0.9

_HYPHENS = frozenset("-\u2010\u2011\u2012\u2013\u2014\u2015\u2212\u00ad")


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class MatchConfig:
    threshold: float = DEFAULT_THRESHOLD
    strip_hyphens: bool = True
    fold_unicode: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")

    def normalize(self, title: str) -> str:
        return normalize_title(title, strip_hyphens=self.strip_hyphens, fold_unicode=self.fold_unicode)


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    candidate: BiblioRecord

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"similarity {self.value} outside [0, 1]")


def normalize_title(title: str, *, strip_hyphens: bool = True, fold_unicode: bool = True) -> str:
    """Canonical form used for matching and as the cache key.

    Compatibility fold, lowercase, drop diacritics, turn punctuation and
    symbols into spaces, collapse whitespace.  With ``strip_hyphens=False``
    hyphens are deleted instead of spaced, so ``hyphen-ation`` joins up.
    """
    if not title:
        return ""
    text = unicodedata.normalize("NFKC", title) if fold_unicode else title
    text = text.lower()
    if fold_unicode:
        text = "".join(c for c in unicodedata.normalize("NFKD", text) if not unicodedata.combining(c))
    out = []
    for ch in text:
        if ch in _HYPHENS:
            out.append(" " if strip_hyphens else "")
            continue
        cat = unicodedata.category(ch)
        if cat[0] in "PSZC":
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def levenshtein(a: str, b: str, max_distance: int | None = None) -> int:
    """Unit-cost edit distance between ``a`` and ``b`` over code points.

    With ``max_distance``, any distance above it is reported as
    ``max_distance + 1``.
    """
    if max_distance is not None and max_distance < 0:
        raise ValueError("max_distance must be >= 0")
    return _Levenshtein.distance(a, b, score_cutoff=max_distance)


def similarity(a: str, b: str) -> float:
    """``1 - levenshtein(a, b) / max(len(a), len(b))``; 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def score_candidates(title: str, records: Iterable[BiblioRecord], cfg: MatchConfig | None = None) -> list[SimilarityScore]:
    cfg = cfg or MatchConfig()
    query = cfg.normalize(title)
    return [SimilarityScore(similarity(query, cfg.normalize(r.title)), r) for r in records]


def classify(candidates: Sequence[SimilarityScore], cfg: MatchConfig | None = None) -> tuple[Verdict, SimilarityScore | None]:
    """Valid iff the best candidate's similarity strictly exceeds the threshold.

    Ties go to the earliest candidate.
    """
    cfg = cfg or MatchConfig()
    best: SimilarityScore | None = None
    for cand in candidates:
        if best is None or cand.value > best.value:
            best = cand
    if best is not None and best.value > cfg.threshold:
        return Verdict(Status.VALID), best
    return Verdict(Status.INVALID), best


def ecdf_fraction_at_or_below(scores: Sequence[float], x: float) -> float:
    if len(scores) == 0:
        raise EmptyInput("no scores")
    return sum(1 for s in scores if s <= x) / len(scores)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    frac_valid_at_or_below: float
    frac_invalid_at_or_below: float


def threshold_sweep(valid_scores: Sequence[float], invalid_scores: Sequence[float], grid: Iterable[float]) -> list[SweepRow]:
    """ECDF of both labeled score populations evaluated on ``grid``."""
    if len(valid_scores) == 0 or len(invalid_scores) == 0:
        raise EmptyInput("both score lists must be non-empty")
    valid_sorted = sorted(valid_scores)
    invalid_sorted = sorted(invalid_scores)
    return [
        SweepRow(
            float(t),
            ecdf_fraction_at_or_below(valid_sorted, t),
            ecdf_fraction_at_or_below(invalid_sorted, t),
        )
        for t in grid
    ]
