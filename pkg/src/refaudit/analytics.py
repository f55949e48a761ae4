"""Corpus-level statistics over verification results."""

from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from itertools import combinations

from refaudit.matching import normalize_title
from refaudit.model import InvalidKind, Status, VerificationResult

# the two overlap metrics below have no published definition; outputs carry this tag
ARTIFACT_DEFINED = "artifact-defined metric"


class EmptyDenominator(ValueError):
    pass


class TooFewClusters(ValueError):
    pass


class TooFewRuns(ValueError):
    pass


class InsufficientYears(ValueError):
    pass


class MissingJoinKey(KeyError):
    pass


@dataclass(frozen=True)
class CorpusStats:
    total_refs: int
    parsed_refs: int
    valid: int
    invalid: int
    non_academic: int
    parse_failures: int
    unverified: int
    rate_invalid: float | None
    ci95_margin: float | None

    def __post_init__(self) -> None:
        parts = self.valid + self.invalid + self.non_academic + self.parse_failures + self.unverified
        if parts != self.total_refs:
            raise ValueError(f"status counts sum to {parts}, expected {self.total_refs}")


def corpus_stats(results: Iterable[VerificationResult]) -> CorpusStats:
    counts = Counter(r.status for r in results)
    total = sum(counts.values())
    valid, invalid = counts[Status.VALID], counts[Status.INVALID]
    judged = valid + invalid
    rate = invalid / judged if judged else None
    return CorpusStats(
        total_refs=total,
        parsed_refs=total - counts[Status.PARSE_FAILURE],
        valid=valid,
        invalid=invalid,
        non_academic=counts[Status.NON_ACADEMIC],
        parse_failures=counts[Status.PARSE_FAILURE],
        unverified=counts[Status.UNVERIFIED],
        rate_invalid=rate,
        ci95_margin=100.0 * ci95_binomial(rate, judged) if rate is not None else None,
    )


def invalid_rate(results: Iterable[VerificationResult]) -> float:
    """Invalid / (Valid + Invalid); other statuses are outside the denominator."""
    counts = Counter(r.status for r in results)
    return rate_from_counts(counts[Status.VALID], counts[Status.INVALID])


def rate_from_counts(valid: int, invalid: int) -> float:
    if valid + invalid == 0:
        raise EmptyDenominator("no Valid or Invalid results")
    return invalid / (valid + invalid)


def ci95_binomial(p: float, n: int) -> float:
    """Normal-approximation 95% margin, in the units of ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.96 * math.sqrt(p * (1.0 - p) / n)


def ci95_cluster(cluster_rates: Sequence[float]) -> float:
    """95% margin of the mean of per-cluster rates (e.g. per domain or per paper)."""
    if len(cluster_rates) < 2:
        raise TooFewClusters("need at least two clusters")
    return 1.96 * statistics.stdev(cluster_rates) / math.sqrt(len(cluster_rates))


@dataclass(frozen=True)
class GroupKey:
    venue: str
    year: int
    paper_id: str | None = None


@dataclass(frozen=True)
class VenueRow:
    venue: str
    error_count: int
    ghost_count: int
    invalid_count: int
    papers_with_invalid: int
    papers: int
    rate: float


def _key_map(keys: Iterable[GroupKey]) -> dict[str, GroupKey]:
    mapping = {}
    for key in keys:
        if key.paper_id is None:
            raise ValueError("group keys used for joining need a paper_id")
        mapping[key.paper_id] = key
    return mapping


def _paper_of(result: VerificationResult) -> str:
    if result.raw is None:
        raise MissingJoinKey("result has no source reference to join on")
    return result.raw.paper_id


def aggregate(results: Iterable[VerificationResult], keys: Iterable[GroupKey]) -> list[VenueRow]:
    """Invalid counts per venue.

    ``keys`` lists every paper of the corpus (including papers whose results
    are all Valid), so ``papers`` is the venue's paper count and ``rate`` the
    share of its papers with at least one Invalid result.
    """
    by_paper = _key_map(keys)
    papers = defaultdict(set)
    for pid, key in by_paper.items():
        papers[key.venue].add(pid)
    errors, ghosts, invalid = Counter(), Counter(), Counter()
    flagged = defaultdict(set)
    for r in results:
        pid = _paper_of(r)
        if pid not in by_paper:
            raise MissingJoinKey(f"paper {pid!r} has no group key")
        if r.status is not Status.INVALID:
            continue
        venue = by_paper[pid].venue
        invalid[venue] += 1
        flagged[venue].add(pid)
        if r.verdict.invalid_kind is InvalidKind.METADATA_ERROR:
            errors[venue] += 1
        elif r.verdict.invalid_kind is InvalidKind.GHOST:
            ghosts[venue] += 1
    rows = [
        VenueRow(
            venue=venue,
            error_count=errors[venue],
            ghost_count=ghosts[venue],
            invalid_count=invalid[venue],
            papers_with_invalid=len(flagged[venue]),
            papers=len(pids),
            rate=len(flagged[venue]) / len(pids),
        )
        for venue, pids in papers.items()
    ]
    return sorted(rows, key=lambda row: (-row.invalid_count, row.venue))


def total_row(rows: Sequence[VenueRow]) -> VenueRow:
    papers = sum(r.papers for r in rows)
    flagged = sum(r.papers_with_invalid for r in rows)
    return VenueRow(
        venue="Total",
        error_count=sum(r.error_count for r in rows),
        ghost_count=sum(r.ghost_count for r in rows),
        invalid_count=sum(r.invalid_count for r in rows),
        papers_with_invalid=flagged,
        papers=papers,
        rate=flagged / papers if papers else 0.0,
    )


@dataclass(frozen=True)
class YearRow:
    year: int
    papers: int
    papers_with_invalid: int


def per_year(results: Iterable[VerificationResult], keys: Iterable[GroupKey]) -> list[YearRow]:
    by_paper = _key_map(keys)
    papers = defaultdict(set)
    for pid, key in by_paper.items():
        papers[key.year].add(pid)
    flagged = defaultdict(set)
    for r in results:
        pid = _paper_of(r)
        if pid not in by_paper:
            raise MissingJoinKey(f"paper {pid!r} has no group key")
        if r.status is Status.INVALID:
            flagged[by_paper[pid].year].add(pid)
    return [YearRow(year, len(pids), len(flagged[year])) for year, pids in sorted(papers.items())]


@dataclass(frozen=True)
class Trend:
    rates: list[tuple[int, float]]
    prior_mean: float
    last_rate: float
    delta: float


def temporal_trend(per_year_rows: Iterable[YearRow | tuple[int, int, int]]) -> Trend:
    """Yearly rates plus the relative change of the last year over the mean of the prior ones."""
    rows = sorted((YearRow(*r) if isinstance(r, tuple) else r for r in per_year_rows), key=lambda r: r.year)
    if len(rows) < 2:
        raise InsufficientYears("need at least two years")
    rates = [(r.year, r.papers_with_invalid / r.papers if r.papers else 0.0) for r in rows]
    return trend_from_rates(rates)


def trend_from_rates(rates: Sequence[tuple[int, float]]) -> Trend:
    rates = sorted(rates)
    if len(rates) < 2:
        raise InsufficientYears("need at least two years")
    prior = statistics.fmean(rate for _, rate in rates[:-1])
    last = rates[-1][1]
    if prior == 0:
        raise EmptyDenominator("prior years have a zero rate")
    return Trend(rates=list(rates), prior_mean=prior, last_rate=last, delta=(last - prior) / prior)


@dataclass(frozen=True)
class RepeatedGroup:
    title: str
    paper_count: int
    venues: tuple[str, ...]


def repeated_invalid_groups(
    results: Iterable[VerificationResult], venues: Mapping[str, str] | None = None
) -> list[RepeatedGroup]:
    """Invalid titles cited by two or more distinct papers, most widespread first.

    ``venues`` maps paper_id to venue for the venue column.
    """
    papers: dict[str, set[str]] = defaultdict(set)
    for r in results:
        if r.status is not Status.INVALID or not r.reference.title:
            continue
        papers[normalize_title(r.reference.title)].add(_paper_of(r))
    groups = []
    for title, pids in papers.items():
        if len(pids) < 2:
            continue
        names = sorted({venues[p] for p in pids if venues and p in venues})
        groups.append(RepeatedGroup(title, len(pids), tuple(names)))
    return sorted(groups, key=lambda g: (-g.paper_count, g.title))


def invalid_per_paper(results: Iterable[VerificationResult]) -> Counter[int]:
    """Histogram: number of invalid references -> number of papers with that many (papers with none excluded)."""
    per_paper = Counter(_paper_of(r) for r in results if r.status is Status.INVALID)
    return Counter(per_paper.values())


def extended_jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """Multiset overlap: sum of min counts over sum of max counts (1.0 for two empty bags)."""
    ca, cb = Counter(a), Counter(b)
    keys = ca.keys() | cb.keys()
    top = sum(max(ca[k], cb[k]) for k in keys)
    if top == 0:
        return 1.0
    return sum(min(ca[k], cb[k]) for k in keys) / top


def jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def stability_score(runs: Sequence[Iterable[str]]) -> tuple[float, float]:
    """Mean and sample std of pairwise Jaccard similarity across repeated runs."""
    sets = [set(r) for r in runs]
    if len(sets) < 2:
        raise TooFewRuns("need at least two runs")
    scores = [jaccard(x, y) for x, y in combinations(sets, 2)]
    std = statistics.stdev(scores) if len(scores) > 1 else 0.0
    return statistics.fmean(scores), std


PAPER_PARITY_FLOOR = 400


def audit_sample_size(confidence: float, margin: float, population: int | None = None, *, floor: int = 0) -> int:
    """Cochran's sample size for a proportion (worst case p = 0.5).

    A finite ``population`` applies the finite-population correction.  The
    result is raised to ``floor`` but never beyond the population.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must be in (0, 1)")
    z = statistics.NormalDist().inv_cdf(0.5 + confidence / 2.0)
    n0 = z * z * 0.25 / (margin * margin)
    n = n0 if population is None else n0 / (1.0 + (n0 - 1.0) / population)
    size = max(math.ceil(n - 1e-9), floor)
    if population is not None:
        size = min(size, population)
    return size
