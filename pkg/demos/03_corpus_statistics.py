"""
Corpus statistics
=================

Turns a list of verification results into corpus-level numbers: the
invalid rate with its confidence margin, per-venue tables, a year-over-year
trend and titles that several papers cite but no source confirms.
"""

from __future__ import annotations

import random

from refaudit import (
    BiblioRecord,
    GroupKey,
    InvalidKind,
    ParsedReference,
    RawReference,
    Source,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
    aggregate,
    corpus_stats,
    repeated_invalid_groups,
    temporal_trend,
)
from refaudit.analytics import ci95_cluster, per_year


def make(paper: str, idx: int, status: Status, title: str, kind: InvalidKind | None = None) -> VerificationResult:
    return VerificationResult(
        reference=ParsedReference(title=title),
        verdict=Verdict(status, kind),
        best_similarity=1.0 if status is Status.VALID else 0.42,
        matched=BiblioRecord(title, Source.LOCAL_INDEX) if status is Status.VALID else None,
        diagnosing_strategy=Strategy.LOCAL_INDEX,
        raw=RawReference(title, paper, idx),
    )


# %%
# A synthetic corpus: two venues over three years, 40 references per paper,
# with a rising share of unconfirmed citations.
rnd = random.Random(0)
results, keys = [], []
for venue in ("ConfA", "ConfB"):
    for year, p_bad in ((2022, 0.002), (2023, 0.003), (2024, 0.008)):
        for n in range(60):
            pid = f"{venue}-{year}-{n}"
            keys.append(GroupKey(venue, year, pid))
            for i in range(40):
                if rnd.random() < p_bad:
                    title = rnd.choice(["A survey of everything", f"Unfindable work {pid}-{i}"])
                    results.append(make(pid, i, Status.INVALID, title, InvalidKind.GHOST))
                else:
                    results.append(make(pid, i, Status.VALID, f"Real paper {pid}-{i}"))

stats = corpus_stats(results)
print(f"invalid rate {100 * stats.rate_invalid:.3f}% +/- {stats.ci95_margin:.3f} pp over {stats.valid + stats.invalid} judged")

# %%
# Clustered margin: the spread of per-paper rates rather than a binomial
# assumption over all references.
per_paper = {}
for r in results:
    bad, total = per_paper.get(r.raw.paper_id, (0, 0))
    per_paper[r.raw.paper_id] = (bad + (r.status is Status.INVALID), total + 1)
rates = [bad / total for bad, total in per_paper.values()]
print(f"per-paper clustered margin {100 * ci95_cluster(rates):.3f} pp")

# %%
# Venue table and trend of the share of papers with at least one invalid citation.
for row in aggregate(results, keys):
    print(f"{row.venue}: {row.invalid_count} invalid in {row.papers_with_invalid}/{row.papers} papers ({100 * row.rate:.1f}%)")
trend = temporal_trend(per_year(results, keys))
print("yearly:", [(y, f"{100 * r:.1f}%") for y, r in trend.rates], f"last vs prior mean {100 * trend.delta:+.1f}%")

# %%
# Titles cited by more than one paper and confirmed by no source.
for group in repeated_invalid_groups(results, {k.paper_id: k.venue for k in keys})[:3]:
    print(group)
