"""Builders for synthetic result corpora."""

from __future__ import annotations

from refaudit.model import (
    BiblioRecord,
    InvalidKind,
    ParsedReference,
    RawReference,
    Source,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
)


def result(paper: str, idx: int, status: Status, title: str | None = None, kind: InvalidKind | None = None) -> VerificationResult:
    title = title or f"Title {paper} {idx}"
    raw = RawReference(text=f"A. Author. {title}. Venue, 2020.", paper_id=paper, ref_index=idx)
    ref = ParsedReference(title=title)
    if status is Status.VALID:
        rec = BiblioRecord(title=title, source=Source.LOCAL_INDEX)
        return VerificationResult(ref, Verdict(status), 1.0, rec, Strategy.LOCAL_INDEX, raw=raw)
    if status is Status.INVALID:
        return VerificationResult(ref, Verdict(status, kind), 0.5, None, Strategy.WEB_SEARCH, raw=raw)
    return VerificationResult(ref, Verdict(status), raw=raw)


def neurips_venue_fixture(total_papers: int = 20387):
    """308 papers with 391 invalid citations (59 metadata errors, 332 ghosts); the rest all valid."""
    from refaudit.analytics import GroupKey

    results, keys = [], []
    kinds = [InvalidKind.METADATA_ERROR] * 59 + [InvalidKind.GHOST] * 332
    # 391 invalids over 308 papers: 83 papers carry two, 225 carry one
    per_paper = [2] * 83 + [1] * 225
    k = 0
    for p, n in enumerate(per_paper):
        pid = f"neurips-{p}"
        keys.append(GroupKey("NeurIPS", 2024, pid))
        for i in range(n):
            results.append(result(pid, i, Status.INVALID, kind=kinds[k]))
            k += 1
        results.append(result(pid, n, Status.VALID))
    for p in range(len(per_paper), total_papers):
        pid = f"neurips-{p}"
        keys.append(GroupKey("NeurIPS", 2024, pid))
        results.append(result(pid, 0, Status.VALID))
    return results, keys
