"""The verification cascade: Cache, LocalIndex, AcademicDB, WebSearch, LLMReparse.

A stage ends the cascade only when its candidates classify Valid.  When
every retrieval stage misses, the LLM reparser runs once and the retrieval
stages are re-entered with the corrected metadata.
"""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import ClassVar, Protocol

from refaudit.cache import CacheEntry
from refaudit.matching import MatchConfig, SimilarityScore, classify, score_candidates
from refaudit.model import (
    BiblioRecord,
    ParsedReference,
    RawReference,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
    make_result,
)
from refaudit.parsing import ParseFailure, detect_non_academic, parse_reference
from refaudit.remote import ConcurrencyLimiter, ProviderError, RetryPolicy, SearchProvider, remote_search
from refaudit.services import ChatClient, ReparseRequest, SchemaViolation, llm_reparse

logger = logging.getLogger(__name__)

RETRIEVAL_STAGES = (Strategy.LOCAL_INDEX, Strategy.ACADEMIC_DB, Strategy.WEB_SEARCH)


class AllSourcesUnavailable(RuntimeError):
    pass


class DependencyMissing(RuntimeError):
    pass


class LocalSource(Protocol):
    def lookup(self, title: str, k: int = 10) -> list[BiblioRecord]: ...


class CacheStore(Protocol):
    def get(self, key: str) -> CacheEntry | None: ...

    def put(self, entry: CacheEntry) -> None: ...


@dataclass
class Dependencies:
    cache: CacheStore | None = None
    index: LocalSource | None = None
    providers: Sequence[SearchProvider] = ()
    llm: ChatClient | None = None
    limiter: ConcurrencyLimiter | None = None

    def providers_of(self, stage: Strategy) -> list[SearchProvider]:
        kind = "academic" if stage is Strategy.ACADEMIC_DB else "websearch"
        return [p for p in self.providers if p.kind == kind]

    def available(self) -> frozenset[Strategy]:
        stages = set()
        if self.cache is not None:
            stages.add(Strategy.CACHE)
        if self.index is not None:
            stages.add(Strategy.LOCAL_INDEX)
        if self.providers_of(Strategy.ACADEMIC_DB):
            stages.add(Strategy.ACADEMIC_DB)
        if self.providers_of(Strategy.WEB_SEARCH):
            stages.add(Strategy.WEB_SEARCH)
        if self.llm is not None:
            stages.add(Strategy.LLM_REPARSE)
        return frozenset(stages)


@dataclass(frozen=True)
class CascadePolicy:
    """Which stages run, how many remote calls may be in flight, and retries.

    Stages run in the fixed :attr:`ORDER`; they can be disabled but not
    reordered.  ``enabled=None`` means every stage the dependencies provide.
    """

    ORDER: ClassVar[tuple[Strategy, ...]] = (
        Strategy.CACHE,
        Strategy.LOCAL_INDEX,
        Strategy.ACADEMIC_DB,
        Strategy.WEB_SEARCH,
        Strategy.LLM_REPARSE,
    )

    enabled: frozenset[Strategy] | None = None
    concurrency_limit: int = 10
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    candidates_per_source: int = 10

    def __post_init__(self) -> None:
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.enabled is not None:
            object.__setattr__(self, "enabled", frozenset(Strategy(s) for s in self.enabled))
            if Strategy.NONE in self.enabled:
                raise ValueError("Strategy.NONE is not a stage")

    def stages(self, deps: Dependencies) -> tuple[Strategy, ...]:
        available = deps.available()
        if self.enabled is None:
            return tuple(s for s in self.ORDER if s in available)
        missing = sorted(s.value for s in self.enabled - available)
        if missing:
            raise DependencyMissing(f"enabled stages without a dependency: {', '.join(missing)}")
        return tuple(s for s in self.ORDER if s in self.enabled)


@dataclass
class _Trace:
    best: SimilarityScore | None = None
    best_stage: Strategy = Strategy.NONE
    local_candidates: int = 0
    # search-provider lookups only; the reparser is not a source
    remote_calls: int = 0
    remote_failures: int = 0
    errors: list[str] = field(default_factory=list)

    def offer(self, score: SimilarityScore | None, stage: Strategy) -> None:
        if score is not None and (self.best is None or score.value > self.best.value):
            self.best = score
            self.best_stage = stage


async def _retrieve(
    title: str,
    stages: Sequence[Strategy],
    deps: Dependencies,
    policy: CascadePolicy,
    cfg: MatchConfig,
    trace: _Trace,
) -> tuple[Strategy, SimilarityScore] | None:
    """Run the retrieval stages for ``title``; return the first Valid hit."""
    k = policy.candidates_per_source
    for stage in stages:
        if stage is Strategy.LOCAL_INDEX:
            assert deps.index is not None
            records = deps.index.lookup(title, k)
            trace.local_candidates += len(records)
            hit = _judge(title, records, stage, cfg, trace)
            if hit:
                return hit
        elif stage in (Strategy.ACADEMIC_DB, Strategy.WEB_SEARCH):
            for provider in deps.providers_of(stage):
                trace.remote_calls += 1
                try:
                    records = await remote_search(provider, title, k, retry=policy.retry, limiter=deps.limiter)
                except ProviderError as exc:
                    trace.remote_failures += 1
                    trace.errors.append(f"{provider.name}: {exc.__class__.__name__}: {exc}")
                    continue
                hit = _judge(title, records, stage, cfg, trace)
                if hit:
                    return hit
    return None


def _judge(
    title: str, records: Iterable[BiblioRecord], stage: Strategy, cfg: MatchConfig, trace: _Trace
) -> tuple[Strategy, SimilarityScore] | None:
    verdict, best = classify(score_candidates(title, records, cfg), cfg)
    trace.offer(best, stage)
    if verdict.status is Status.VALID:
        assert best is not None
        return stage, best
    return None


async def verify_one(
    ref: ParsedReference,
    raw: RawReference | None,
    deps: Dependencies,
    policy: CascadePolicy | None = None,
    cfg: MatchConfig | None = None,
) -> VerificationResult:
    """Verify a single reference through the cascade.

    Raises :class:`AllSourcesUnavailable` when every remote lookup errored
    and the local stages found nothing, since that outcome says nothing
    about the reference itself.
    """
    policy = policy or CascadePolicy()
    cfg = cfg or MatchConfig()
    stages = policy.stages(deps)

    if detect_non_academic(ref, raw):
        return make_result(ref, Verdict(Status.NON_ACADEMIC), None, None, Strategy.NONE, raw=raw, notes="URL-dominant reference")

    trace = _Trace()
    key = cfg.normalize(ref.title) if ref.title else None
    retrieval = [s for s in stages if s in RETRIEVAL_STAGES]

    if key and Strategy.CACHE in stages:
        assert deps.cache is not None
        entry = deps.cache.get(key)
        if entry is not None:
            cached = _from_cache(ref, raw, entry, cfg)
            if cached is not None:
                return cached

    if ref.title:
        hit = await _retrieve(ref.title, retrieval, deps, policy, cfg, trace)
        if hit:
            stage, best = hit
            return _valid(ref, raw, best, stage, key, deps, stages, cfg, f"valid via {stage.value}")

    reparsed: ParsedReference | None = None
    if Strategy.LLM_REPARSE in stages and raw is not None:
        assert deps.llm is not None
        try:
            reparsed = await llm_reparse(ReparseRequest(raw), deps.llm, retry=policy.retry, limiter=deps.limiter)
        except (SchemaViolation, ProviderError) as exc:
            trace.errors.append(f"reparse: {exc.__class__.__name__}: {exc}")
        else:
            assert reparsed.title is not None
            if cfg.normalize(reparsed.title) != key:
                hit = await _retrieve(reparsed.title, retrieval, deps, policy, cfg, trace)
                if hit:
                    _, best = hit
                    note = f"reparsed title {reparsed.title!r}; valid via {hit[0].value}"
                    return _valid(reparsed, raw, best, Strategy.LLM_REPARSE, key, deps, stages, cfg, note)

    if not ref.title and reparsed is None:
        notes = "; ".join(["no title could be parsed", *trace.errors])
        return make_result(ref, Verdict(Status.PARSE_FAILURE), None, None, Strategy.NONE, raw=raw, notes=notes)

    if trace.remote_calls and trace.remote_failures == trace.remote_calls and trace.local_candidates == 0:
        raise AllSourcesUnavailable("; ".join(trace.errors))

    final_ref = ref if ref.title else reparsed
    assert final_ref is not None
    notes = []
    if trace.best is not None:
        notes.append(f"closest {trace.best.candidate.title!r} via {trace.best_stage.value}")
    else:
        notes.append("no candidates")
    notes.extend(trace.errors)
    if key and Strategy.CACHE in stages and not trace.errors:
        assert deps.cache is not None
        deps.cache.put(
            CacheEntry(key=key, result_status=Status.INVALID, best_similarity=trace.best.value if trace.best else None)
        )
    return make_result(
        final_ref,
        Verdict(Status.INVALID),
        trace.best.value if trace.best else None,
        None,
        trace.best_stage,
        raw=raw,
        notes="; ".join(notes),
    )


def _valid(
    ref: ParsedReference,
    raw: RawReference | None,
    best: SimilarityScore,
    strategy: Strategy,
    key: str | None,
    deps: Dependencies,
    stages: Sequence[Strategy],
    cfg: MatchConfig,
    notes: str,
) -> VerificationResult:
    if key and Strategy.CACHE in stages:
        assert deps.cache is not None
        deps.cache.put(CacheEntry(key=key, result_status=Status.VALID, matched=best.candidate, best_similarity=best.value))
    return make_result(ref, Verdict(Status.VALID), best.value, best.candidate, strategy, threshold=cfg.threshold, raw=raw, notes=notes)


def _from_cache(
    ref: ParsedReference, raw: RawReference | None, entry: CacheEntry, cfg: MatchConfig
) -> VerificationResult | None:
    if entry.result_status is Status.VALID:
        # a stricter threshold than the one in force when cached re-opens the question
        if entry.best_similarity is None or not entry.best_similarity > cfg.threshold:
            return None
        return make_result(
            ref, Verdict(Status.VALID), entry.best_similarity, entry.matched, Strategy.CACHE,
            threshold=cfg.threshold, raw=raw, notes="cached Valid",
        )
    if entry.best_similarity is not None and entry.best_similarity > cfg.threshold:
        return None
    return make_result(
        ref, Verdict(Status.INVALID), entry.best_similarity, None, Strategy.CACHE, raw=raw, notes="cached Invalid"
    )


def prepare(raw: RawReference) -> ParsedReference:
    """Heuristic parse; an unparseable string yields an empty reference
    that the cascade will route to the reparser or report as ParseFailure."""
    try:
        return parse_reference(raw)
    except ParseFailure:
        return ParsedReference()


def unverified_result(ref: ParsedReference, raw: RawReference | None, reason: str) -> VerificationResult:
    return VerificationResult(reference=ref, verdict=Verdict(Status.UNVERIFIED), raw=raw, notes=reason)


async def run_batch(
    items: Sequence[tuple[RawReference, ParsedReference]],
    deps: Dependencies,
    policy: CascadePolicy | None = None,
    cfg: MatchConfig | None = None,
    *,
    skip: Iterable[tuple[str, int]] = (),
    sink: Callable[[VerificationResult], None] | None = None,
    progress: Callable[[int, int], None] | None = None,
    workers: int | None = None,
) -> list[VerificationResult]:
    """Verify ``items`` concurrently; results come back in input order.

    Remote operations share one :class:`ConcurrencyLimiter` of
    ``policy.concurrency_limit``.  ``sink`` receives each result in input
    order as soon as every earlier one is done, so an interrupted run loses
    only the unfinished window.  Items whose ``(paper_id, ref_index)`` is in
    ``skip`` are not processed.  A failure on one reference is recorded in
    its notes and never stops the batch.
    """
    policy = policy or CascadePolicy()
    cfg = cfg or MatchConfig()
    if deps.limiter is None:
        deps.limiter = ConcurrencyLimiter(policy.concurrency_limit)
    policy.stages(deps)  # fail fast on a dependency mismatch

    skipped = set(skip)
    todo = [(raw, ref) for raw, ref in items if raw.key not in skipped]
    total = len(todo)
    results: list[VerificationResult | None] = [None] * total
    flushed = 0
    queue: asyncio.Queue[int] = asyncio.Queue()
    for i in range(total):
        queue.put_nowait(i)

    def flush() -> None:
        nonlocal flushed
        while flushed < total and results[flushed] is not None:
            if sink is not None:
                sink(results[flushed])
            flushed += 1
            if progress is not None:
                progress(flushed, total)

    async def one(i: int) -> VerificationResult:
        raw, ref = todo[i]
        try:
            return await verify_one(ref, raw, deps, policy, cfg)
        except AllSourcesUnavailable as exc:
            return unverified_result(ref, raw, f"AllSourcesUnavailable: {exc}")
        except Exception as exc:  # noqa: BLE001 - recorded per reference
            logger.warning("reference %s/%d failed", raw.paper_id, raw.ref_index, exc_info=True)
            return unverified_result(ref, raw, f"{exc.__class__.__name__}: {exc}")

    async def worker() -> None:
        while True:
            try:
                i = queue.get_nowait()
            except asyncio.QueueEmpty:
                return
            results[i] = await one(i)
            flush()

    n_workers = workers or max(2 * policy.concurrency_limit, 16)
    await asyncio.gather(*(worker() for _ in range(min(n_workers, total))))
    flush()
    return [r for r in results if r is not None]
