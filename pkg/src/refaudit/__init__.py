"""Verify bibliography entries against bibliographic sources by title similarity."""

from __future__ import annotations

from refaudit.analytics import (
    CorpusStats,
    GroupKey,
    aggregate,
    audit_sample_size,
    ci95_binomial,
    ci95_cluster,
    corpus_stats,
    extended_jaccard,
    invalid_rate,
    repeated_invalid_groups,
    stability_score,
    temporal_trend,
)
from refaudit.cache import CacheEntry, ResultCache
from refaudit.cascade import CascadePolicy, Dependencies, run_batch, verify_one
from refaudit.index import build_index, open_index, query_by_title
from refaudit.matching import MatchConfig, classify, levenshtein, normalize_title, similarity, threshold_sweep
from refaudit.model import (
    BiblioRecord,
    InvalidKind,
    ParsedReference,
    RawReference,
    ReferenceType,
    Source,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
)
from refaudit.parsing import parse_reference
from refaudit.report import export_csv, read_results

__version__ = "0.1.0"

__all__ = [
    "BiblioRecord",
    "CacheEntry",
    "CascadePolicy",
    "CorpusStats",
    "Dependencies",
    "GroupKey",
    "InvalidKind",
    "MatchConfig",
    "ParsedReference",
    "RawReference",
    "ReferenceType",
    "ResultCache",
    "Source",
    "Status",
    "Strategy",
    "Verdict",
    "VerificationResult",
    "aggregate",
    "audit_sample_size",
    "build_index",
    "ci95_binomial",
    "ci95_cluster",
    "classify",
    "corpus_stats",
    "export_csv",
    "extended_jaccard",
    "invalid_rate",
    "levenshtein",
    "normalize_title",
    "open_index",
    "parse_reference",
    "query_by_title",
    "read_results",
    "repeated_invalid_groups",
    "run_batch",
    "similarity",
    "stability_score",
    "temporal_trend",
    "threshold_sweep",
    "verify_one",
]
