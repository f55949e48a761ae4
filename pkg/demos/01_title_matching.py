"""
Title matching
==============

How a cited title is compared against a bibliographic record: both sides are
normalized, then scored with a length-normalized edit distance, and a
reference counts as Valid only when the best score is strictly above the
threshold.
"""

from __future__ import annotations

from refaudit import BiblioRecord, MatchConfig, Source, classify, levenshtein, normalize_title, similarity
from refaudit.matching import score_candidates

# %%
# Normalization folds case, accents, punctuation and hyphens so that
# typographic noise does not count as an edit.
raw = "Attention Is All You Need: a Re‑examination (Extended Version)"
print(normalize_title(raw))
print(normalize_title("Naïve Bayes, revisited"))

# %%
# Similarity is one minus the edit distance over the longer string's length.
a = normalize_title("Deep Residual Learning for Image Recognition")
b = normalize_title("Deep Residual Learning for Image Recognitoin")
print(f"distance={levenshtein(a, b)}  similarity={similarity(a, b):.4f}")

# %%
# Classification takes the best-scoring candidate.  A close misspelling
# passes; a different paper with a related title does not.
records = [
    BiblioRecord("Deep Residual Learning for Image Recognition", Source.LOCAL_INDEX, year=2016),
    BiblioRecord("Identity Mappings in Deep Residual Networks", Source.LOCAL_INDEX, year=2016),
]
for cited in ("Deep residual learning for image recognitoin", "Deep Residual Networks for Image Recognition"):
    verdict, best = classify(score_candidates(cited, records))
    print(f"{verdict.status.value:8s} {best.value:.4f}  {cited}")

# %%
# The threshold is configurable; scores equal to it are not enough.
strict = MatchConfig(threshold=0.96)
verdict, best = classify(score_candidates("Deep residual learning for image recognitoin", records), strict)
print(f"at 0.96: {verdict.status.value} ({best.value:.4f})")
