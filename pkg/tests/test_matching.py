from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import AUGMIX_TRUE, AUGMIX_WRONG, record
from oracles import lev_recursive, sim_oracle
from refaudit.matching import (
    EmptyInput,
    MatchConfig,
    SimilarityScore,
    classify,
    ecdf_fraction_at_or_below,
    levenshtein,
    normalize_title,
    score_candidates,
    similarity,
    threshold_sweep,
)
from refaudit.model import Status

short = st.text(alphabet="abcde", max_size=12)
any_text = st.text(max_size=60)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("NeRF: Representing Scenes", "nerf representing scenes"),
        ("  Deep    Learning  ", "deep learning"),
        ("Privacy-Preserving ML", "privacy preserving ml"),
        ("Ｆｕｌｌｗｉｄｔｈ Ｔｅｘｔ", "fullwidth text"),
        ("Café naïve résumé", "cafe naive resume"),
        ("Multi–step­reasoning", "multi step reasoning"),
        ("", ""),
    ],
)
def test_normalize_examples(raw, expected):
    assert normalize_title(raw) == expected


def test_normalize_hyphen_join_mode():
    assert normalize_title("hyphen-ation works", strip_hyphens=False) == "hyphenation works"


@given(any_text)
def test_normalize_idempotent(t):
    once = normalize_title(t)
    assert normalize_title(once) == once
    assert once == once.strip()
    assert "  " not in once


@pytest.mark.parametrize("a, b, d", [("abc", "abc", 0), ("abc", "", 3), ("", "abc", 3), ("kitten", "sitting", 3)])
def test_levenshtein_examples(a, b, d):
    assert levenshtein(a, b) == d
    assert lev_recursive(a, b) == d


@given(short, short)
def test_levenshtein_matches_oracle(a, b):
    assert levenshtein(a, b) == lev_recursive(a, b)


@given(short, short)
def test_levenshtein_symmetric_and_identity(a, b):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, a) == 0
    assert (levenshtein(a, b) == 0) == (a == b)


@given(short, short, short)
def test_levenshtein_triangle(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


@given(short, short, st.integers(0, 12))
def test_levenshtein_bounded(a, b, cap):
    exact = lev_recursive(a, b)
    got = levenshtein(a, b, max_distance=cap)
    assert got == exact if exact <= cap else got == cap + 1


@given(any_text, any_text)
def test_similarity_range_and_symmetry(a, b):
    s = similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == similarity(b, a)
    assert (s == 1.0) == (a == b)


def test_similarity_examples():
    assert similarity("abc", "abc") == 1.0
    assert similarity("abc", "") == 0.0
    assert similarity("", "") == 1.0


def test_augmix_variant_below_threshold():
    a, b = normalize_title(AUGMIX_TRUE), normalize_title(AUGMIX_WRONG)
    s = similarity(a, b)
    assert s < 0.9
    # cross-check on truncated prefixes where the recursive oracle is cheap
    for n in (8, 12, 16):
        assert similarity(a[:n], b[:n]) == pytest.approx(sim_oracle(a[:n], b[:n]))
    assert s == pytest.approx(sim_oracle(a, b))


def _scores(*values):
    return [SimilarityScore(v, record(f"t{i}")) for i, v in enumerate(values)]


def test_classify_examples():
    verdict, best = classify(_scores(0.95))
    assert verdict.status is Status.VALID and best.value == 0.95
    verdict, best = classify(_scores(0.90), MatchConfig(threshold=0.9))
    assert verdict.status is Status.INVALID and best.value == 0.90
    verdict, best = classify([])
    assert verdict.status is Status.INVALID and best is None


def test_classify_tie_goes_to_first():
    scores = _scores(0.5, 0.97, 0.97)
    _, best = classify(scores)
    assert best is scores[1]


@given(st.lists(st.floats(0, 1), max_size=8), st.randoms())
def test_classify_verdict_permutation_invariant(values, rnd):
    scores = _scores(*values)
    shuffled = list(scores)
    rnd.shuffle(shuffled)
    v1, b1 = classify(scores)
    v2, b2 = classify(shuffled)
    assert v1 == v2
    assert (b1 is None) == (b2 is None)
    if b1 is not None:
        assert b1.value == b2.value


def test_score_candidates_normalizes_both_sides():
    [s] = score_candidates("DEEP learning!", [record("Deep Learning")])
    assert s.value == 1.0


def test_match_config_bounds():
    with pytest.raises(ValueError):
        MatchConfig(threshold=0.0)
    with pytest.raises(ValueError):
        MatchConfig(threshold=1.1)
    MatchConfig(threshold=1.0)


def test_ecdf_examples():
    assert ecdf_fraction_at_or_below([0.5, 0.9, 1.0], 0.9) == pytest.approx(2 / 3)
    assert ecdf_fraction_at_or_below([1.0, 1.0], 0.9) == 0.0
    with pytest.raises(EmptyInput):
        ecdf_fraction_at_or_below([], 0.5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_ecdf_monotone_and_complete(scores, x, y):
    lo, hi = sorted((x, y))
    assert ecdf_fraction_at_or_below(scores, lo) <= ecdf_fraction_at_or_below(scores, hi)
    assert ecdf_fraction_at_or_below(scores, max(scores)) == 1.0
    shuffled = list(scores)
    random.Random(0).shuffle(shuffled)
    assert ecdf_fraction_at_or_below(shuffled, x) == ecdf_fraction_at_or_below(scores, x)


def test_threshold_sweep_rows():
    [row] = threshold_sweep([1.0], [0.0], [0.5])
    assert (row.threshold, row.frac_valid_at_or_below, row.frac_invalid_at_or_below) == (0.5, 0.0, 1.0)
    with pytest.raises(EmptyInput):
        threshold_sweep([], [0.1], [0.5])


@settings(max_examples=50)
@given(st.lists(st.text(alphabet="abcdefgh ", min_size=1, max_size=30), min_size=2, max_size=5))
def test_score_candidates_agrees_with_oracle(titles):
    query, *rest = titles
    scores = score_candidates(query, [record(t) for t in rest if t.strip()])
    for s in scores:
        a, b = normalize_title(query), normalize_title(s.candidate.title)
        if max(len(a), len(b)) <= 14:
            assert s.value == pytest.approx(sim_oracle(a, b))
