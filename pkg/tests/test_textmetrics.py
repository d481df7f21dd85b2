"""Tests for normalization, edit distance, RED, CER, and the error breakdown."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import minimal_breakdowns, naive_edit_distance, nt
from subspot.textmetrics import (
    DegenerateInputError,
    EditBreakdown,
    NormalizationConfig,
    cer,
    edit_distance,
    error_breakdown,
    normalize,
    red,
)


def test_normalize_removes_whitespace():
    assert normalize("你好 世界").chars == "你好世界"
    assert normalize("a\tb\nc　d").chars == "abcd"


def test_normalize_empty():
    assert normalize("").chars == ""


def test_normalize_strips_configured_punctuation():
    config = NormalizationConfig(strip_chars=",!")
    assert normalize("Hello, world!", config).chars == "Helloworld"


def test_normalize_default_strips_cjk_punctuation():
    assert normalize("你好，世界！……「引用」").chars == "你好世界引用"


def test_normalize_composes_unicode():
    # e + combining acute == precomposed é after normalization
    assert normalize("é").chars == "é"
    assert normalize("é") == normalize("é")


def test_normalize_keeps_original():
    result = normalize(" a b ")
    assert result.original == " a b "
    assert result.chars == "ab"


def test_normalize_fixed_point_with_separated_combining_mark():
    # The space blocks composition until stripping exposes it; one more
    # pass must leave the result stable.
    result = normalize("e ́")
    assert result.chars == normalize(result.chars).chars


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40))
def test_normalize_idempotent(raw):
    once = normalize(raw)
    assert normalize(once.chars).chars == once.chars


def test_edit_distance_identity():
    assert edit_distance(nt("abc"), nt("abc")) == 0


def test_edit_distance_known_value():
    # Frozen from the recursive brute-force oracle.
    assert naive_edit_distance("kitten", "sitting") == 3
    assert edit_distance(nt("kitten"), nt("sitting")) == 3


def test_edit_distance_against_empty():
    assert edit_distance(nt(""), nt("abcd")) == 4
    assert edit_distance(nt("abcd"), nt("")) == 4


def test_edit_distance_matches_brute_force():
    rng = random.Random(20240817)
    alphabet = "abcde"
    for _ in range(400):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 7)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 7)))
        assert edit_distance(nt(a), nt(b)) == naive_edit_distance(a, b)


def test_edit_distance_metric_axioms():
    rng = random.Random(99)
    alphabet = "abc"
    samples = [
        "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 6))) for _ in range(60)
    ]
    for a in samples[:20]:
        for b in samples[:20]:
            d = edit_distance(nt(a), nt(b))
            assert d >= 0
            assert (d == 0) == (a == b)
            assert d == edit_distance(nt(b), nt(a))
    for a, b, c in zip(samples, samples[1:], samples[2:]):
        ab = edit_distance(nt(a), nt(b))
        bc = edit_distance(nt(b), nt(c))
        ac = edit_distance(nt(a), nt(c))
        assert ac <= ab + bc


def test_red_identity_and_disjoint():
    assert red(nt("abc"), nt("abc")) == 0.0
    assert red(nt("abc"), nt("xyz")) == 1.0


def test_red_known_value():
    assert red(nt("kitten"), nt("sitting")) == pytest.approx(3 / 7)


def test_red_rejects_two_empty_texts():
    with pytest.raises(DegenerateInputError):
        red(nt(""), nt(""))


def test_red_one_empty_side_is_total_error():
    assert red(nt(""), nt("abc")) == 1.0


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="abcxyz", max_size=10), st.text(alphabet="abcxyz", max_size=10))
def test_red_symmetric_and_bounded(a, b):
    if not a and not b:
        return
    value = red(nt(a), nt(b))
    assert 0.0 <= value <= 1.0
    assert value == red(nt(b), nt(a))


def test_cer_identity():
    assert cer(nt("abcd"), nt("abcd")) == 0.0


def test_cer_empty_hypothesis():
    assert cer(nt("abcd"), nt("")) == 1.0


def test_cer_insertions_only():
    assert cer(nt("abcd"), nt("abcdef")) == 0.5


def test_cer_can_exceed_one():
    assert cer(nt("ab"), nt("zzzzzz")) > 1.0


def test_cer_rejects_empty_reference():
    with pytest.raises(DegenerateInputError):
        cer(nt(""), nt("abc"))


def test_breakdown_identity():
    assert error_breakdown(nt("abc"), nt("abc")) == EditBreakdown(0, 0, 0)


def test_breakdown_known_alignment():
    # All minimal alignments of kitten/sitting, enumerated independently;
    # the end-anchored substitution-first backtrace must pick (2, 1, 0).
    mixes = minimal_breakdowns("kitten", "sitting")
    assert (2, 1, 0) in mixes
    result = error_breakdown(nt("kitten"), nt("sitting"))
    assert (result.substitutions, result.insertions, result.deletions) == (2, 1, 0)


def test_breakdown_pure_deletions():
    result = error_breakdown(nt("abcd"), nt(""))
    assert (result.substitutions, result.insertions, result.deletions) == (0, 0, 4)


def test_breakdown_prefers_substitution_over_indel_pair():
    # "ab" -> "ba" can be two substitutions or a delete+insert pair.
    result = error_breakdown(nt("ab"), nt("ba"))
    assert (result.substitutions, result.insertions, result.deletions) == (2, 0, 0)


def test_breakdown_is_a_minimal_alignment():
    rng = random.Random(7)
    for _ in range(150):
        a = "".join(rng.choice("abcd") for _ in range(rng.randint(0, 6)))
        b = "".join(rng.choice("abcd") for _ in range(rng.randint(0, 6)))
        result = error_breakdown(nt(a), nt(b))
        triple = (result.substitutions, result.insertions, result.deletions)
        assert triple in minimal_breakdowns(a, b)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="abcxy", max_size=12), st.text(alphabet="abcxy", max_size=12))
def test_breakdown_sums_to_distance(a, b):
    result = error_breakdown(nt(a), nt(b))
    assert result.total == edit_distance(nt(a), nt(b))


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abcxy", min_size=1, max_size=12), st.text(alphabet="abcxy", max_size=12))
def test_cer_equals_breakdown_over_reference_length(ref, hyp):
    result = error_breakdown(nt(ref), nt(hyp))
    assert cer(nt(ref), nt(hyp)) == result.total / len(ref)
