import math
import random

import pytest

from qgcontrol.errors import QgcError
from qgcontrol.metrics import (
    DEFAULT_PROFILE,
    NormalizationProfile,
    Smoothing,
    bleu4,
    clipped_ngram_count,
    exact_match,
    lcs_length,
    normalize,
    rouge_l_f1,
)

from oracles import clipped_count_brute_force, lcs_brute_force


class TestNormalize:
    def test_default_profile(self):
        assert normalize("The mat.") == ["the", "mat"]

    def test_empty(self):
        assert normalize("") == []
        assert normalize("   ...  ") == []

    def test_remove_articles(self):
        profile = NormalizationProfile(remove_articles=True)
        assert normalize("A   king!", profile) == ["king"]

    def test_articles_kept_by_default(self):
        assert normalize("a king") == ["a", "king"]

    def test_unicode_punctuation(self):
        assert normalize("don’t stop—go") == ["don", "t", "stop", "go"]

    def test_idempotent(self):
        rng = random.Random(0)
        words = ["The", "cat!", "SAT,", "on", "a", "mat.", "why?", "don't"]
        for _ in range(50):
            text = " ".join(rng.choices(words, k=rng.randint(0, 8)))
            for profile in (DEFAULT_PROFILE, NormalizationProfile(remove_articles=True)):
                once = normalize(text, profile)
                assert normalize(" ".join(once), profile) == once


class TestLcsLength:
    def test_identical(self):
        assert lcs_length(["x", "y"], ["x", "y"]) == 2

    def test_empty(self):
        assert lcs_length([], ["a", "b"]) == 0
        assert lcs_length(["a"], []) == 0

    def test_swap_prefix(self):
        # frozen from the brute-force oracle on this 4-token instance
        assert lcs_brute_force(list("abcd"), list("bacd")) == 3
        assert lcs_length(list("abcd"), list("bacd")) == 3

    def test_symmetry(self):
        rng = random.Random(1)
        for _ in range(200):
            a = rng.choices("abc", k=rng.randint(0, 8))
            b = rng.choices("abc", k=rng.randint(0, 8))
            assert lcs_length(a, b) == lcs_length(b, a)

    def test_matches_brute_force_oracle(self):
        rng = random.Random(42)
        for _ in range(5000):
            a = rng.choices("abcd", k=rng.randint(0, 8))
            b = rng.choices("abcd", k=rng.randint(0, 8))
            assert lcs_length(a, b) == lcs_brute_force(a, b), (a, b)


class TestRougeLF1:
    def test_identity(self):
        assert rouge_l_f1("the cat sat", "the cat sat").value == 1.0

    def test_golden_vector(self):
        # L=5 via DP cross-checked against the subsequence oracle; R=5/6, P=5/5
        hyp, ref = "the cat on the mat", "the cat sat on the mat"
        assert lcs_brute_force(normalize(hyp), normalize(ref)) == 5
        assert rouge_l_f1(hyp, ref).value == pytest.approx(10 / 11, abs=1e-9)

    def test_disjoint(self):
        assert rouge_l_f1("red fish", "blue bird").value == 0.0

    def test_empty(self):
        assert rouge_l_f1("", "the mat").value == 0.0
        assert rouge_l_f1("the mat", "").value == 0.0

    def test_symmetric_value(self):
        rng = random.Random(2)
        words = ["cat", "sat", "mat", "dog", "ran"]
        for _ in range(100):
            a = " ".join(rng.choices(words, k=rng.randint(1, 6)))
            b = " ".join(rng.choices(words, k=rng.randint(1, 6)))
            assert rouge_l_f1(a, b).value == pytest.approx(rouge_l_f1(b, a).value)

    def test_range(self):
        rng = random.Random(3)
        words = ["a", "b", "c"]
        for _ in range(100):
            a = " ".join(rng.choices(words, k=rng.randint(0, 6)))
            b = " ".join(rng.choices(words, k=rng.randint(0, 6)))
            assert 0.0 <= rouge_l_f1(a, b).value <= 1.0


class TestBleu4:
    def test_identity(self):
        s = "the cat sat on the mat"
        assert bleu4(s, [s]).value == 1.0

    def test_zero_bigram_precision_unsmoothed(self):
        hyp = "the the the the the the"
        ref = "the cat sat on the mat"
        # oracle: clipped unigram count is 2, bigram count is 0
        assert clipped_count_brute_force(hyp.split(), [ref.split()], 1) == 2
        assert clipped_count_brute_force(hyp.split(), [ref.split()], 2) == 0
        assert bleu4(hyp, [ref], smoothing=Smoothing.NONE).value == 0.0

    def test_empty_hypothesis(self):
        assert bleu4("", ["the cat"]).value == 0.0

    def test_empty_reference_list(self):
        with pytest.raises(QgcError):
            bleu4("the cat", [])

    def test_epsilon_smoothing_nonzero(self):
        value = bleu4("the cat", ["the cat sat on the mat"],
                      smoothing=Smoothing.EPSILON).value
        assert 0.0 < value < 1.0

    def test_not_symmetric(self):
        a, b = "the cat sat on the mat", "the cat sat on the mat today ok fine"
        assert bleu4(a, [b], smoothing=Smoothing.EPSILON).value != \
            bleu4(b, [a], smoothing=Smoothing.EPSILON).value

    def test_clipped_counts_match_oracle(self):
        rng = random.Random(7)
        for _ in range(1000):
            hyp = rng.choices("abcde", k=rng.randint(0, 10))
            refs = [rng.choices("abcde", k=rng.randint(0, 10))
                    for _ in range(rng.randint(1, 3))]
            n = rng.randint(1, 4)
            assert clipped_ngram_count(hyp, refs, n) == \
                clipped_count_brute_force(hyp, refs, n), (hyp, refs, n)

    def test_brevity_penalty(self):
        # all precisions 1 for the truncated hypothesis; only BP remains
        hyp = "the cat sat on"
        ref = "the cat sat on the mat"
        expected_bp = math.exp(1 - 6 / 4)
        assert bleu4(hyp, [ref], smoothing=Smoothing.NONE).value == \
            pytest.approx(expected_bp)

    def test_range(self):
        rng = random.Random(8)
        for _ in range(200):
            hyp = " ".join(rng.choices("abcd", k=rng.randint(1, 10)))
            refs = [" ".join(rng.choices("abcd", k=rng.randint(1, 10)))]
            for smoothing in Smoothing:
                assert 0.0 <= bleu4(hyp, refs, smoothing=smoothing).value <= 1.0


class TestExactMatch:
    def test_punctuation_and_case_ignored(self):
        assert exact_match("The mat.", "the mat").value == 1.0

    def test_articles_kept(self):
        assert exact_match("a mat", "the mat").value == 0.0

    def test_empty_equal(self):
        assert exact_match("", "").value == 1.0

    def test_identity_property(self):
        rng = random.Random(9)
        words = ["cat", "The", "mat!", "dog"]
        for _ in range(100):
            s = " ".join(rng.choices(words, k=rng.randint(0, 5)))
            assert exact_match(s, s).value == 1.0
