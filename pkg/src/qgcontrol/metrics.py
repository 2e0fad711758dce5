"""From-scratch text metrics: ROUGE-L F1, sentence BLEU-4 and Exact Match,
plus an HTTP slot for an external learned scorer."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import requests

from .errors import QgcError


class Metric(Enum):
    ROUGE_L_F1 = "rouge_l_f1"
    BLEU4 = "bleu4"
    EXACT_MATCH = "exact_match"
    EXTERNAL = "external"


class Smoothing(Enum):
    NONE = "none"
    EPSILON = "epsilon"


# zero n-gram counts become this pseudo-count under epsilon smoothing
_EPSILON_COUNT = 0.1


@dataclass(frozen=True)
class NormalizationProfile:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    remove_articles: bool = False


DEFAULT_PROFILE = NormalizationProfile()

_ARTICLES = frozenset({"a", "an", "the"})


@dataclass(frozen=True)
class Score:
    value: float
    metric: Metric

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise QgcError(f"score out of range: {self.value}")


def _strip_punct(text: str) -> str:
    return "".join(
        " " if unicodedata.category(ch).startswith("P") else ch for ch in text
    )


def normalize(text: str, profile: NormalizationProfile = DEFAULT_PROFILE) -> list[str]:
    """Tokenize after lowercasing, punctuation stripping and optional article
    removal; idempotent on its own (re-joined) output."""
    if profile.lowercase:
        text = text.lower()
    if profile.strip_punctuation:
        text = _strip_punct(text)
    tokens = text.split()
    if profile.remove_articles:
        tokens = [t for t in tokens if t not in _ARTICLES]
    return tokens


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Exact longest-common-subsequence length, O(len(a)*len(b)) time,
    two-row O(min) space."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l_f1(
    hypothesis: str,
    reference: str,
    profile: NormalizationProfile = DEFAULT_PROFILE,
) -> Score:
    hyp = normalize(hypothesis, profile)
    ref = normalize(reference, profile)
    if not hyp or not ref:
        return Score(0.0, Metric.ROUGE_L_F1)
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return Score(0.0, Metric.ROUGE_L_F1)
    recall = lcs / len(ref)
    precision = lcs / len(hyp)
    return Score(2 * precision * recall / (precision + recall), Metric.ROUGE_L_F1)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_ngram_count(
    hyp_tokens: Sequence[str], ref_token_lists: Iterable[Sequence[str]], n: int
) -> int:
    """Hypothesis n-gram count clipped by the per-reference maximum."""
    hyp_counts = ngram_counts(hyp_tokens, n)
    max_ref: Counter = Counter()
    for ref in ref_token_lists:
        for gram, count in ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    return sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())


def bleu4(
    hypothesis: str,
    references: Sequence[str],
    profile: NormalizationProfile = DEFAULT_PROFILE,
    smoothing: Smoothing = Smoothing.NONE,
) -> Score:
    """Sentence-level BLEU with n = 1..4, modified precision and brevity penalty."""
    if not references:
        raise QgcError("bleu4 requires at least one reference")
    hyp = normalize(hypothesis, profile)
    refs = [normalize(r, profile) for r in references]
    if not hyp:
        return Score(0.0, Metric.BLEU4)

    c = len(hyp)
    # closest reference length; ties go to the shorter reference
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)

    log_sum = 0.0
    for n in range(1, 5):
        total = max(len(hyp) - n + 1, 0)
        if total == 0:
            if smoothing is Smoothing.NONE:
                return Score(0.0, Metric.BLEU4)
            total = 1  # hypothesis shorter than n: no n-grams to divide by
        matched = clipped_ngram_count(hyp, refs, n)
        if matched == 0:
            if smoothing is Smoothing.NONE:
                return Score(0.0, Metric.BLEU4)
            matched = _EPSILON_COUNT
        log_sum += math.log(matched / total)
    return Score(min(1.0, bp * math.exp(log_sum / 4)), Metric.BLEU4)


def exact_match(
    hypothesis: str,
    reference: str,
    profile: NormalizationProfile = DEFAULT_PROFILE,
) -> Score:
    equal = normalize(hypothesis, profile) == normalize(reference, profile)
    return Score(1.0 if equal else 0.0, Metric.EXACT_MATCH)


def external_score(
    pairs: Sequence[tuple[str, str]],
    scorer_endpoint: str,
    timeout: float = 60.0,
) -> list[Score]:
    """Score (hypothesis, reference) pairs via the POST /v1/score route of an
    external scorer service; results are clamped to [0, 1], order preserved."""
    if not pairs:
        return []
    url = scorer_endpoint.rstrip("/") + "/v1/score"
    body = {"pairs": [{"hypothesis": h, "reference": r} for h, r in pairs]}
    try:
        resp = requests.post(url, json=body, timeout=timeout)
    except requests.RequestException as exc:
        raise QgcError(f"scorer endpoint unreachable: {url}: {exc}") from exc
    if resp.status_code != 200:
        raise QgcError(f"scorer endpoint {url} returned HTTP {resp.status_code}")
    scores = resp.json().get("scores")
    if not isinstance(scores, list) or len(scores) != len(pairs):
        raise QgcError(
            f"scorer endpoint {url}: expected {len(pairs)} scores, "
            f"got {len(scores) if isinstance(scores, list) else 'non-list'}"
        )
    out = []
    for s in scores:
        if not isinstance(s, (int, float)) or isinstance(s, bool):
            raise QgcError(f"scorer endpoint {url}: non-numeric score {s!r}")
        out.append(Score(min(1.0, max(0.0, float(s))), Metric.EXTERNAL))
    return out
