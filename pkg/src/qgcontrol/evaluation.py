"""The two assessment protocols: reference-based QG scoring and round-trip
QA controllability scoring, with label-grouped aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .backend import DecodingParams, GenerationRequest
from .controlledtest import ControlledExample, ControlledTestSet
from .corpus import ExplicitnessLabel, NarrativeElement, parse_explicitness, parse_narrative
from .errors import EvaluationError, MalformedOutputError
from .metrics import (
    DEFAULT_PROFILE,
    Metric,
    NormalizationProfile,
    Smoothing,
    bleu4,
    exact_match,
    external_score,
    rouge_l_f1,
)
from .promptspec import ModelConfig, encode_input, parse_generated


class Protocol(Enum):
    QG_REFERENCE = "qg-reference"
    QA_CONTROLLABILITY = "qa-controllability"


class Aggregation(Enum):
    MAX_OVER_REFERENCES = "max-over-references"
    MEAN_OVER_REFERENCES = "mean-over-references"


# parse failures above this fraction of examples abort the run
EXCLUSION_RATE_THRESHOLD = 0.05


@dataclass(frozen=True)
class GeneratedQA:
    section_id: str
    config: ModelConfig
    question: Optional[str] = None
    answer: Optional[str] = None
    explicitness: Optional[ExplicitnessLabel] = None
    narrative: Optional[NarrativeElement] = None

    def __post_init__(self):
        if self.explicitness is not None and not self.config.wants_explicitness:
            raise EvaluationError(
                f"config {self.config.name} carries no explicitness control")
        if self.narrative is not None and not self.config.wants_narrative:
            raise EvaluationError(
                f"config {self.config.name} carries no narrative control")


@dataclass(frozen=True)
class ScoreRecord:
    section_id: str
    metric: Metric
    value: float
    explicitness: Optional[ExplicitnessLabel] = None
    narrative: Optional[NarrativeElement] = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise EvaluationError(f"score out of range: {self.value}")


@dataclass(frozen=True)
class EvaluationReport:
    protocol: Protocol
    config: ModelConfig
    overall: dict
    by_explicitness: dict
    group_counts: dict
    n_examples: int
    metadata: dict = field(default_factory=dict)
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "config": self.config.name,
            "overall": {m.value: v for m, v in self.overall.items()},
            "by_explicitness": {
                label.value: {m.value: v for m, v in means.items()}
                for label, means in self.by_explicitness.items()
            },
            "group_counts": {label.value: c for label, c in self.group_counts.items()},
            "n_examples": self.n_examples,
            "excluded": self.excluded,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            protocol=Protocol(d["protocol"]),
            config=ModelConfig.from_letter(d["config"]),
            overall={Metric(m): v for m, v in d["overall"].items()},
            by_explicitness={
                parse_explicitness(label): {Metric(m): v for m, v in means.items()}
                for label, means in d["by_explicitness"].items()
            },
            group_counts={parse_explicitness(k): v for k, v in d["group_counts"].items()},
            n_examples=d["n_examples"],
            excluded=d.get("excluded", 0),
            metadata=d.get("metadata", {}),
        )


def save_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_report(path) -> EvaluationReport:
    return EvaluationReport.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


def aggregate_by_label(
    records: Sequence[ScoreRecord], label_axis: str = "explicitness"
) -> dict:
    """Arithmetic mean per (label, metric) with counts; records without the
    axis label group under "unlabeled"."""
    if label_axis not in ("explicitness", "narrative"):
        raise EvaluationError(f"unknown label axis: {label_axis!r}")
    sums: dict = {}
    for rec in records:
        label = getattr(rec, label_axis)
        key = label if label is not None else "unlabeled"
        per_metric = sums.setdefault(key, {})
        total, count = per_metric.get(rec.metric, (0.0, 0))
        per_metric[rec.metric] = (total + rec.value, count + 1)
    return {
        label: {m: (total / count, count) for m, (total, count) in per_metric.items()}
        for label, per_metric in sums.items()
    }


def _match_generations(
    generated: Sequence[GeneratedQA], ctest: ControlledTestSet
) -> list[tuple[GeneratedQA, ControlledExample]]:
    by_section: dict[str, GeneratedQA] = {}
    for gen in generated:
        if gen.section_id in by_section:
            raise EvaluationError(f"duplicate generation for section {gen.section_id!r}")
        by_section[gen.section_id] = gen
    expected = {ex.section_id for ex in ctest.examples}
    extra = set(by_section) - expected
    missing = expected - set(by_section)
    if extra:
        raise EvaluationError(f"generations for unknown sections: {sorted(extra)[:5]}")
    if missing:
        raise EvaluationError(f"missing generations for sections: {sorted(missing)[:5]}")
    return [(by_section[ex.section_id], ex) for ex in ctest.examples]


def _assemble(
    protocol: Protocol,
    config: ModelConfig,
    records: list[ScoreRecord],
    n_examples: int,
    excluded: int,
    metadata: dict,
) -> EvaluationReport:
    grouped = aggregate_by_label(records, "explicitness")
    overall: dict = {}
    per_metric_totals: dict = {}
    for rec in records:
        total, count = per_metric_totals.get(rec.metric, (0.0, 0))
        per_metric_totals[rec.metric] = (total + rec.value, count + 1)
    overall = {m: total / count for m, (total, count) in per_metric_totals.items()}
    group_counts = {
        label: max(count for _, count in means.values())
        for label, means in grouped.items()
    }
    return EvaluationReport(
        protocol=protocol,
        config=config,
        overall=overall,
        by_explicitness={
            label: {m: mean for m, (mean, _) in means.items()}
            for label, means in grouped.items()
        },
        group_counts=group_counts,
        n_examples=n_examples,
        excluded=excluded,
        metadata=metadata,
    )


def _profile_metadata(profile: NormalizationProfile) -> dict:
    return {
        "lowercase": profile.lowercase,
        "strip_punctuation": profile.strip_punctuation,
        "collapse_whitespace": profile.collapse_whitespace,
        "remove_articles": profile.remove_articles,
    }


def evaluate_qg(
    generated: Sequence[GeneratedQA],
    ctest: ControlledTestSet,
    aggregation: Aggregation = Aggregation.MAX_OVER_REFERENCES,
    profile: NormalizationProfile = DEFAULT_PROFILE,
    smoothing: Smoothing = Smoothing.EPSILON,
    scorer_endpoint: Optional[str] = None,
) -> EvaluationReport:
    """Score generated questions against each example's reference questions."""
    matched = _match_generations(generated, ctest)
    if not matched:
        raise EvaluationError("nothing to evaluate")
    config = matched[0][0].config
    records: list[ScoreRecord] = []
    external_jobs: list[tuple[int, ControlledExample, list[tuple[str, str]]]] = []

    for gen, example in matched:
        if gen.question is None:
            raise EvaluationError(
                f"section {gen.section_id!r}: generation has no question")
        refs = [p.question for p in example.reference_pairs]
        rouge_values = [rouge_l_f1(gen.question, r, profile).value for r in refs]
        if aggregation is Aggregation.MAX_OVER_REFERENCES:
            rouge = max(rouge_values)
        else:
            rouge = sum(rouge_values) / len(rouge_values)
        records.append(ScoreRecord(
            section_id=example.section_id, metric=Metric.ROUGE_L_F1, value=rouge,
            explicitness=example.explicitness, narrative=example.narrative))
        records.append(ScoreRecord(
            section_id=example.section_id, metric=Metric.BLEU4,
            value=bleu4(gen.question, refs, profile, smoothing).value,
            explicitness=example.explicitness, narrative=example.narrative))
        if scorer_endpoint:
            external_jobs.append(
                (len(records), example, [(gen.question, r) for r in refs]))

    if scorer_endpoint:
        flat = [pair for _, _, pairs in external_jobs for pair in pairs]
        scores = external_score(flat, scorer_endpoint)
        pos = 0
        for _, example, pairs in external_jobs:
            chunk = [s.value for s in scores[pos:pos + len(pairs)]]
            pos += len(pairs)
            value = max(chunk) if aggregation is Aggregation.MAX_OVER_REFERENCES \
                else sum(chunk) / len(chunk)
            records.append(ScoreRecord(
                section_id=example.section_id, metric=Metric.EXTERNAL, value=value,
                explicitness=example.explicitness, narrative=example.narrative))

    metadata = {
        "normalization": _profile_metadata(profile),
        "smoothing": smoothing.value,
        "aggregation": aggregation.value,
        "controlled_test_policy": ctest.selection_policy.value,
        "controlled_test_seed": ctest.seed,
    }
    return _assemble(Protocol.QG_REFERENCE, config, records,
                     n_examples=len(matched), excluded=0, metadata=metadata)


def evaluate_qa_controllability(
    generated: Sequence[GeneratedQA],
    qa_backend,
    ctest: ControlledTestSet,
    profile: NormalizationProfile = DEFAULT_PROFILE,
    params: DecodingParams = DecodingParams(),
) -> EvaluationReport:
    """Answer each generated question with a config-A QA backend and score the
    QA answer against the generator's own answer."""
    matched = _match_generations(generated, ctest)
    if not matched:
        raise EvaluationError("nothing to evaluate")
    config = matched[0][0].config
    if not (config.emits_question and config.emits_answer):
        raise EvaluationError(
            f"config {config.name} does not produce question-answer outputs")

    reqs = []
    for gen, example in matched:
        if gen.question is None or gen.answer is None:
            raise EvaluationError(
                f"section {gen.section_id!r}: generation lacks question or answer")
        reqs.append(GenerationRequest(
            id=example.section_id,
            input_text=encode_input(ModelConfig.A, example.section_text,
                                    question=gen.question),
            params=params,
        ))
    responses = {r.id: r.output_text for r in qa_backend.generate(reqs)}

    records: list[ScoreRecord] = []
    excluded = 0
    for gen, example in matched:
        raw = responses[example.section_id]
        try:
            qa_answer = parse_generated(ModelConfig.A, raw).answer
        except MalformedOutputError:
            excluded += 1
            continue
        for metric_fn, metric in ((rouge_l_f1, Metric.ROUGE_L_F1),
                                  (exact_match, Metric.EXACT_MATCH)):
            records.append(ScoreRecord(
                section_id=example.section_id, metric=metric,
                value=metric_fn(qa_answer, gen.answer, profile).value,
                explicitness=example.explicitness, narrative=example.narrative))

    if matched and excluded / len(matched) > EXCLUSION_RATE_THRESHOLD:
        raise EvaluationError(
            f"{excluded}/{len(matched)} QA outputs malformed, exceeding the "
            f"{EXCLUSION_RATE_THRESHOLD:.0%} exclusion threshold")

    metadata = {
        "normalization": _profile_metadata(profile),
        "aggregation": "single-target",
        "controlled_test_policy": ctest.selection_policy.value,
        "controlled_test_seed": ctest.seed,
        "qa_config": ModelConfig.A.name,
    }
    return _assemble(Protocol.QA_CONTROLLABILITY, config, records,
                     n_examples=len(matched), excluded=excluded, metadata=metadata)
