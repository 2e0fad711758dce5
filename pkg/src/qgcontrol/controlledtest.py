"""Build the controlled test set: one example per section, all reference pairs
sharing a single (explicitness, narrative) label combination."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .corpus import (
    Corpus,
    ExplicitnessLabel,
    NarrativeElement,
    QAPair,
    Split,
    parse_explicitness,
    parse_narrative,
    parse_split,
)
from .errors import QgcError


class SelectionPolicy(Enum):
    LARGEST_GROUP = "largest-group"
    SEEDED_UNIFORM = "seeded-uniform"


@dataclass(frozen=True)
class ControlledExample:
    section_id: str
    section_text: str
    explicitness: ExplicitnessLabel
    narrative: NarrativeElement
    reference_pairs: tuple[QAPair, ...]


@dataclass(frozen=True)
class BuildSummary:
    sections_kept: int
    sections_skipped: int
    label_histogram: dict


@dataclass(frozen=True)
class ControlledTestSet:
    examples: tuple[ControlledExample, ...]
    selection_policy: SelectionPolicy
    source_split: Split
    seed: Optional[int] = None
    summary: Optional[BuildSummary] = field(default=None, compare=False)

    def example_for(self, section_id: str) -> ControlledExample:
        for ex in self.examples:
            if ex.section_id == section_id:
                return ex
        raise KeyError(section_id)


def build_controlled_test(
    corpus: Corpus,
    split: Split,
    policy: SelectionPolicy = SelectionPolicy.LARGEST_GROUP,
    seed: Optional[int] = None,
) -> ControlledTestSet:
    """Group each section's pairs by (explicitness, narrative) and keep exactly
    one group per section; deterministic given (corpus, policy, seed)."""
    sections = corpus.sections_in_split(split)
    if not sections:
        raise QgcError(f"split {split.value!r} has no sections")
    if policy is SelectionPolicy.SEEDED_UNIFORM and seed is None:
        raise QgcError("policy seeded-uniform requires a seed")

    rng = random.Random(seed) if seed is not None else None
    examples: list[ControlledExample] = []
    skipped = 0
    histogram: dict[tuple[str, str], int] = {}

    for section in sections:
        pairs = corpus.pairs_for_section(section.id)
        if not pairs:
            skipped += 1
            continue
        groups: dict[tuple[str, str], list[QAPair]] = {}
        for pair in pairs:
            key = (pair.explicitness.value, pair.narrative.value)
            groups.setdefault(key, []).append(pair)
        keys = sorted(groups)
        if policy is SelectionPolicy.LARGEST_GROUP:
            # most pairs wins; ties break on lexicographic (explicitness, narrative)
            chosen = min(keys, key=lambda k: (-len(groups[k]), k))
        else:
            chosen = rng.choice(keys)
        histogram[chosen] = histogram.get(chosen, 0) + 1
        examples.append(ControlledExample(
            section_id=section.id,
            section_text=section.text,
            explicitness=ExplicitnessLabel(chosen[0]),
            narrative=NarrativeElement(chosen[1]),
            reference_pairs=tuple(groups[chosen]),
        ))

    return ControlledTestSet(
        examples=tuple(examples),
        selection_policy=policy,
        source_split=split,
        seed=seed,
        summary=BuildSummary(
            sections_kept=len(examples),
            sections_skipped=skipped,
            label_histogram={f"{e}/{n}": c for (e, n), c in sorted(histogram.items())},
        ),
    )


def save_controlled_test(ctest: ControlledTestSet, path) -> None:
    """One JSON record per example, preceded by a build-metadata record."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        meta = {
            "_meta": {
                "kind": "controlled-test",
                "policy": ctest.selection_policy.value,
                "split": ctest.source_split.value,
                "seed": ctest.seed,
            }
        }
        if ctest.summary is not None:
            meta["_meta"]["summary"] = {
                "sections_kept": ctest.summary.sections_kept,
                "sections_skipped": ctest.summary.sections_skipped,
                "label_histogram": ctest.summary.label_histogram,
            }
        fh.write(json.dumps(meta, ensure_ascii=False, sort_keys=True) + "\n")
        for ex in ctest.examples:
            fh.write(json.dumps({
                "section_id": ex.section_id,
                "section_text": ex.section_text,
                "explicitness": ex.explicitness.value,
                "narrative": ex.narrative.value,
                "reference_pairs": [
                    {"qa_id": p.id, "question": p.question, "answer": p.answer}
                    for p in ex.reference_pairs
                ],
                "story_id": ex.reference_pairs[0].story_id,
            }, ensure_ascii=False, sort_keys=True) + "\n")


def load_controlled_test(path) -> ControlledTestSet:
    path = Path(path)
    examples: list[ControlledExample] = []
    policy = SelectionPolicy.LARGEST_GROUP
    split = Split.TEST
    seed: Optional[int] = None
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                m = rec["_meta"]
                policy = SelectionPolicy(m.get("policy", policy.value))
                split = parse_split(m.get("split", split.value))
                seed = m.get("seed")
                continue
            explicitness = parse_explicitness(rec["explicitness"])
            narrative = parse_narrative(rec["narrative"])
            pairs = tuple(
                QAPair(
                    id=p["qa_id"],
                    question=p["question"],
                    answer=p["answer"],
                    explicitness=explicitness,
                    narrative=narrative,
                    section_id=rec["section_id"],
                    story_id=rec.get("story_id", ""),
                    split=split,
                )
                for p in rec["reference_pairs"]
            )
            examples.append(ControlledExample(
                section_id=rec["section_id"],
                section_text=rec["section_text"],
                explicitness=explicitness,
                narrative=narrative,
                reference_pairs=pairs,
            ))
    return ControlledTestSet(
        examples=tuple(examples),
        selection_policy=policy,
        source_split=split,
        seed=seed,
    )
