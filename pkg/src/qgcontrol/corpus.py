"""Labeled story/QA corpus: canonical types, loading, validation and summary stats.

The canonical on-disk format is line-delimited JSON, one record per QA pair
(or per pair-less section), UTF-8, with fields:

    story_id, story_title, split, section_id, section_ordinal, section_text,
    qa_id, question, answer, explicitness, narrative

A record whose ``qa_id`` is null describes a section that carries no QA pairs.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import CorpusError


class ExplicitnessLabel(Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class NarrativeElement(Enum):
    CHARACTER = "character"
    SETTING = "setting"
    ACTION = "action"
    FEELING = "feeling"
    CAUSAL_RELATIONSHIP = "causal relationship"
    OUTCOME_RESOLUTION = "outcome resolution"
    PREDICTION = "prediction"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def normalize_label(raw: str) -> str:
    """Lowercase and collapse internal whitespace before enumeration matching."""
    return re.sub(r"\s+", " ", raw.strip().lower())


def parse_explicitness(raw: str) -> ExplicitnessLabel:
    try:
        return ExplicitnessLabel(normalize_label(raw))
    except ValueError:
        raise CorpusError(f"unknown explicitness label: {raw!r}") from None


def parse_narrative(raw: str) -> NarrativeElement:
    try:
        return NarrativeElement(normalize_label(raw))
    except ValueError:
        raise CorpusError(f"unknown narrative element: {raw!r}") from None


def parse_split(raw: str) -> Split:
    try:
        return Split(normalize_label(raw))
    except ValueError:
        raise CorpusError(f"unknown split: {raw!r}") from None


@dataclass(frozen=True)
class QAPair:
    id: str
    question: str
    answer: str
    explicitness: ExplicitnessLabel
    narrative: NarrativeElement
    section_id: str
    story_id: str
    split: Split


@dataclass(frozen=True)
class Section:
    id: str
    story_id: str
    text: str
    ordinal: int


@dataclass(frozen=True)
class Story:
    id: str
    title: str
    section_ids: tuple[str, ...]
    split: Split


@dataclass(frozen=True)
class Corpus:
    """Immutable, fully cross-linked corpus.

    Collections are kept in the stable load order: stories by id, sections by
    (story id, ordinal), QA pairs by (story id, section ordinal, qa id).
    """

    stories: tuple[Story, ...]
    sections: tuple[Section, ...]
    qa_pairs: tuple[QAPair, ...]

    def story(self, story_id: str) -> Story:
        return self._story_index[story_id]

    def section(self, section_id: str) -> Section:
        return self._section_index[section_id]

    def has_section(self, section_id: str) -> bool:
        return section_id in self._section_index

    def has_story(self, story_id: str) -> bool:
        return story_id in self._story_index

    def pairs_for_section(self, section_id: str) -> tuple[QAPair, ...]:
        return tuple(p for p in self.qa_pairs if p.section_id == section_id)

    def pairs_in_split(self, split: Split) -> tuple[QAPair, ...]:
        return tuple(p for p in self.qa_pairs if p.split == split)

    def sections_in_split(self, split: Split) -> tuple[Section, ...]:
        return tuple(
            s for s in self.sections if self.story(s.story_id).split == split
        )

    def __post_init__(self):
        object.__setattr__(self, "_story_index", {s.id: s for s in self.stories})
        object.__setattr__(self, "_section_index", {s.id: s for s in self.sections})


@dataclass(frozen=True)
class Violation:
    code: str
    subject_id: str
    message: str


@dataclass(frozen=True)
class CorpusStats:
    pairs_per_split: dict
    explicit_fraction: float
    pairs_per_narrative: dict
    mean_sections_per_story: float
    mean_questions_per_section: float


_REQUIRED_FIELDS = (
    "story_id",
    "story_title",
    "split",
    "section_id",
    "section_ordinal",
    "section_text",
)
_QA_FIELDS = ("qa_id", "question", "answer", "explicitness", "narrative")


def _fail(record_id: str, field_name: str, detail: str):
    raise CorpusError(f"record {record_id!r}, field {field_name!r}: {detail}")


def _read_canonical(path: Path) -> Iterator[dict]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if "_meta" in rec:
                continue
            rec["_line"] = lineno
            yield rec


def _build_corpus(records: Iterable[dict]) -> Corpus:
    stories: dict[str, dict] = {}
    sections: dict[str, Section] = {}
    pairs: dict[str, QAPair] = {}

    for rec in records:
        rid = str(rec.get("qa_id") or rec.get("section_id") or rec.get("_line", "?"))
        for f in _REQUIRED_FIELDS:
            if f not in rec or rec[f] is None:
                _fail(rid, f, "missing field")
        story_id = str(rec["story_id"])
        section_id = str(rec["section_id"])
        split = parse_split(str(rec["split"]))
        section_text = str(rec["section_text"])
        if not section_text.strip():
            _fail(rid, "section_text", "empty text")
        try:
            ordinal = int(rec["section_ordinal"])
        except (TypeError, ValueError):
            _fail(rid, "section_ordinal", f"not an integer: {rec['section_ordinal']!r}")
        if ordinal < 0:
            _fail(rid, "section_ordinal", "negative ordinal")

        story = stories.setdefault(
            story_id,
            {"title": str(rec["story_title"]), "split": split, "section_ids": set()},
        )
        if story["split"] != split:
            _fail(rid, "split", f"story {story_id!r} seen with conflicting splits")
        story["section_ids"].add(section_id)

        existing = sections.get(section_id)
        new_section = Section(id=section_id, story_id=story_id, text=section_text, ordinal=ordinal)
        if existing is None:
            sections[section_id] = new_section
        elif existing != new_section:
            _fail(rid, "section_id", f"section {section_id!r} redefined inconsistently")

        if rec.get("qa_id") is None:
            continue
        qa_id = str(rec["qa_id"])
        for f in _QA_FIELDS:
            if rec.get(f) is None:
                _fail(qa_id, f, "missing field")
        question = str(rec["question"])
        answer = str(rec["answer"])
        if not question.strip():
            _fail(qa_id, "question", "empty text")
        if not answer.strip():
            _fail(qa_id, "answer", "empty text")
        try:
            explicitness = parse_explicitness(str(rec["explicitness"]))
            narrative = parse_narrative(str(rec["narrative"]))
        except CorpusError as exc:
            raise CorpusError(f"record {qa_id!r}: {exc}") from None
        if qa_id in pairs:
            _fail(qa_id, "qa_id", "duplicate qa id")
        pairs[qa_id] = QAPair(
            id=qa_id,
            question=question,
            answer=answer,
            explicitness=explicitness,
            narrative=narrative,
            section_id=section_id,
            story_id=story_id,
            split=split,
        )

    if not pairs and not sections:
        raise CorpusError("empty corpus")

    story_objs = tuple(
        Story(
            id=sid,
            title=info["title"],
            section_ids=tuple(
                sorted(info["section_ids"], key=lambda x: sections[x].ordinal)
            ),
            split=info["split"],
        )
        for sid, info in sorted(stories.items())
    )
    section_objs = tuple(
        sorted(sections.values(), key=lambda s: (s.story_id, s.ordinal))
    )
    sec_ord = {s.id: (s.story_id, s.ordinal) for s in section_objs}
    pair_objs = tuple(
        sorted(pairs.values(), key=lambda p: (*sec_ord.get(p.section_id, ("", 0)), p.id))
    )
    return Corpus(stories=story_objs, sections=section_objs, qa_pairs=pair_objs)


def _iter_fairytaleqa_source(root: Path) -> Iterator[dict]:
    """Adapter over the published dataset layout (per-story section CSVs and
    per-split question CSVs); see docs/fairytaleqa_mapping.md for the column map."""
    split_dirs = []
    for name, split in (("train", "train"), ("val", "val"), ("test", "test")):
        for candidate in (root / name, root / "split_for_training" / name):
            if candidate.is_dir():
                split_dirs.append((candidate, split))
                break
    if not split_dirs:
        raise CorpusError(f"no train/val/test directories under {root}")

    for split_dir, split in split_dirs:
        story_files = sorted(split_dir.glob("*-story.csv"))
        if not story_files:
            raise CorpusError(f"no *-story.csv files under {split_dir}")
        for story_file in story_files:
            story_name = story_file.name[: -len("-story.csv")]
            question_file = split_dir / f"{story_name}-questions.csv"
            sections: dict[int, str] = {}
            with story_file.open("r", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    ordinal = int(row["section"]) - 1
                    sections[ordinal] = row["text"].strip()
            base = {
                "story_id": story_name,
                "story_title": story_name.replace("-", " "),
                "split": split,
            }
            emitted_sections = set()
            if question_file.exists():
                with question_file.open("r", encoding="utf-8") as fh:
                    for idx, row in enumerate(csv.DictReader(fh)):
                        cor = row.get("cor_section", "")
                        # a question may span several sections; attach to the first
                        ordinal = int(str(cor).split(",")[0]) - 1
                        if ordinal not in sections:
                            raise CorpusError(
                                f"record {story_name}/{idx}: question references "
                                f"missing section {ordinal}"
                            )
                        emitted_sections.add(ordinal)
                        yield {
                            **base,
                            "section_id": f"{story_name}:{ordinal}",
                            "section_ordinal": ordinal,
                            "section_text": sections[ordinal],
                            "qa_id": f"{story_name}:q{idx}",
                            "question": row["question"].strip(),
                            "answer": str(row.get("answer1", "")).strip(),
                            "explicitness": row.get("ex-or-im1", row.get("answer_type", "")),
                            "narrative": row.get("attribute1", row.get("attribute", "")),
                        }
            for ordinal in sorted(set(sections) - emitted_sections):
                yield {
                    **base,
                    "section_id": f"{story_name}:{ordinal}",
                    "section_ordinal": ordinal,
                    "section_text": sections[ordinal],
                    "qa_id": None,
                }


def load_corpus(path, format: str = "canonical-jsonl") -> Corpus:
    """Load a corpus from disk; deterministic for identical inputs."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"path does not exist: {path}")
    if format == "canonical-jsonl":
        records = list(_read_canonical(path))
        if not records:
            raise CorpusError("empty corpus")
        return _build_corpus(records)
    if format == "fairytaleqa-source":
        return _build_corpus(_iter_fairytaleqa_source(path))
    raise CorpusError(f"unknown corpus format: {format!r}")


def export_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the canonical line-delimited format (round-trips)."""
    path = Path(path)
    sections_with_pairs = {p.section_id for p in corpus.qa_pairs}
    with path.open("w", encoding="utf-8") as fh:
        for pair in corpus.qa_pairs:
            section = corpus.section(pair.section_id)
            story = corpus.story(pair.story_id)
            fh.write(json.dumps({
                "story_id": story.id,
                "story_title": story.title,
                "split": story.split.value,
                "section_id": section.id,
                "section_ordinal": section.ordinal,
                "section_text": section.text,
                "qa_id": pair.id,
                "question": pair.question,
                "answer": pair.answer,
                "explicitness": pair.explicitness.value,
                "narrative": pair.narrative.value,
            }, ensure_ascii=False) + "\n")
        for section in corpus.sections:
            if section.id in sections_with_pairs:
                continue
            story = corpus.story(section.story_id)
            fh.write(json.dumps({
                "story_id": story.id,
                "story_title": story.title,
                "split": story.split.value,
                "section_id": section.id,
                "section_ordinal": section.ordinal,
                "section_text": section.text,
                "qa_id": None,
                "question": None,
                "answer": None,
                "explicitness": None,
                "narrative": None,
            }, ensure_ascii=False) + "\n")


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Collect every invariant violation; empty list iff the corpus is valid."""
    violations: list[Violation] = []

    def add(code, subject, message):
        violations.append(Violation(code=code, subject_id=subject, message=message))

    seen_story, seen_section, seen_pair = set(), set(), set()
    for story in corpus.stories:
        if story.id in seen_story:
            add("duplicate-story-id", story.id, f"duplicate story id {story.id!r}")
        seen_story.add(story.id)
        if not story.section_ids:
            add("empty-story", story.id, f"story {story.id!r} has no sections")

    by_story = defaultdict(list)
    for section in corpus.sections:
        if section.id in seen_section:
            add("duplicate-section-id", section.id, f"duplicate section id {section.id!r}")
        seen_section.add(section.id)
        if not section.text.strip():
            add("empty-section-text", section.id, f"section {section.id!r} has empty text")
        if not corpus.has_story(section.story_id):
            add("dangling-story-id", section.id,
                f"section {section.id!r} references absent story {section.story_id!r}")
        by_story[section.story_id].append(section)

    for story_id, secs in by_story.items():
        ordinals = sorted(s.ordinal for s in secs)
        if ordinals != list(range(len(secs))):
            add("non-contiguous-ordinals", story_id,
                f"story {story_id!r} section ordinals {ordinals} are not 0..{len(secs) - 1}")

    for pair in corpus.qa_pairs:
        if pair.id in seen_pair:
            add("duplicate-qa-id", pair.id, f"duplicate qa id {pair.id!r}")
        seen_pair.add(pair.id)
        if not pair.question.strip():
            add("empty-question", pair.id, f"pair {pair.id!r} has empty question")
        if not pair.answer.strip():
            add("empty-answer", pair.id, f"pair {pair.id!r} has empty answer")
        if not isinstance(pair.explicitness, ExplicitnessLabel):
            add("unknown-explicitness-label", pair.id,
                f"pair {pair.id!r}: unknown explicitness label {pair.explicitness!r}")
        if not isinstance(pair.narrative, NarrativeElement):
            add("unknown-narrative-element", pair.id,
                f"pair {pair.id!r}: unknown narrative element {pair.narrative!r}")
        if not corpus.has_section(pair.section_id):
            add("dangling-section-id", pair.id,
                f"pair {pair.id!r} references absent section {pair.section_id!r}")
        if not corpus.has_story(pair.story_id):
            add("dangling-story-id", pair.id,
                f"pair {pair.id!r} references absent story {pair.story_id!r}")
        elif corpus.story(pair.story_id).split != pair.split:
            add("split-mismatch", pair.id,
                f"pair {pair.id!r} split differs from its story's split")
    return violations


def corpus_stats(corpus: Corpus) -> CorpusStats:
    pairs_per_split = Counter(p.split for p in corpus.qa_pairs)
    pairs_per_narrative = Counter(p.narrative for p in corpus.qa_pairs)
    total = len(corpus.qa_pairs)
    explicit = sum(1 for p in corpus.qa_pairs
                   if p.explicitness is ExplicitnessLabel.EXPLICIT)
    sections_with_pairs = {p.section_id for p in corpus.qa_pairs}
    return CorpusStats(
        pairs_per_split={s: pairs_per_split.get(s, 0) for s in Split},
        explicit_fraction=explicit / total if total else 0.0,
        pairs_per_narrative={n: pairs_per_narrative.get(n, 0) for n in NarrativeElement},
        mean_sections_per_story=(
            len(corpus.sections) / len(corpus.stories) if corpus.stories else 0.0
        ),
        mean_questions_per_section=(
            total / len(sections_with_pairs) if sections_with_pairs else 0.0
        ),
    )
