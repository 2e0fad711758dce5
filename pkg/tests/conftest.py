import json
import random

import pytest

from qgcontrol.corpus import (
    ExplicitnessLabel,
    NarrativeElement,
    Split,
    load_corpus,
)

EXPLICITNESS = [e.value for e in ExplicitnessLabel]
NARRATIVES = [n.value for n in NarrativeElement]


def record(story_id, section_ordinal, qa_index, *, split="test",
           explicitness="explicit", narrative="action",
           question=None, answer=None, section_text=None):
    section_id = f"{story_id}:s{section_ordinal}"
    return {
        "story_id": story_id,
        "story_title": f"Story {story_id}",
        "split": split,
        "section_id": section_id,
        "section_ordinal": section_ordinal,
        "section_text": section_text or f"Section {section_ordinal} of {story_id}. "
                                        f"Once there lived a king and a queen.",
        "qa_id": f"{story_id}:s{section_ordinal}:q{qa_index}",
        "question": question or f"What happened in section {section_ordinal} "
                                f"of {story_id} (q{qa_index})?",
        "answer": answer or f"answer {qa_index} of {section_id}",
        "explicitness": explicitness,
        "narrative": narrative,
    }


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def synthetic_records(n_stories=3, sections_per_story=3, pairs_per_section=3,
                      split="test", seed=7):
    rng = random.Random(seed)
    records = []
    for s in range(n_stories):
        story_id = f"story{s}"
        for o in range(sections_per_story):
            for q in range(pairs_per_section):
                records.append(record(
                    story_id, o, q, split=split,
                    explicitness=rng.choice(EXPLICITNESS),
                    narrative=rng.choice(NARRATIVES),
                ))
    return records


@pytest.fixture
def corpus_file(tmp_path):
    return write_jsonl(tmp_path / "corpus.jsonl", synthetic_records())


@pytest.fixture
def corpus(corpus_file):
    return load_corpus(corpus_file)


@pytest.fixture
def test_split():
    return Split.TEST
