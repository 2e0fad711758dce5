import csv

import pytest

from qgcontrol.corpus import Split, load_corpus, validate_corpus
from qgcontrol.errors import CorpusError


def write_story(split_dir, name, sections):
    with (split_dir / f"{name}-story.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["story_name", "section", "text"])
        writer.writeheader()
        for i, text in enumerate(sections, start=1):
            writer.writerow({"story_name": name, "section": i, "text": text})


def write_questions(split_dir, name, rows):
    fieldnames = ["question_id", "story_name", "cor_section", "question",
                  "answer1", "ex-or-im1", "attribute1"]
    with (split_dir / f"{name}-questions.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for i, (cor, question, answer, ex, attr) in enumerate(rows):
            writer.writerow({
                "question_id": i, "story_name": name, "cor_section": cor,
                "question": question, "answer1": answer,
                "ex-or-im1": ex, "attribute1": attr,
            })


@pytest.fixture
def source_dir(tmp_path):
    for split in ("train", "val", "test"):
        split_dir = tmp_path / split
        split_dir.mkdir()
        name = f"{split}-tale"
        write_story(split_dir, name,
                    ["Once there lived a king.", "The king rode away."])
        write_questions(split_dir, name, [
            ("1", "Who lived there?", "a king", "explicit", "character"),
            ("2", "Why did the king ride away?", "to hunt", "implicit",
             "causal relationship"),
            ("1, 2", "What will happen next?", "a war", "implicit", "prediction"),
        ])
    return tmp_path


class TestFairytaleSourceAdapter:
    def test_ingest(self, source_dir):
        corpus = load_corpus(source_dir, "fairytaleqa-source")
        assert validate_corpus(corpus) == []
        assert len(corpus.stories) == 3
        assert len(corpus.qa_pairs) == 9
        assert {s.split for s in corpus.stories} == set(Split)

    def test_multi_section_question_attaches_to_first(self, source_dir):
        corpus = load_corpus(source_dir, "fairytaleqa-source")
        pair = next(p for p in corpus.qa_pairs
                    if p.question == "What will happen next?"
                    and p.story_id == "test-tale")
        assert pair.section_id == "test-tale:0"

    def test_labels_normalized(self, source_dir):
        corpus = load_corpus(source_dir, "fairytaleqa-source")
        narratives = {p.narrative.value for p in corpus.qa_pairs}
        assert narratives == {"character", "causal relationship", "prediction"}

    def test_missing_split_dirs_error(self, tmp_path):
        with pytest.raises(CorpusError, match="train/val/test"):
            load_corpus(tmp_path, "fairytaleqa-source")

    def test_dangling_section_reference(self, tmp_path):
        split_dir = tmp_path / "test"
        split_dir.mkdir()
        write_story(split_dir, "t", ["Only one section."])
        write_questions(split_dir, "t",
                        [("5", "Where?", "there", "explicit", "setting")])
        with pytest.raises(CorpusError, match="missing section"):
            load_corpus(tmp_path, "fairytaleqa-source")
