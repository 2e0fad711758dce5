import pytest

from qgcontrol.controlledtest import (
    SelectionPolicy,
    build_controlled_test,
    load_controlled_test,
    save_controlled_test,
)
from qgcontrol.corpus import Split, load_corpus
from qgcontrol.errors import QgcError

from conftest import record, synthetic_records, write_jsonl


def corpus_from(tmp_path, records):
    return load_corpus(write_jsonl(tmp_path / "c.jsonl", records))


class TestBuildControlledTest:
    def test_largest_group_wins(self, tmp_path):
        records = [
            record("s0", 0, 0, explicitness="explicit", narrative="action"),
            record("s0", 0, 1, explicitness="explicit", narrative="action"),
            record("s0", 0, 2, explicitness="implicit", narrative="prediction"),
        ]
        corpus = corpus_from(tmp_path, records)
        ctest = build_controlled_test(corpus, Split.TEST)
        assert len(ctest.examples) == 1
        ex = ctest.examples[0]
        assert ex.explicitness.value == "explicit"
        assert ex.narrative.value == "action"
        assert len(ex.reference_pairs) == 2

    def test_tie_breaks_lexicographically(self, tmp_path):
        records = [
            record("s0", 0, 0, explicitness="implicit", narrative="setting"),
            record("s0", 0, 1, explicitness="explicit", narrative="prediction"),
        ]
        corpus = corpus_from(tmp_path, records)
        ex = build_controlled_test(corpus, Split.TEST).examples[0]
        # ("explicit", "prediction") < ("implicit", "setting")
        assert (ex.explicitness.value, ex.narrative.value) == \
            ("explicit", "prediction")

    def test_single_pair_section(self, tmp_path):
        corpus = corpus_from(tmp_path, [record("s0", 0, 0)])
        for policy in SelectionPolicy:
            ctest = build_controlled_test(corpus, Split.TEST, policy, seed=1)
            assert len(ctest.examples) == 1
            assert len(ctest.examples[0].reference_pairs) == 1

    def test_one_example_per_section(self, tmp_path):
        corpus = corpus_from(tmp_path, synthetic_records(seed=5))
        ctest = build_controlled_test(corpus, Split.TEST)
        section_ids = [ex.section_id for ex in ctest.examples]
        assert len(section_ids) == len(set(section_ids))
        sections_with_pairs = {p.section_id for p in corpus.qa_pairs}
        assert len(ctest.examples) == len(sections_with_pairs)

    def test_homogeneity_and_coverage(self, tmp_path):
        corpus = corpus_from(tmp_path, synthetic_records(seed=6))
        ctest = build_controlled_test(corpus, Split.TEST)
        seen_pair_ids = set()
        split_ids = {p.id for p in corpus.pairs_in_split(Split.TEST)}
        for ex in ctest.examples:
            for pair in ex.reference_pairs:
                assert pair.section_id == ex.section_id
                assert pair.explicitness is ex.explicitness
                assert pair.narrative is ex.narrative
                assert pair.id not in seen_pair_ids
                assert pair.id in split_ids
                seen_pair_ids.add(pair.id)

    def test_determinism(self, tmp_path):
        corpus = corpus_from(tmp_path, synthetic_records(seed=8))
        for policy in SelectionPolicy:
            a = build_controlled_test(corpus, Split.TEST, policy, seed=99)
            b = build_controlled_test(corpus, Split.TEST, policy, seed=99)
            assert a == b

    def test_seeded_uniform_requires_seed(self, tmp_path):
        corpus = corpus_from(tmp_path, [record("s0", 0, 0)])
        with pytest.raises(QgcError, match="seed"):
            build_controlled_test(corpus, Split.TEST,
                                  SelectionPolicy.SEEDED_UNIFORM)

    def test_empty_split_errors(self, tmp_path):
        corpus = corpus_from(tmp_path, [record("s0", 0, 0, split="train")])
        with pytest.raises(QgcError, match="test"):
            build_controlled_test(corpus, Split.TEST)

    def test_pairless_sections_counted_as_skipped(self, tmp_path):
        bare = record("s0", 1, 0)
        for key in ("qa_id", "question", "answer", "explicitness", "narrative"):
            bare[key] = None
        corpus = corpus_from(tmp_path, [record("s0", 0, 0), bare])
        ctest = build_controlled_test(corpus, Split.TEST)
        assert ctest.summary.sections_kept == 1
        assert ctest.summary.sections_skipped == 1


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        corpus = corpus_from(tmp_path, synthetic_records(seed=4))
        ctest = build_controlled_test(corpus, Split.TEST,
                                      SelectionPolicy.SEEDED_UNIFORM, seed=5)
        path = tmp_path / "ctest.jsonl"
        save_controlled_test(ctest, path)
        loaded = load_controlled_test(path)
        assert loaded.examples == ctest.examples
        assert loaded.selection_policy is ctest.selection_policy
        assert loaded.source_split is ctest.source_split
        assert loaded.seed == ctest.seed
