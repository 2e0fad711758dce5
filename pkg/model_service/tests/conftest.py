import json

import pytest

from model_service.training import TEST_TINY_CHECKPOINT, TrainingHyperparams, fine_tune

TINY_HP = TrainingHyperparams(
    max_input_tokens=64,
    max_output_tokens=32,
    max_epochs=1,
    batch_size=4,
    base_checkpoint=TEST_TINY_CHECKPOINT,
)


def write_prompt_file(path, records, config="B"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"stage": "encode", "config": config}}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def toy_records(n=10):
    return [
        {
            "qa_id": f"q{i}",
            "input_text": f"<ANSWER> a king <SECTION> Story {i}. Once there lived a king.",
            "target_text": f"<QUESTION> Who lived in story {i}?",
        }
        for i in range(n)
    ]


@pytest.fixture(scope="session")
def prompt_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("prompts")
    train = write_prompt_file(root / "train.jsonl", toy_records(10))
    val = write_prompt_file(root / "val.jsonl", toy_records(4))
    return train, val


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory, prompt_files):
    train, val = prompt_files
    out = tmp_path_factory.mktemp("ckpt") / "tiny"
    return fine_tune(train, val, TINY_HP, seed=7, out_dir=out)
