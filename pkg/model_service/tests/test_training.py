import json

import pytest

from model_service.training import (
    TrainingError,
    fine_tune,
    read_manifest,
    read_prompt_file,
)

from conftest import TINY_HP, toy_records, write_prompt_file


class TestReadPromptFile:
    def test_reads_config_and_records(self, prompt_files):
        config, records = read_prompt_file(prompt_files[0])
        assert config == "B"
        assert len(records) == 10
        assert records[0]["input_text"].startswith("<ANSWER>")

    def test_empty_file_errors(self, tmp_path):
        path = write_prompt_file(tmp_path / "empty.jsonl", [])
        with pytest.raises(TrainingError, match="empty prompt file"):
            read_prompt_file(path)

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(TrainingError, match="does not exist"):
            read_prompt_file(tmp_path / "nope.jsonl")


class TestFineTune:
    def test_smoke_manifest(self, checkpoint):
        manifest = read_manifest(checkpoint)
        assert manifest["config"] == "B"
        assert manifest["best_epoch"] == 1
        assert manifest["seed"] == 7
        assert manifest["hyperparams"]["early_stop_patience"] == 2
        assert manifest["best_val_loss"] > 0

    def test_checkpoint_contents(self, checkpoint):
        assert (checkpoint / "manifest.json").exists()
        assert (checkpoint / "config.json").exists()

    def test_config_mismatch_errors(self, tmp_path):
        train = write_prompt_file(tmp_path / "t.jsonl", toy_records(4), config="B")
        val = write_prompt_file(tmp_path / "v.jsonl", toy_records(2), config="C")
        with pytest.raises(TrainingError, match="config mismatch"):
            fine_tune(train, val, TINY_HP, seed=1, out_dir=tmp_path / "ckpt")

    def test_existing_checkpoint_needs_overwrite(self, tmp_path, prompt_files):
        train, val = prompt_files
        out = tmp_path / "ckpt"
        out.mkdir()
        (out / "stale").write_text("x")
        with pytest.raises(TrainingError, match="exists"):
            fine_tune(train, val, TINY_HP, seed=1, out_dir=out)
        fine_tune(train, val, TINY_HP, seed=1, out_dir=out, overwrite=True)
        assert (out / "manifest.json").exists()

    def test_default_hyperparams(self):
        from model_service.training import TrainingHyperparams

        hp = TrainingHyperparams()
        assert hp.max_input_tokens == 512
        assert hp.max_output_tokens == 128
        assert hp.max_epochs == 10
        assert hp.early_stop_patience == 2
        assert hp.batch_size == 32
        assert hp.base_checkpoint == "t5-base"
