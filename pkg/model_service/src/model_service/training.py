"""Fine-tune a text-to-text model on encoded prompt files.

Prompt files are the jsonl output of the primary harness's ``encode``
subcommand: a leading ``_meta`` record naming the config letter, then
``{input_text, target_text}`` records. Early stopping monitors validation
loss; the best-validation-loss epoch is the checkpoint that gets saved.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import torch
from torch.utils.data import DataLoader

SPECIAL_TOKENS = ["<QUESTION>", "<ANSWER>", "<SECTION>", "<EX>", "<NAR>"]

# built-in offline checkpoint name: a tiny randomly initialized byte-level T5,
# used by the test suite where model-hub downloads are unavailable
TEST_TINY_CHECKPOINT = "test-tiny-byt5"

LEARNING_RATE = 3e-4

MANIFEST_NAME = "manifest.json"


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainingHyperparams:
    max_input_tokens: int = 512
    max_output_tokens: int = 128
    max_epochs: int = 10
    early_stop_patience: int = 2
    batch_size: int = 32
    base_checkpoint: str = "t5-base"


def read_prompt_file(path) -> tuple[Optional[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise TrainingError(f"prompt file does not exist: {path}")
    config = None
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                config = rec["_meta"].get("config", config)
                continue
            records.append({"input_text": rec["input_text"],
                            "target_text": rec["target_text"]})
    if not records:
        raise TrainingError(f"empty prompt file: {path}")
    return config, records


def load_model_and_tokenizer(base_checkpoint: str):
    if base_checkpoint == TEST_TINY_CHECKPOINT:
        from transformers import ByT5Tokenizer, T5Config, T5ForConditionalGeneration

        tokenizer = ByT5Tokenizer()
        config = T5Config(
            vocab_size=len(tokenizer), d_model=32, d_ff=64, d_kv=8,
            num_layers=2, num_decoder_layers=2, num_heads=2,
            decoder_start_token_id=0,
        )
        return T5ForConditionalGeneration(config), tokenizer

    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(base_checkpoint)
    model = AutoModelForSeq2SeqLM.from_pretrained(base_checkpoint)
    added = tokenizer.add_special_tokens(
        {"additional_special_tokens": SPECIAL_TOKENS})
    if added:
        model.resize_token_embeddings(len(tokenizer))
    return model, tokenizer


def _make_loader(records, tokenizer, hp, shuffle, generator=None):
    def collate(batch):
        # right truncation keeps the control tokens at the head of the input
        enc = tokenizer([b["input_text"] for b in batch], return_tensors="pt",
                        padding=True, truncation=True,
                        max_length=hp.max_input_tokens)
        targets = tokenizer([b["target_text"] for b in batch],
                            return_tensors="pt", padding=True, truncation=True,
                            max_length=hp.max_output_tokens)
        labels = targets.input_ids.masked_fill(
            targets.input_ids == tokenizer.pad_token_id, -100)
        return enc.input_ids, enc.attention_mask, labels

    return DataLoader(records, batch_size=hp.batch_size, shuffle=shuffle,
                      collate_fn=collate, generator=generator)


@torch.no_grad()
def _validation_loss(model, loader, device) -> float:
    model.eval()
    total, count = 0.0, 0
    for input_ids, attention_mask, labels in loader:
        out = model(input_ids=input_ids.to(device),
                    attention_mask=attention_mask.to(device),
                    labels=labels.to(device))
        total += out.loss.item() * input_ids.size(0)
        count += input_ids.size(0)
    return total / count


def fine_tune(
    train_prompts,
    val_prompts,
    hp: TrainingHyperparams,
    seed: int,
    out_dir,
    overwrite: bool = False,
    device: Optional[str] = None,
) -> Path:
    """Train input_text -> target_text with early stopping on validation loss;
    writes the best checkpoint plus a manifest and returns the directory."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise TrainingError(
            f"checkpoint directory exists (use overwrite): {out_dir}")

    train_config, train_records = read_prompt_file(train_prompts)
    val_config, val_records = read_prompt_file(val_prompts)
    if train_config and val_config and train_config != val_config:
        raise TrainingError(
            f"config mismatch between prompt files: train is "
            f"{train_config!r}, val is {val_config!r}")

    torch.manual_seed(seed)
    random.seed(seed)
    device = device or ("cuda" if torch.cuda.is_available() else "cpu")

    model, tokenizer = load_model_and_tokenizer(hp.base_checkpoint)
    model.to(device)
    generator = torch.Generator().manual_seed(seed)
    train_loader = _make_loader(train_records, tokenizer, hp, shuffle=True,
                                generator=generator)
    val_loader = _make_loader(val_records, tokenizer, hp, shuffle=False)
    optimizer = torch.optim.AdamW(model.parameters(), lr=LEARNING_RATE)

    best_loss = float("inf")
    best_epoch = 0
    best_state = None
    epochs_without_improvement = 0
    final_loss = float("inf")

    for epoch in range(1, hp.max_epochs + 1):
        model.train()
        for input_ids, attention_mask, labels in train_loader:
            optimizer.zero_grad()
            out = model(input_ids=input_ids.to(device),
                        attention_mask=attention_mask.to(device),
                        labels=labels.to(device))
            out.loss.backward()
            optimizer.step()
        final_loss = _validation_loss(model, val_loader, device)
        if final_loss < best_loss:
            best_loss = final_loss
            best_epoch = epoch
            best_state = {k: v.detach().cpu().clone()
                          for k, v in model.state_dict().items()}
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= hp.early_stop_patience:
                break

    model.load_state_dict(best_state)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    manifest = {
        "config": train_config,
        "hyperparams": asdict(hp),
        "seed": seed,
        "best_epoch": best_epoch,
        "best_val_loss": best_loss,
        "final_val_loss": final_loss,
        "optimizer": "adamw",
        "learning_rate": LEARNING_RATE,
        "n_train": len(train_records),
        "n_val": len(val_records),
    }
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out_dir


def read_manifest(checkpoint_dir) -> dict:
    path = Path(checkpoint_dir) / MANIFEST_NAME
    if not path.exists():
        raise TrainingError(f"checkpoint has no manifest: {checkpoint_dir}")
    return json.loads(path.read_text(encoding="utf-8"))
