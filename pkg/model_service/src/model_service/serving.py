"""Serve a fine-tuned checkpoint behind POST /v1/generate and GET /v1/health."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .training import read_manifest


class GenerateBody(BaseModel):
    inputs: list[str] = Field(min_length=1)
    beam_width: Optional[int] = None
    max_input_tokens: Optional[int] = None
    max_new_tokens: Optional[int] = None


class CheckpointRunner:
    def __init__(self, checkpoint_dir, device: Optional[str] = None):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        checkpoint_dir = Path(checkpoint_dir)
        self.manifest = read_manifest(checkpoint_dir)
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint_dir)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(checkpoint_dir)
        self.model.to(self.device)
        self.model.eval()
        hp = self.manifest["hyperparams"]
        self.defaults = {
            "beam_width": 5,
            "max_input_tokens": hp["max_input_tokens"],
            "max_new_tokens": hp["max_output_tokens"],
        }

    @property
    def model_name(self) -> str:
        config = self.manifest.get("config") or "?"
        return f"{self.manifest['hyperparams']['base_checkpoint']}:{config}"

    @torch.no_grad()
    def generate(self, inputs: list[str], beam_width: int,
                 max_input_tokens: int, max_new_tokens: int) -> list[str]:
        enc = self.tokenizer(inputs, return_tensors="pt", padding=True,
                             truncation=True, max_length=max_input_tokens)
        out = self.model.generate(
            input_ids=enc.input_ids.to(self.device),
            attention_mask=enc.attention_mask.to(self.device),
            num_beams=beam_width,
            max_new_tokens=max_new_tokens,
            do_sample=False,
        )
        return self.tokenizer.batch_decode(out, skip_special_tokens=True)


def create_app(runner: CheckpointRunner) -> FastAPI:
    app = FastAPI(title="question-generation model service")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model": runner.model_name}

    @app.post("/v1/generate")
    def generate(body: GenerateBody):
        params = {
            key: getattr(body, key) if getattr(body, key) is not None
            else runner.defaults[key]
            for key in ("beam_width", "max_input_tokens", "max_new_tokens")
        }
        for key, value in params.items():
            if value < 1:
                return JSONResponse(
                    status_code=400,
                    content={"error": f"{key} must be a positive integer"})
        if any(not text for text in body.inputs):
            return JSONResponse(status_code=400,
                                content={"error": "inputs must be non-empty"})
        try:
            outputs = runner.generate(body.inputs, **params)
        except torch.cuda.OutOfMemoryError:
            return JSONResponse(status_code=503,
                                content={"error": "server overloaded"})
        return {"outputs": outputs}

    return app


def serve(checkpoint_dir, port: int, host: str = "127.0.0.1",
          device: Optional[str] = None):
    import uvicorn

    runner = CheckpointRunner(checkpoint_dir, device=device)
    uvicorn.run(create_app(runner), host=host, port=port)
