"""One-shot pipeline: ingest -> controlled test -> prompts -> generate ->
eval-qg / eval-qa -> rendered report, with digest-based resume.

Every artifact embeds a digest of its inputs; ``--resume`` skips a stage only
when the stored digest matches the recomputed one.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .backend import (
    DecodingParams,
    GenerationRequest,
    HttpBackend,
    StubBackend,
    StubFallback,
)
from .controlledtest import (
    ControlledTestSet,
    SelectionPolicy,
    build_controlled_test,
    load_controlled_test,
    save_controlled_test,
)
from .corpus import Split, export_corpus, load_corpus, validate_corpus
from .errors import (
    BackendError,
    EvaluationError,
    PipelineError,
    QgcError,
)
from .evaluation import (
    Aggregation,
    GeneratedQA,
    evaluate_qa_controllability,
    evaluate_qg,
    load_report,
    save_report,
)
from .metrics import NormalizationProfile, Smoothing
from .promptspec import (
    ModelConfig,
    TOKEN_ANSWER,
    encode_input,
    encode_target,
    parse_generated,
)
from .report import render_report

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_EVALUATION = 4

STUB_ECHO_REFERENCE = "stub:echo-reference"
STUB_ECHO_ANSWER = "stub:echo-answer"

ENV_BACKEND_URL = "QGC_BACKEND_URL"


@dataclass
class PipelineConfig:
    corpus_path: str
    out_dir: str
    config: ModelConfig = ModelConfig.F
    corpus_format: str = "canonical-jsonl"
    backend: str = ""
    qa_backend: str = ""
    split: Split = Split.TEST
    policy: SelectionPolicy = SelectionPolicy.LARGEST_GROUP
    seed: int = 13
    profile: NormalizationProfile = field(default_factory=NormalizationProfile)
    smoothing: Smoothing = Smoothing.EPSILON
    aggregation: Aggregation = Aggregation.MAX_OVER_REFERENCES
    decoding: DecodingParams = field(default_factory=DecodingParams)
    resume: bool = False
    verbose: bool = False

    def validate(self):
        if not Path(self.corpus_path).exists():
            raise PipelineError(
                f"corpus path does not exist: {self.corpus_path}",
                stage="validate", exit_code=EXIT_VALIDATION)
        if not self.backend:
            self.backend = os.environ.get(ENV_BACKEND_URL, "")
        if not self.backend:
            raise PipelineError("no generation backend configured",
                                stage="validate", exit_code=EXIT_VALIDATION)
        if not self.qa_backend:
            raise PipelineError("no QA backend configured",
                                stage="validate", exit_code=EXIT_VALIDATION)
        if not (self.config.emits_question and self.config.emits_answer):
            raise PipelineError(
                f"pipeline requires a question-answer config (C-F), got {self.config.name}",
                stage="validate", exit_code=EXIT_VALIDATION)


def _digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
        h.update(b"\x00")
    return h.hexdigest()


def _file_bytes(path: Path) -> bytes:
    return path.read_bytes()


def read_jsonl(path: Path) -> tuple[Optional[dict], list[dict]]:
    meta, records = None, []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                meta = rec["_meta"]
            else:
                records.append(rec)
    return meta, records


def _write_jsonl(path: Path, meta: dict, records: list[dict]):
    partial = path.with_suffix(path.suffix + ".partial")
    with partial.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": meta}, ensure_ascii=False, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    partial.replace(path)


def _stored_digest(path: Path) -> Optional[str]:
    if not path.exists():
        return None
    try:
        if path.suffix == ".jsonl":
            meta, _ = read_jsonl(path)
            return (meta or {}).get("input_digest")
        if path.suffix == ".json":
            doc = json.loads(path.read_text(encoding="utf-8"))
            return doc.get("metadata", {}).get("input_digest")
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.startswith("input_digest="):
                return line.split("=", 1)[1]
    except (OSError, json.JSONDecodeError):
        return None
    return None


class PipelineRunner:
    def __init__(self, cfg: PipelineConfig, log: Callable[[str], None] = print):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.log = log
        self.stage_status: dict[str, str] = {}

    def _path(self, name: str) -> Path:
        return self.out / name

    def _should_skip(self, path: Path, digest: str, stage: str) -> bool:
        if self.cfg.resume and _stored_digest(path) == digest:
            self.stage_status[stage] = "skipped"
            self.log(f"[{stage}] skipped (digest match): {path.name}")
            return True
        self.stage_status[stage] = "ran"
        return False

    def run(self) -> int:
        cfg = self.cfg
        cfg.validate()
        self.out.mkdir(parents=True, exist_ok=True)

        corpus_file = self._stage_ingest()
        ctest_file = self._stage_controlled_test(corpus_file)
        prompts_file = self._stage_prompts(ctest_file)
        generations_file = self._stage_generate(ctest_file, prompts_file)
        qg_report_file = self._stage_eval_qg(ctest_file, generations_file)
        qa_report_file = self._stage_eval_qa(ctest_file, generations_file)
        self._stage_report(qg_report_file, qa_report_file)
        return EXIT_OK

    # -- stages ------------------------------------------------------------

    def _stage_ingest(self) -> Path:
        cfg = self.cfg
        out = self._path("corpus.jsonl")
        stage = "ingest"
        src = Path(cfg.corpus_path)
        if src.is_dir():
            src_bytes = b"".join(
                _file_bytes(p) for p in sorted(src.rglob("*")) if p.is_file())
        else:
            src_bytes = _file_bytes(src)
        digest = _digest(src_bytes, cfg.corpus_format.encode())
        if self._should_skip(out, digest, stage):
            return out
        try:
            corpus = load_corpus(cfg.corpus_path, cfg.corpus_format)
            violations = validate_corpus(corpus)
            if violations:
                raise PipelineError(
                    f"corpus failed validation: {violations[0].message} "
                    f"({len(violations)} violations)",
                    stage=stage, exit_code=EXIT_VALIDATION)
            partial = out.with_suffix(out.suffix + ".partial")
            export_corpus(corpus, partial)
            with partial.open("r+", encoding="utf-8") as fh:
                body = fh.read()
                fh.seek(0)
                fh.write(json.dumps(
                    {"_meta": {"stage": stage, "input_digest": digest}},
                    sort_keys=True) + "\n" + body)
            partial.replace(out)
        except QgcError as exc:
            if isinstance(exc, PipelineError):
                raise
            raise PipelineError(str(exc), stage=stage,
                                exit_code=EXIT_VALIDATION) from exc
        self.log(f"[{stage}] wrote {out.name}")
        return out

    def _stage_controlled_test(self, corpus_file: Path) -> Path:
        cfg = self.cfg
        out = self._path("ctest.jsonl")
        stage = "build-controlled-test"
        digest = _digest(_file_bytes(corpus_file),
                         f"{cfg.split.value}|{cfg.policy.value}|{cfg.seed}".encode())
        if self._should_skip(out, digest, stage):
            return out
        corpus = load_corpus(corpus_file)
        ctest = build_controlled_test(corpus, cfg.split, cfg.policy, cfg.seed)
        partial = out.with_suffix(out.suffix + ".partial")
        save_controlled_test(ctest, partial)
        with partial.open("r+", encoding="utf-8") as fh:
            lines = fh.read().splitlines(keepends=True)
            first = json.loads(lines[0])
            first["_meta"]["input_digest"] = digest
            first["_meta"]["stage"] = stage
            fh.seek(0)
            fh.truncate()
            fh.write(json.dumps(first, ensure_ascii=False, sort_keys=True) + "\n")
            fh.writelines(lines[1:])
        partial.replace(out)
        self.log(f"[{stage}] wrote {out.name} ({len(ctest.examples)} examples)")
        return out

    def _stage_prompts(self, ctest_file: Path) -> Path:
        cfg = self.cfg
        out = self._path("prompts.jsonl")
        stage = "encode"
        digest = _digest(_file_bytes(ctest_file), cfg.config.name.encode())
        if self._should_skip(out, digest, stage):
            return out
        ctest = load_controlled_test(ctest_file)
        records = [
            {
                "section_id": ex.section_id,
                "input_text": encode_input(
                    cfg.config,
                    ex.section_text,
                    explicitness=ex.explicitness if cfg.config.wants_explicitness else None,
                    narrative=ex.narrative if cfg.config.wants_narrative else None,
                ),
            }
            for ex in ctest.examples
        ]
        _write_jsonl(out, {"stage": stage, "config": cfg.config.name,
                           "input_digest": digest}, records)
        self.log(f"[{stage}] wrote {out.name} ({len(records)} prompts)")
        return out

    def _make_backend(self, spec: str, ctest_file: Path, role: str):
        if spec == STUB_ECHO_REFERENCE:
            ctest = load_controlled_test(ctest_file)
            table = {}
            for ex in ctest.examples:
                input_text = encode_input(
                    self.cfg.config, ex.section_text,
                    explicitness=ex.explicitness if self.cfg.config.wants_explicitness else None,
                    narrative=ex.narrative if self.cfg.config.wants_narrative else None)
                first = ex.reference_pairs[0]
                table[input_text] = encode_target(
                    self.cfg.config, question=first.question, answer=first.answer)
            return StubBackend(table)
        if spec == STUB_ECHO_ANSWER:
            # resolved lazily in the eval-qa stage; needs the generations
            raise PipelineError(
                f"{STUB_ECHO_ANSWER} is only valid as a QA backend",
                stage=role, exit_code=EXIT_VALIDATION)
        if spec.startswith("stub:"):
            return StubBackend.from_table_file(spec[len("stub:"):])
        return HttpBackend(spec)

    def _stage_generate(self, ctest_file: Path, prompts_file: Path) -> Path:
        cfg = self.cfg
        out = self._path("generations.jsonl")
        stage = "generate"
        digest = _digest(
            _file_bytes(prompts_file),
            f"{cfg.backend}|{cfg.decoding.beam_width}|"
            f"{cfg.decoding.max_input_tokens}|{cfg.decoding.max_new_tokens}".encode())
        if self._should_skip(out, digest, stage):
            return out
        _, prompts = read_jsonl(prompts_file)
        backend = self._make_backend(cfg.backend, ctest_file, stage)
        reqs = [GenerationRequest(id=p["section_id"], input_text=p["input_text"],
                                  params=cfg.decoding) for p in prompts]
        try:
            responses = backend.generate(reqs)
        except BackendError as exc:
            raise PipelineError(str(exc), stage=stage,
                                exit_code=EXIT_BACKEND) from exc
        records = [{"section_id": r.id, "output_text": r.output_text}
                   for r in responses]
        _write_jsonl(out, {"stage": stage, "config": cfg.config.name,
                           "input_digest": digest}, records)
        self.log(f"[{stage}] wrote {out.name} ({len(records)} generations)")
        return out

    def _load_generated(self, ctest: ControlledTestSet,
                        generations_file: Path) -> list[GeneratedQA]:
        cfg = self.cfg
        _, records = read_jsonl(generations_file)
        generated = []
        for rec in records:
            parsed = parse_generated(cfg.config, rec["output_text"])
            example = ctest.example_for(rec["section_id"])
            generated.append(GeneratedQA(
                section_id=rec["section_id"],
                config=cfg.config,
                question=parsed.question,
                answer=parsed.answer,
                explicitness=example.explicitness if cfg.config.wants_explicitness else None,
                narrative=example.narrative if cfg.config.wants_narrative else None,
            ))
        return generated

    def _stage_eval_qg(self, ctest_file: Path, generations_file: Path) -> Path:
        cfg = self.cfg
        out = self._path("report_qg.json")
        stage = "eval-qg"
        digest = _digest(_file_bytes(ctest_file), _file_bytes(generations_file),
                         f"{cfg.aggregation.value}|{cfg.smoothing.value}".encode())
        if self._should_skip(out, digest, stage):
            return out
        ctest = load_controlled_test(ctest_file)
        try:
            generated = self._load_generated(ctest, generations_file)
            report = evaluate_qg(generated, ctest, cfg.aggregation,
                                 cfg.profile, cfg.smoothing)
        except QgcError as exc:
            raise PipelineError(str(exc), stage=stage,
                                exit_code=EXIT_EVALUATION) from exc
        report.metadata["input_digest"] = digest
        partial = out.with_suffix(out.suffix + ".partial")
        save_report(report, partial)
        partial.replace(out)
        self.log(f"[{stage}] wrote {out.name}")
        return out

    def _stage_eval_qa(self, ctest_file: Path, generations_file: Path) -> Path:
        cfg = self.cfg
        out = self._path("report_qa.json")
        stage = "eval-qa"
        digest = _digest(_file_bytes(ctest_file), _file_bytes(generations_file),
                         cfg.qa_backend.encode())
        if self._should_skip(out, digest, stage):
            return out
        ctest = load_controlled_test(ctest_file)
        try:
            generated = self._load_generated(ctest, generations_file)
            if cfg.qa_backend == STUB_ECHO_ANSWER:
                table = {
                    encode_input(ModelConfig.A,
                                 ctest.example_for(g.section_id).section_text,
                                 question=g.question): f"{TOKEN_ANSWER} {g.answer}"
                    for g in generated
                }
                qa_backend = StubBackend(table, StubFallback.FIXED_STRING,
                                         fixed_string=f"{TOKEN_ANSWER} ")
            else:
                qa_backend = self._make_backend(cfg.qa_backend, ctest_file, stage)
            report = evaluate_qa_controllability(
                generated, qa_backend, ctest, cfg.profile, cfg.decoding)
        except BackendError as exc:
            raise PipelineError(str(exc), stage=stage,
                                exit_code=EXIT_BACKEND) from exc
        except QgcError as exc:
            if isinstance(exc, PipelineError):
                raise
            raise PipelineError(str(exc), stage=stage,
                                exit_code=EXIT_EVALUATION) from exc
        report.metadata["input_digest"] = digest
        partial = out.with_suffix(out.suffix + ".partial")
        save_report(report, partial)
        partial.replace(out)
        self.log(f"[{stage}] wrote {out.name}")
        return out

    def _stage_report(self, qg_report_file: Path, qa_report_file: Path) -> Path:
        out = self._path("report.txt")
        stage = "report"
        digest = _digest(_file_bytes(qg_report_file), _file_bytes(qa_report_file))
        if self._should_skip(out, digest, stage):
            return out
        qa_text = render_report([load_report(qa_report_file)], "text-table")
        qg_text = render_report([load_report(qg_report_file)], "text-table")
        partial = out.with_suffix(out.suffix + ".partial")
        partial.write_text(
            qa_text + "\n" + qg_text + f"\ninput_digest={digest}\n",
            encoding="utf-8")
        partial.replace(out)
        self.log(f"[{stage}] wrote {out.name}")
        return out


def run_pipeline(cfg: PipelineConfig, log: Callable[[str], None] = print) -> int:
    return PipelineRunner(cfg, log).run()
