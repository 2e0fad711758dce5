"""Command-line entry point wiring the pipeline stages.

Exit codes: 0 success, 2 validation error, 3 backend error, 4 evaluation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .backend import DecodingParams, GenerationRequest, HttpBackend, StubBackend
from .controlledtest import (
    SelectionPolicy,
    build_controlled_test,
    load_controlled_test,
    save_controlled_test,
)
from .corpus import Split, corpus_stats, export_corpus, load_corpus, validate_corpus
from .errors import BackendError, EvaluationError, PipelineError, QgcError
from .evaluation import (
    Aggregation,
    GeneratedQA,
    evaluate_qa_controllability,
    evaluate_qg,
    load_report,
    save_report,
)
from .metrics import NormalizationProfile, Smoothing
from .pipeline import (
    EXIT_BACKEND,
    EXIT_EVALUATION,
    EXIT_OK,
    EXIT_VALIDATION,
    PipelineConfig,
    read_jsonl,
    run_pipeline,
)
from .promptspec import ModelConfig, encode_split, parse_generated
from .report import render_report


def _parse_split(value: str) -> Split:
    return Split(value)


def _parse_config(value: str) -> ModelConfig:
    return ModelConfig.from_letter(value)


def _write_or_stdout(text: str, out: str | None):
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_config_file(path: str) -> dict:
    """Flat key=value config file; blank lines and # comments ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise PipelineError(f"{path}:{lineno}: expected key=value",
                                stage="config", exit_code=EXIT_VALIDATION)
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def cmd_ingest(args) -> int:
    corpus = load_corpus(args.in_path, args.format)
    violations = validate_corpus(corpus)
    if violations:
        for v in violations:
            print(f"violation [{v.code}] {v.message}", file=sys.stderr)
        return EXIT_VALIDATION
    export_corpus(corpus, args.out)
    print(f"wrote {args.out}: {len(corpus.stories)} stories, "
          f"{len(corpus.sections)} sections, {len(corpus.qa_pairs)} QA pairs")
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    stats = corpus_stats(corpus)
    doc = {
        "pairs_per_split": {s.value: c for s, c in stats.pairs_per_split.items()},
        "explicit_fraction": stats.explicit_fraction,
        "pairs_per_narrative": {n.value: c for n, c in stats.pairs_per_narrative.items()},
        "mean_sections_per_story": stats.mean_sections_per_story,
        "mean_questions_per_section": stats.mean_questions_per_section,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_encode(args) -> int:
    corpus = load_corpus(args.corpus)
    examples = encode_split(corpus, args.config, args.split)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {
            "stage": "encode", "config": args.config.name,
            "split": args.split.value,
        }}, sort_keys=True) + "\n")
        for ex in examples:
            fh.write(json.dumps({
                "qa_id": ex.source_qa_id,
                "input_text": ex.input_text,
                "target_text": ex.target_text,
            }, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {args.out}: {len(examples)} prompt examples (config {args.config.name})")
    return EXIT_OK


def cmd_build_controlled_test(args) -> int:
    corpus = load_corpus(args.corpus)
    ctest = build_controlled_test(corpus, args.split, args.policy, args.seed)
    save_controlled_test(ctest, args.out)
    summary = ctest.summary
    print(f"wrote {args.out}: {summary.sections_kept} examples "
          f"({summary.sections_skipped} sections without pairs skipped)")
    return EXIT_OK


def cmd_generate(args) -> int:
    _, prompts = read_jsonl(Path(args.prompts))
    params = DecodingParams(beam_width=args.beam,
                            max_input_tokens=args.max_input_tokens,
                            max_new_tokens=args.max_new_tokens)
    reqs = [
        GenerationRequest(id=str(p.get("section_id") or p.get("qa_id")),
                          input_text=p["input_text"], params=params)
        for p in prompts
    ]
    if args.stub:
        backend = StubBackend.from_table_file(args.stub)
    elif args.backend_url:
        backend = HttpBackend(args.backend_url)
    else:
        raise BackendError("either --backend-url or --stub is required")
    responses = backend.generate(reqs)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"stage": "generate"}}, sort_keys=True) + "\n")
        for r in responses:
            fh.write(json.dumps({"section_id": r.id, "output_text": r.output_text},
                                ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {args.out}: {len(responses)} generations")
    return EXIT_OK


def _load_generations(path: str, ctest, config: ModelConfig) -> list[GeneratedQA]:
    _, records = read_jsonl(Path(path))
    generated = []
    for rec in records:
        parsed = parse_generated(config, rec["output_text"])
        example = ctest.example_for(rec["section_id"])
        generated.append(GeneratedQA(
            section_id=rec["section_id"],
            config=config,
            question=parsed.question,
            answer=parsed.answer,
            explicitness=example.explicitness if config.wants_explicitness else None,
            narrative=example.narrative if config.wants_narrative else None,
        ))
    return generated


def cmd_eval_qg(args) -> int:
    ctest = load_controlled_test(args.ctest)
    generated = _load_generations(args.generations, ctest, args.config)
    report = evaluate_qg(generated, ctest, args.agg,
                         smoothing=args.smoothing,
                         scorer_endpoint=args.scorer_url)
    save_report(report, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval_qa(args) -> int:
    ctest = load_controlled_test(args.ctest)
    generated = _load_generations(args.generations, ctest, args.config)
    if args.qa_stub:
        backend = StubBackend.from_table_file(args.qa_stub)
    elif args.qa_backend_url:
        backend = HttpBackend(args.qa_backend_url)
    else:
        raise BackendError("either --qa-backend-url or --qa-stub is required")
    report = evaluate_qa_controllability(generated, backend, ctest)
    save_report(report, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [load_report(p) for p in args.in_paths.split(",")]
    _write_or_stdout(render_report(reports, args.format), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    values: dict = {}
    if args.config_file:
        values = _load_config_file(args.config_file)

    def pick(flag, key, default=None):
        return flag if flag is not None else values.get(key, default)

    corpus_path = pick(args.corpus, "corpus")
    out_dir = pick(args.out_dir, "out_dir", "out")
    if not corpus_path:
        raise PipelineError("no corpus configured", stage="validate",
                            exit_code=EXIT_VALIDATION)
    cfg = PipelineConfig(
        corpus_path=corpus_path,
        out_dir=out_dir,
        corpus_format=pick(args.format, "corpus_format", "canonical-jsonl"),
        config=ModelConfig.from_letter(pick(args.model_config, "config", "F")),
        backend=pick(args.backend, "backend", ""),
        qa_backend=pick(args.qa_backend, "qa_backend", ""),
        split=Split(pick(args.split, "split", "test")),
        policy=SelectionPolicy(pick(args.policy, "policy", "largest-group")),
        seed=int(pick(args.seed, "seed", 13)),
        smoothing=Smoothing(pick(args.smoothing, "smoothing", "epsilon")),
        aggregation=Aggregation(pick(args.agg, "aggregation", "max-over-references")),
        resume=args.resume,
        verbose=args.verbose,
    )
    log = print if args.verbose else (lambda _msg: None)
    return run_pipeline(cfg, log=log)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgc",
        description="Controllable question-generation pipeline and evaluation harness.",
    )
    parser.add_argument("--version", action="version", version=f"qgc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a corpus, write canonical jsonl")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--format", default="canonical-jsonl",
                   choices=["canonical-jsonl", "fairytaleqa-source"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="print corpus summary statistics")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="materialize training prompts for a config")
    p.add_argument("--config", type=_parse_config, required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", type=_parse_split, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("build-controlled-test", help="build the controlled test set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", type=_parse_split, default=Split.TEST)
    p.add_argument("--policy", type=SelectionPolicy, default=SelectionPolicy.LARGEST_GROUP)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_controlled_test)

    p = sub.add_parser("generate", help="run prompts through a generation backend")
    p.add_argument("--prompts", required=True)
    p.add_argument("--backend-url")
    p.add_argument("--stub", help="jsonl lookup table of {input, output} records")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-input-tokens", type=int, default=512)
    p.add_argument("--max-new-tokens", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval-qg", help="reference-based QG scoring")
    p.add_argument("--generations", required=True)
    p.add_argument("--ctest", required=True)
    p.add_argument("--config", type=_parse_config, required=True)
    p.add_argument("--agg", type=Aggregation, default=Aggregation.MAX_OVER_REFERENCES)
    p.add_argument("--smoothing", type=Smoothing, default=Smoothing.EPSILON)
    p.add_argument("--scorer-url", help="external scorer endpoint (optional)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_qg)

    p = sub.add_parser("eval-qa", help="round-trip QA controllability scoring")
    p.add_argument("--generations", required=True)
    p.add_argument("--ctest", required=True)
    p.add_argument("--config", type=_parse_config, required=True)
    p.add_argument("--qa-backend-url")
    p.add_argument("--qa-stub")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_qa)

    p = sub.add_parser("report", help="render evaluation reports")
    p.add_argument("--in", dest="in_paths", required=True,
                   help="comma-separated report json paths (one protocol)")
    p.add_argument("--format", default="text-table",
                   choices=["text-table", "csv", "json"])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--corpus")
    p.add_argument("--format", choices=["canonical-jsonl", "fairytaleqa-source"])
    p.add_argument("--config", dest="model_config")
    p.add_argument("--backend", help="backend URL, stub:<table.jsonl>, or stub:echo-reference")
    p.add_argument("--qa-backend", help="backend URL, stub:<table.jsonl>, or stub:echo-answer")
    p.add_argument("--split")
    p.add_argument("--policy")
    p.add_argument("--seed")
    p.add_argument("--agg")
    p.add_argument("--smoothing")
    p.add_argument("--out-dir")
    p.add_argument("--config-file")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        stage = f" [{exc.stage}]" if exc.stage else ""
        print(f"error{stage}: {exc}", file=sys.stderr)
        return exc.exit_code
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVALUATION
    except QgcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
