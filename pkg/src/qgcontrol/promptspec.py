"""The six input/output prompt schemas (configs A-F) and their inverse parser.

Special tokens ``<QUESTION>``, ``<ANSWER>``, ``<SECTION>``, ``<EX>`` and
``<NAR>`` delimit fields; every token and field is joined by a single ASCII
space, with no trailing whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .corpus import Corpus, ExplicitnessLabel, NarrativeElement, QAPair, Split
from .errors import MalformedOutputError, PromptError

TOKEN_QUESTION = "<QUESTION>"
TOKEN_ANSWER = "<ANSWER>"
TOKEN_SECTION = "<SECTION>"
TOKEN_EX = "<EX>"
TOKEN_NAR = "<NAR>"


class ModelConfig(Enum):
    A = "question-section:answer"
    B = "answer-section:question"
    C = "section:question-answer"
    D = "ex-section:question-answer"
    E = "nar-section:question-answer"
    F = "nar-ex-section:question-answer"

    @property
    def canonical_name(self) -> str:
        return self.value

    @property
    def row_label(self) -> str:
        """Table row label, e.g. ``section:question-answer (C)``."""
        return f"{self.value} ({self.name})"

    @classmethod
    def from_letter(cls, letter: str) -> "ModelConfig":
        try:
            return cls[letter.strip().upper()]
        except KeyError:
            raise PromptError(f"unknown model config: {letter!r}") from None

    @property
    def wants_question_input(self) -> bool:
        return self is ModelConfig.A

    @property
    def wants_answer_input(self) -> bool:
        return self is ModelConfig.B

    @property
    def wants_explicitness(self) -> bool:
        return self in (ModelConfig.D, ModelConfig.F)

    @property
    def wants_narrative(self) -> bool:
        return self in (ModelConfig.E, ModelConfig.F)

    @property
    def emits_question(self) -> bool:
        return self is not ModelConfig.A

    @property
    def emits_answer(self) -> bool:
        return self is not ModelConfig.B


@dataclass(frozen=True)
class PromptExample:
    input_text: str
    target_text: str
    config: ModelConfig
    source_qa_id: Optional[str] = None


@dataclass(frozen=True)
class ParsedOutput:
    question: Optional[str] = None
    answer: Optional[str] = None


def _require(cond: bool, message: str):
    if not cond:
        raise PromptError(message)


def encode_input(
    config: ModelConfig,
    section_text: str,
    question: Optional[str] = None,
    answer: Optional[str] = None,
    explicitness: Optional[ExplicitnessLabel] = None,
    narrative: Optional[NarrativeElement] = None,
) -> str:
    """Build the model input string for a config; exactly the control fields
    the config demands must be supplied, no more."""
    _require(bool(section_text and section_text.strip()), "empty section text")
    _require((question is not None) == config.wants_question_input,
             f"config {config.name}: question {'required' if config.wants_question_input else 'not allowed'}")
    _require((answer is not None) == config.wants_answer_input,
             f"config {config.name}: answer {'required' if config.wants_answer_input else 'not allowed'}")
    _require((explicitness is not None) == config.wants_explicitness,
             f"config {config.name}: explicitness {'required' if config.wants_explicitness else 'not allowed'}")
    _require((narrative is not None) == config.wants_narrative,
             f"config {config.name}: narrative {'required' if config.wants_narrative else 'not allowed'}")

    parts: list[str] = []
    if config is ModelConfig.A:
        parts += [TOKEN_QUESTION, question]
    elif config is ModelConfig.B:
        parts += [TOKEN_ANSWER, answer]
    if config.wants_narrative:
        parts += [TOKEN_NAR, narrative.value]
    if config.wants_explicitness:
        parts += [TOKEN_EX, explicitness.value]
    parts += [TOKEN_SECTION, section_text]
    return " ".join(parts)


def encode_target(
    config: ModelConfig,
    question: Optional[str] = None,
    answer: Optional[str] = None,
) -> str:
    """Build the training/reference target string for a config."""
    if config is ModelConfig.A:
        _require(answer is not None, "config A target requires an answer")
        return f"{TOKEN_ANSWER} {answer}"
    if config is ModelConfig.B:
        _require(question is not None, "config B target requires a question")
        return f"{TOKEN_QUESTION} {question}"
    _require(question is not None and answer is not None,
             f"config {config.name} target requires question and answer")
    return f"{TOKEN_QUESTION} {question} {TOKEN_ANSWER} {answer}"


def parse_generated(config: ModelConfig, generated: str) -> ParsedOutput:
    """Inverse of encode_target: split on the first occurrence of each expected
    output token and trim surrounding whitespace."""
    text = generated.strip()
    if config is ModelConfig.A:
        if not text.startswith(TOKEN_ANSWER):
            raise MalformedOutputError(
                f"expected leading {TOKEN_ANSWER}", raw=generated)
        return ParsedOutput(answer=text[len(TOKEN_ANSWER):].strip())
    if config is ModelConfig.B:
        if not text.startswith(TOKEN_QUESTION):
            raise MalformedOutputError(
                f"expected leading {TOKEN_QUESTION}", raw=generated)
        return ParsedOutput(question=text[len(TOKEN_QUESTION):].strip())
    if not text.startswith(TOKEN_QUESTION):
        raise MalformedOutputError(
            f"expected leading {TOKEN_QUESTION}", raw=generated)
    rest = text[len(TOKEN_QUESTION):]
    if TOKEN_ANSWER not in rest:
        raise MalformedOutputError(
            f"missing {TOKEN_ANSWER} in question-answer output", raw=generated)
    question, answer = rest.split(TOKEN_ANSWER, 1)
    return ParsedOutput(question=question.strip(), answer=answer.strip())


def example_from_pair(config: ModelConfig, pair: QAPair, section_text: str) -> PromptExample:
    """Materialize one training example (input, target) for a labeled QA pair."""
    return PromptExample(
        input_text=encode_input(
            config,
            section_text,
            question=pair.question if config.wants_question_input else None,
            answer=pair.answer if config.wants_answer_input else None,
            explicitness=pair.explicitness if config.wants_explicitness else None,
            narrative=pair.narrative if config.wants_narrative else None,
        ),
        target_text=encode_target(
            config,
            question=pair.question if config.emits_question else None,
            answer=pair.answer if config.emits_answer else None,
        ),
        config=config,
        source_qa_id=pair.id,
    )


def encode_split(corpus: Corpus, config: ModelConfig, split: Split) -> list[PromptExample]:
    """Training examples for every QA pair of a split, in corpus order."""
    return [
        example_from_pair(config, pair, corpus.section(pair.section_id).text)
        for pair in corpus.pairs_in_split(split)
    ]
