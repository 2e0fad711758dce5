"""Generation backends: an HTTP client for the /v1/generate wire protocol and
deterministic offline stubs for testing."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

from .errors import BackendError


@dataclass(frozen=True)
class DecodingParams:
    beam_width: int = 5
    max_input_tokens: int = 512
    max_new_tokens: int = 128

    def __post_init__(self):
        for name in ("beam_width", "max_input_tokens", "max_new_tokens"):
            if getattr(self, name) < 1:
                raise BackendError(f"{name} must be a positive integer")


@dataclass(frozen=True)
class GenerationRequest:
    id: str
    input_text: str
    params: DecodingParams = field(default_factory=DecodingParams)

    def __post_init__(self):
        if not self.input_text:
            raise BackendError(f"request {self.id!r}: empty input_text")


@dataclass(frozen=True)
class GenerationResponse:
    id: str
    output_text: str


class StubFallback(Enum):
    ERROR = "error"
    FIXED_STRING = "fixed-string"


def _check_unique_ids(reqs: Sequence[GenerationRequest]):
    seen = set()
    for r in reqs:
        if r.id in seen:
            raise BackendError(f"duplicate request id in batch: {r.id!r}")
        seen.add(r.id)


def stub_generate(
    reqs: Sequence[GenerationRequest],
    table: dict[str, str],
    fallback: StubFallback = StubFallback.ERROR,
    fixed_string: str = "",
) -> list[GenerationResponse]:
    """Deterministic lookup backend; unseen inputs either raise or yield a
    configured constant."""
    _check_unique_ids(reqs)
    out = []
    for r in reqs:
        if r.input_text in table:
            out.append(GenerationResponse(id=r.id, output_text=table[r.input_text]))
        elif fallback is StubFallback.FIXED_STRING:
            out.append(GenerationResponse(id=r.id, output_text=fixed_string))
        else:
            raise BackendError(f"stub backend has no entry for input: {r.input_text!r}")
    return out


class StubBackend:
    """Callable wrapper around stub_generate matching the HttpBackend surface."""

    def __init__(self, table: dict[str, str],
                 fallback: StubFallback = StubFallback.ERROR,
                 fixed_string: str = ""):
        self.table = dict(table)
        self.fallback = fallback
        self.fixed_string = fixed_string

    def generate(self, reqs: Sequence[GenerationRequest]) -> list[GenerationResponse]:
        return stub_generate(reqs, self.table, self.fallback, self.fixed_string)

    @classmethod
    def from_table_file(cls, path, **kwargs) -> "StubBackend":
        table = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "_meta" in rec:
                    continue
                table[rec["input"]] = rec["output"]
        return cls(table, **kwargs)


class HttpBackend:
    """Client for POST /v1/generate; batches requests, retries transient
    transport failures with exponential backoff, and is all-or-nothing."""

    def __init__(
        self,
        endpoint: str,
        batch_size: int = 16,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        bearer_token: Optional[str] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if batch_size < 1:
            raise BackendError("batch_size must be positive")
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.session = requests.Session()
        if bearer_token:
            self.session.headers["Authorization"] = f"Bearer {bearer_token}"
        self._sleep = sleep

    def health(self) -> dict:
        try:
            resp = self.session.get(f"{self.endpoint}/v1/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"backend unreachable: {self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend health check failed: HTTP {resp.status_code}")
        return resp.json()

    def _post_batch(self, inputs: list[str], params: DecodingParams) -> list[str]:
        body = {
            "inputs": inputs,
            "beam_width": params.beam_width,
            "max_input_tokens": params.max_input_tokens,
            "max_new_tokens": params.max_new_tokens,
        }
        url = f"{self.endpoint}/v1/generate"
        last_error: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in (502, 503, 504):
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                detail = resp.text.strip()[:500]
                raise BackendError(
                    f"backend {url} rejected batch: HTTP {resp.status_code}: {detail}"
                )
            outputs = resp.json().get("outputs")
            if not isinstance(outputs, list) or len(outputs) != len(inputs):
                raise BackendError(
                    f"backend {url}: expected {len(inputs)} outputs, got "
                    f"{len(outputs) if isinstance(outputs, list) else 'non-list'}"
                )
            return [str(o) for o in outputs]
        raise BackendError(
            f"backend {url} failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def generate(self, reqs: Sequence[GenerationRequest]) -> list[GenerationResponse]:
        _check_unique_ids(reqs)
        if not reqs:
            return []
        responses: list[GenerationResponse] = []
        i = 0
        while i < len(reqs):
            chunk = list(reqs[i:i + self.batch_size])
            # all requests in one HTTP batch must share decoding params
            by_params: list[list[GenerationRequest]] = []
            for r in chunk:
                if by_params and by_params[-1][0].params == r.params:
                    by_params[-1].append(r)
                else:
                    by_params.append([r])
            for group in by_params:
                outputs = self._post_batch([r.input_text for r in group], group[0].params)
                responses.extend(
                    GenerationResponse(id=r.id, output_text=o)
                    for r, o in zip(group, outputs)
                )
            i += self.batch_size
        return responses


def generate(
    reqs: Sequence[GenerationRequest], endpoint: str, **kwargs
) -> list[GenerationResponse]:
    """One-shot convenience wrapper over HttpBackend."""
    return HttpBackend(endpoint, **kwargs).generate(reqs)
