"""Completion environments: a deterministic mock oracle and an HTTP client.

The mock parses the rendered prompt back into its in-context examples and
final instruction using the active template, then echoes the response of
the example whose query is nearest (by embedding cosine) to the final
instruction. Including the right example therefore yields the expected
answer verbatim, which gives training runs a checkable optimum without
any external API.
"""
from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field

import httpx

from .corpus import CandidateExample
from .embedder import Embedder, cosine
from .errors import ArgumentError, ProtocolError, RequestError, TransportError
from .promptgen import PromptTemplate, default_template


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.0
    model: str | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ArgumentError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0.0:
            raise ArgumentError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency_ms: float
    provider_meta: dict = field(default_factory=dict)


def _block_regex(block: str, names: tuple[str, ...]) -> str:
    pattern = re.escape(block)
    for name in names:
        pattern = pattern.replace(re.escape("{" + name + "}"), f"(?P<{name}>.+?)", 1)
    return pattern


class MockEchoEnv:
    """Parses the prompt and echoes the nearest in-context example's response."""

    def __init__(self, embedder: Embedder, template: PromptTemplate | None = None):
        self._embedder = embedder
        template = template or default_template()
        self._template = template
        joiner = re.escape(template.joiner)
        self._preamble_re = (
            re.compile(re.escape(template.preamble) + joiner, re.DOTALL) if template.preamble else None
        )
        self._example_res = [
            re.compile(_block_regex(template.example_block, ("query", "context", "response")) + joiner, re.DOTALL),
            re.compile(_block_regex(template.example_block_no_context, ("query", "response")) + joiner, re.DOTALL),
        ]
        self._query_re = re.compile(_block_regex(template.query_block, ("query",)) + r"\Z", re.DOTALL)

    def parse_prompt(self, prompt: str) -> tuple[list[CandidateExample], str]:
        pos = 0
        if self._preamble_re is not None:
            matched = self._preamble_re.match(prompt, pos)
            if not matched:
                raise ProtocolError("prompt does not start with the template preamble")
            pos = matched.end()
        examples: list[CandidateExample] = []
        while True:
            # both block variants can shadow each other through their
            # non-greedy groups; take the shortest match, preferring the
            # with-context variant when both end at the same offset
            candidates = [
                (m.end(), variant, m)
                for variant, pattern in enumerate(self._example_res)
                if (m := pattern.match(prompt, pos))
            ]
            if not candidates:
                break
            _, _, matched = min(candidates, key=lambda item: (item[0], item[1]))
            groups = matched.groupdict()
            examples.append(
                CandidateExample(
                    query=groups["query"],
                    context=groups.get("context"),
                    response=groups["response"],
                )
            )
            pos = matched.end()
        final = self._query_re.match(prompt, pos)
        if not final:
            raise ProtocolError(f"prompt tail does not match the query block (offset {pos})")
        return examples, final.group("query")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        start = time.perf_counter()
        examples, final_query = self.parse_prompt(request.prompt)
        if not examples:
            return CompletionResponse(
                text="",
                latency_ms=(time.perf_counter() - start) * 1000.0,
                provider_meta={"provider": "mock", "examples": 0},
            )
        query_vec = self._embedder.embed_text(final_query)
        best_idx = 0
        best_sim = -2.0
        for idx, example in enumerate(examples):
            sim = cosine(self._embedder.embed_text(example.query), query_vec)
            if sim > best_sim:  # ties keep the earlier example
                best_idx, best_sim = idx, sim
        return CompletionResponse(
            text=examples[best_idx].response,
            latency_ms=(time.perf_counter() - start) * 1000.0,
            provider_meta={"provider": "mock", "examples": len(examples), "matched_index": best_idx},
        )


class HttpChatEnv:
    """Chat-completions client with bounded retries and concurrency."""

    max_attempts = 3
    backoff_base_s = 0.5

    def __init__(
        self,
        base_url: str,
        model: str,
        token_env: str | None = None,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        import threading

        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = model
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max_in_flight)
        headers = {}
        token = os.environ.get(token_env, "") if token_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(transport=transport, headers=headers, timeout=60.0)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body = {
            "model": request.model or self._model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        start = time.perf_counter()
        last_detail = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._semaphore:
                    response = self._client.post(self._url, json=body)
            except httpx.HTTPError as exc:
                last_detail = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    text = response.json()["choices"][0]["message"]["content"]
                    return CompletionResponse(
                        text=text,
                        latency_ms=(time.perf_counter() - start) * 1000.0,
                        provider_meta={"provider": "http", "attempts": attempt, "status": 200},
                    )
                if response.status_code == 429 or response.status_code >= 500:
                    last_detail = f"HTTP {response.status_code}"
                else:
                    raise RequestError(
                        f"completion rejected: HTTP {response.status_code}: {response.text[:200]}",
                        status=response.status_code,
                    )
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
        raise TransportError(
            f"completion failed after {self.max_attempts} attempts: {last_detail}",
            attempts=self.max_attempts,
        )
