"""Prompt assembly and generator-service clients.

Prompts are emitted as role-tagged messages; applying the model's chat
template is the service's job. The wire protocol is the chat-completions
JSON shape, with teacher-forced scoring done via echo-with-logprobs on the
concatenated context + continuation.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import httpx

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM_TEMPLATE = (
    "Answer the question based on the given passage. Only give me the answer "
    "and do not output any other words.{retrieval_passages}"
)
DEFAULT_PASSAGE_HEADER = "The following are given passages:"
DEFAULT_DOC_FORMAT = "Doc {index} (Title: {title}) {content}"
DEFAULT_USER_TEMPLATE = "Question: {question}"


class GenerationError(RuntimeError):
    """Generator service failure after retries."""


class PromptTooLongError(GenerationError):
    def __init__(self, token_count: int, limit: int):
        super().__init__(f"prompt is {token_count} tokens, limit {limit}")
        self.token_count = token_count
        self.limit = limit


class UnsupportedCapabilityError(RuntimeError):
    """The configured generator does not advertise a required capability."""


@dataclass(frozen=True)
class PromptTemplate:
    """System/user templates plus the per-document listing format.

    With zero passages the whole passage block (header included) is omitted,
    which is the naive-generation prompt.
    """

    system_template: str = DEFAULT_SYSTEM_TEMPLATE
    user_template: str = DEFAULT_USER_TEMPLATE
    doc_format: str = DEFAULT_DOC_FORMAT
    passage_header: str = DEFAULT_PASSAGE_HEADER

    def __post_init__(self) -> None:
        for template, slot in (
            (self.system_template, "{retrieval_passages}"),
            (self.user_template, "{question}"),
        ):
            if template.count(slot) != 1:
                raise ValueError(f"template must contain {slot} exactly once")
        for slot in ("{index}", "{title}", "{content}"):
            if self.doc_format.count(slot) != 1:
                raise ValueError(f"doc_format must contain {slot} exactly once")


def build_prompt(question: str, passages: list, template: PromptTemplate | None = None) -> list[dict]:
    """Pure function: question + ordered passages -> role-tagged messages."""
    template = template or PromptTemplate()
    if passages:
        docs = "\n".join(
            template.doc_format.format(index=i, title=p.title, content=p.contents)
            for i, p in enumerate(passages, 1)
        )
        block = f"\n{template.passage_header}\n{docs}" if template.passage_header else f"\n{docs}"
    else:
        block = ""
    return [
        {"role": "system", "content": template.system_template.format(retrieval_passages=block)},
        {"role": "user", "content": template.user_template.format(question=question)},
    ]


def build_prompt_from_text(
    question: str, reference: str, template: PromptTemplate | None = None
) -> list[dict]:
    """Prompt with a pre-rendered reference block (e.g. refiner output)."""
    template = template or PromptTemplate()
    if reference:
        block = (
            f"\n{template.passage_header}\n{reference}"
            if template.passage_header
            else f"\n{reference}"
        )
    else:
        block = ""
    return [
        {"role": "system", "content": template.system_template.format(retrieval_passages=block)},
        {"role": "user", "content": template.user_template.format(question=question)},
    ]


@dataclass(frozen=True)
class GenerationParams:
    max_input_tokens: int = 2048
    max_new_tokens: int = 32
    temperature: float = 0.0
    logprobs: bool = False
    stop: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class GenerationOutput:
    text: str
    token_count: int
    prompt_tokens: int = 0
    token_logprobs: list[tuple[str, float]] | None = None


@runtime_checkable
class GeneratorClient(Protocol):
    supports_logprobs: bool
    supports_scoring: bool

    def generate(self, messages: list[dict], params: GenerationParams) -> GenerationOutput: ...

    def score_sequence(self, context: list[dict], continuation: str) -> float: ...


def estimate_tokens(messages: list[dict]) -> int:
    """Whitespace token estimate, used when the service reports no usage."""
    return sum(len(m["content"].split()) for m in messages)


def score_sequence(client: GeneratorClient, context: list[dict], continuation: str) -> float:
    """Total logprob of the continuation teacher-forced after the context."""
    if not getattr(client, "supports_scoring", False):
        raise UnsupportedCapabilityError("generator client does not support sequence scoring")
    if not continuation:
        return 0.0
    return client.score_sequence(context, continuation)


def _match_continuation_logprobs(
    entries: list[tuple[str, float]], continuation: str
) -> list[float]:
    """Pick the trailing echoed tokens whose concatenation is the continuation."""
    target = "".join(continuation.split())
    acc = ""
    out: list[float] = []
    for token, logprob in reversed(entries):
        out.append(logprob)
        acc = "".join(token.split()) + acc
        if acc == target:
            return list(reversed(out))
        if len(acc) > len(target):
            break
    raise GenerationError("echoed tokens do not align with the scored continuation")


class HttpGeneratorClient:
    """Chat-completions client over HTTP JSON with retries.

    ``endpoint`` is the API base (e.g. http://host:port/v1); the client posts
    to ``<endpoint>/chat/completions``.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 30.0,
        max_retries: int = 2,
        supports_logprobs: bool = True,
        supports_scoring: bool = True,
        http: httpx.Client | None = None,
        api_key: str | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.supports_logprobs = supports_logprobs
        self.supports_scoring = supports_scoring
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = http or httpx.Client(timeout=timeout, headers=headers)

    def _post(self, payload: dict) -> dict:
        url = f"{self.endpoint}/chat/completions"
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._http.post(url, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt < self.max_retries:
                    time.sleep(0.1 * (attempt + 1))
                continue
            if resp.status_code == 400:
                detail = resp.json().get("error", {})
                if detail.get("type") == "context_length_exceeded":
                    raise PromptTooLongError(detail.get("token_count", -1), detail.get("limit", -1))
            if resp.status_code >= 500 and attempt < self.max_retries:
                last_exc = GenerationError(f"server error {resp.status_code}")
                time.sleep(0.1 * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise GenerationError(f"generator returned {resp.status_code}: {resp.text[:200]}")
            return resp.json()
        raise GenerationError(f"generator unreachable after {self.max_retries + 1} attempts") from last_exc

    def generate(self, messages: list[dict], params: GenerationParams) -> GenerationOutput:
        prompt_estimate = estimate_tokens(messages)
        if prompt_estimate > params.max_input_tokens:
            raise PromptTooLongError(prompt_estimate, params.max_input_tokens)
        payload: dict = {
            "model": self.model,
            "messages": messages,
            "max_tokens": params.max_new_tokens,
            "temperature": params.temperature,
        }
        if params.logprobs:
            payload["logprobs"] = True
        if params.stop:
            payload["stop"] = list(params.stop)
        data = self._post(payload)
        choice = data["choices"][0]
        text = choice["message"]["content"]
        usage = data.get("usage") or {}
        token_logprobs = None
        if choice.get("logprobs"):
            token_logprobs = [
                (entry["token"], float(entry["logprob"]))
                for entry in choice["logprobs"]["content"]
            ]
        return GenerationOutput(
            text=text,
            token_count=usage.get("completion_tokens", len(text.split())),
            prompt_tokens=usage.get("prompt_tokens", prompt_estimate),
            token_logprobs=token_logprobs,
        )

    def echo_logprobs(self, messages: list[dict]) -> list[tuple[str, float]]:
        """Per-token logprobs for the prompt itself (echo mode, no sampling)."""
        payload = {
            "model": self.model,
            "messages": messages,
            "max_tokens": 0,
            "temperature": 0.0,
            "logprobs": True,
            "echo": True,
        }
        data = self._post(payload)
        return [
            (e["token"], float(e["logprob"]))
            for e in data["choices"][0]["logprobs"]["content"]
        ]

    def score_sequence(self, context: list[dict], continuation: str) -> float:
        if not continuation:
            return 0.0
        entries = self.echo_logprobs(context + [{"role": "assistant", "content": continuation}])
        return sum(_match_continuation_logprobs(entries, continuation))


def make_generator_client(endpoint: str, model: str, **kwargs) -> HttpGeneratorClient:
    """Build a generator client; ``mock://`` endpoints run in-process."""
    if endpoint.startswith("mock://"):
        from .mockserver import mock_http_client

        return HttpGeneratorClient("http://mock/v1", model, http=mock_http_client(), **kwargs)
    return HttpGeneratorClient(endpoint, model, **kwargs)
