"""Agent backends and the rerun policy that re-solicits unparseable output."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import httpx

from ..errors import (
    AuthError,
    BackendTimeout,
    BackendUnavailable,
    ParseFailure,
    PlaybookExhausted,
    RerunExhausted,
)
from ..tokens import count_tokens
from .parsing import ParsedResponse, parse_response, render_raw
from .prompts import SUMMARY_KINDS, PromptContext, PromptKind, build_prompt, retry_prompt

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.8
DEFAULT_TOP_P = 1.0


@dataclass(frozen=True)
class CompletionRequest:
    """Everything a backend may know: the rendered prompt plus answer options."""

    kind: PromptKind
    prompt: str
    language: str = "en"
    candidates: tuple[str, ...] = ()
    locations: tuple[str, ...] = ()
    attempt: int = 0


class AgentBackend:
    """Behavioural contract for a completion source.

    Subclasses implement ``_complete``; usage defaults to the token heuristic
    unless the subclass records provider numbers.
    """

    name = "backend"

    def __init__(self) -> None:
        self._usage: dict[int, tuple[int, int]] = {}
        self._usage_lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        text = self._complete(request)
        with self._usage_lock:
            self._usage.setdefault(id(request), (count_tokens(request.prompt), count_tokens(text)))
        return text

    def _complete(self, request: CompletionRequest) -> str:
        raise NotImplementedError

    def _record_usage(self, request: CompletionRequest, usage: tuple[int, int]) -> None:
        with self._usage_lock:
            self._usage[id(request)] = usage

    def usage(self, request: CompletionRequest) -> tuple[int, int]:
        """(input_tokens, output_tokens) for a request already completed."""
        with self._usage_lock:
            found = self._usage.pop(id(request), None)
        return found if found is not None else (count_tokens(request.prompt), 0)


class ScriptedBackend(AgentBackend):
    """Replays canned raw outputs.

    ``plays`` is either one ordered list consumed by every solicitation, or
    a mapping from prompt kind (name or PromptKind) to its own ordered list.
    With ``repeat=True`` each list cycles instead of running dry.
    """

    name = "scripted"

    def __init__(self, plays: Sequence[str] | Mapping[str, Sequence[str]], *, repeat: bool = False):
        super().__init__()
        self._lock = threading.Lock()
        self.repeat = repeat
        if isinstance(plays, Mapping):
            self._queues = {PromptKind(k).value: list(v) for k, v in plays.items()}
            self._keyed = True
        else:
            self._queues = {"*": list(plays)}
            self._keyed = False
        self._cursor = {k: 0 for k in self._queues}

    def _complete(self, request: CompletionRequest) -> str:
        key = PromptKind(request.kind).value if self._keyed else "*"
        with self._lock:
            queue = self._queues.get(key, [])
            pos = self._cursor.get(key, 0)
            if pos >= len(queue):
                if not (self.repeat and queue):
                    raise PlaybookExhausted(f"no scripted output left for {key} (used {pos})")
                pos = 0
            self._cursor[key] = pos + 1
            return queue[pos]


class RandomBackend(AgentBackend):
    """Seeded agent that always answers inside the grammar with random choices."""

    name = "random"

    _WORDS = (
        "I", "saw", "nothing", "strange", "near", "the", "study", "tonight", "who",
        "was", "in", "garden", "after", "dusk", "storm", "key", "tea", "debt",
    )

    def __init__(self, seed: int = 0):
        super().__init__()
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def _sentence(self, rng: random.Random, n: int = 6) -> str:
        return " ".join(rng.choice(self._WORDS) for _ in range(n))

    def _complete(self, request: CompletionRequest) -> str:
        with self._lock:
            rng = self._rng
            kind = PromptKind(request.kind)
            thought = self._sentence(rng, 4)
            if kind is PromptKind.CONVERSE:
                options = []
                if request.candidates:
                    options.append("Ask")
                if request.locations:
                    options.append("Investigate")
                choice = rng.choice(options)
                if choice == "Ask":
                    target = rng.choice(request.candidates)
                    response = f"【Ask】【{target}】: {self._sentence(rng)}?"
                else:
                    target = rng.choice(request.locations)
                    response = f"【Investigate】【{target}】: {self._sentence(rng)}"
            elif kind in (PromptKind.SUSPICION_SCORE, PromptKind.TRUST_SCORE):
                response = str(rng.randint(0, 2))
            elif kind is PromptKind.ABILITY_JUDGE:
                response = str(rng.randint(0, 20))
            elif kind is PromptKind.VOTE:
                response = rng.choice(request.candidates)
            elif kind is PromptKind.HISTORY_SUMMARY:
                response = f"Narrator: 【Speak】: {self._sentence(rng, 3)}"
            else:
                response = self._sentence(rng, 8)
            return render_raw(thought, response)


class RemoteBackend(AgentBackend):
    """OpenAI-style chat-completion client with bounded exponential backoff."""

    name = "remote"

    def __init__(
        self,
        *,
        model: str,
        endpoint: str | None = None,
        api_key: str | None = None,
        temperature: float = DEFAULT_TEMPERATURE,
        top_p: float = DEFAULT_TOP_P,
        timeout: float = 60.0,
        max_attempts: int = 4,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        endpoint = endpoint or os.environ.get("MIRAGE_API_BASE")
        api_key = api_key if api_key is not None else os.environ.get("MIRAGE_API_KEY")
        if not endpoint:
            raise BackendUnavailable("no endpoint configured (set MIRAGE_API_BASE)")
        if not model:
            raise BackendUnavailable("no model configured")
        if api_key is None:
            raise AuthError("no credentials configured (set MIRAGE_API_KEY)")
        self.model = model
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.api_key = api_key
        self.temperature = temperature
        self.top_p = top_p
        self.max_attempts = max(1, max_attempts)
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _payload(self, request: CompletionRequest) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }

    def _complete(self, request: CompletionRequest) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))
            try:
                resp = self._client.post(self.url, json=self._payload(request), headers=headers)
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"{self.url} timed out: {exc}")
                continue
            except httpx.TransportError as exc:
                last = BackendUnavailable(f"{self.url} unreachable: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"{self.url} rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendUnavailable(f"{self.url} returned HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailable(f"malformed completion body: {exc}") from exc
            text = text if isinstance(text, str) else ""
            usage = body.get("usage") if isinstance(body, dict) else None
            if isinstance(usage, dict) and "prompt_tokens" in usage and "completion_tokens" in usage:
                self._record_usage(request, (int(usage["prompt_tokens"]), int(usage["completion_tokens"])))
            return text
        logger.warning("giving up on %s after %d attempts", self.url, self.max_attempts)
        assert last is not None
        raise last


# -- rerun -------------------------------------------------------------------


@dataclass
class RerunPolicy:
    max_retries: int = 3
    failure_counter: int = 0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class Attempt:
    """One backend call made while soliciting a response."""

    kind: PromptKind
    raw: str
    input_tokens: int
    output_tokens: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def countable(self) -> bool:
        return self.kind not in SUMMARY_KINDS


def solicit(
    backend: AgentBackend,
    kind: PromptKind,
    ctx: PromptContext,
    policy: RerunPolicy,
    *,
    language: str = "en",
    candidates: Sequence[str] | None = None,
    locations: Sequence[str] | None = None,
    trace: list[Attempt] | None = None,
) -> tuple[ParsedResponse, int]:
    """Ask ``backend`` for a ``kind`` response until one parses.

    Makes at most ``1 + policy.max_retries`` calls. Each unparseable output
    bumps ``policy.failure_counter``; retries resend the original prompt with
    the rejected output and the format requirements appended.
    """
    kind = PromptKind(kind)
    original = build_prompt(kind, ctx, language)
    prompt = original
    reason = ""
    for attempt in range(1 + policy.max_retries):
        request = CompletionRequest(
            kind=kind,
            prompt=prompt,
            language=language,
            candidates=tuple(candidates or ()),
            locations=tuple(locations or ()),
            attempt=attempt,
        )
        raw = backend.complete(request)
        tokens_in, tokens_out = backend.usage(request)
        try:
            parsed = parse_response(kind, raw, candidates=candidates, locations=locations)
        except ParseFailure as exc:
            policy.failure_counter += 1
            reason = exc.reason
            if trace is not None:
                trace.append(Attempt(kind, raw, tokens_in, tokens_out, error=reason))
            prompt = retry_prompt(original, raw, reason, language)
            continue
        if trace is not None:
            trace.append(Attempt(kind, raw, tokens_in, tokens_out))
        return parsed, attempt + 1
    raise RerunExhausted(
        f"{kind.value}: no parseable output after {1 + policy.max_retries} attempts ({reason})",
        attempts=1 + policy.max_retries,
        last_reason=reason,
    )


def scripted_backend(plays, *, repeat: bool = False) -> ScriptedBackend:
    return ScriptedBackend(plays, repeat=repeat)


def remote_backend(endpoint_config: Mapping[str, Any]) -> RemoteBackend:
    cfg = dict(endpoint_config)
    return RemoteBackend(
        model=cfg.pop("model", ""),
        endpoint=cfg.pop("endpoint", None),
        api_key=cfg.pop("api_key", None),
        **cfg,
    )
