"""Prompt construction, response parsing, rerun policy and agent backends."""

from .backends import (
    AgentBackend,
    Attempt,
    CompletionRequest,
    RandomBackend,
    RemoteBackend,
    RerunPolicy,
    ScriptedBackend,
    remote_backend,
    scripted_backend,
    solicit,
)
from .parsing import ParsedResponse, parse_response, render_raw
from .prompts import PromptContext, PromptKind, build_prompt

__all__ = [
    "AgentBackend",
    "Attempt",
    "CompletionRequest",
    "ParsedResponse",
    "PromptContext",
    "PromptKind",
    "RandomBackend",
    "RemoteBackend",
    "RerunPolicy",
    "ScriptedBackend",
    "build_prompt",
    "parse_response",
    "remote_backend",
    "render_raw",
    "scripted_backend",
    "solicit",
]
