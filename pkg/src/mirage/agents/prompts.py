"""Prompt templates keyed by (kind, language) and their rendering."""

from __future__ import annotations

import string
from dataclasses import dataclass, fields
from enum import Enum
from functools import lru_cache
from pathlib import Path

from ..errors import MissingContextField

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
LANGUAGES = ("en", "zh")


class PromptKind(str, Enum):
    INTRODUCTION = "Introduction"
    DISCUSS = "Discuss"
    CONVERSE = "Converse"
    ASK_REPLY = "AskReply"
    VOTE = "Vote"
    SUSPICION_SCORE = "SuspicionScore"
    TRUST_SCORE = "TrustScore"
    HISTORY_SUMMARY = "HistorySummary"
    SCRIPT_SUMMARY = "ScriptSummary"
    ABILITY_JUDGE = "AbilityJudge"
    RECONSTRUCTION = "Reconstruction"


_FILES = {
    PromptKind.INTRODUCTION: "introduction.txt",
    PromptKind.DISCUSS: "discuss.txt",
    PromptKind.CONVERSE: "converse.txt",
    PromptKind.ASK_REPLY: "ask_reply.txt",
    PromptKind.VOTE: "vote.txt",
    PromptKind.SUSPICION_SCORE: "suspicion_score.txt",
    PromptKind.TRUST_SCORE: "trust_score.txt",
    PromptKind.HISTORY_SUMMARY: "history_summary.txt",
    PromptKind.SCRIPT_SUMMARY: "script_summary.txt",
    PromptKind.ABILITY_JUDGE: "ability_judge.txt",
    PromptKind.RECONSTRUCTION: "reconstruction.txt",
}

# Completions of these kinds are excluded from the "Users" completion count.
SUMMARY_KINDS = frozenset({PromptKind.HISTORY_SUMMARY, PromptKind.SCRIPT_SUMMARY})


@dataclass(frozen=True)
class PromptContext:
    """Values for template placeholders. Unused fields stay None."""

    name: str | None = None
    description: str | None = None
    self_clues: str | None = None
    history: str | None = None
    last_action: str | None = None
    characters: str | None = None
    address: str | None = None
    ask_name: str | None = None
    ask_content: str | None = None
    other_name: str | None = None
    content: str | None = None
    role_list: str | None = None
    truth: str | None = None
    actions: str | None = None
    ability: str | None = None
    script_part: str | None = None
    item: str | None = None
    text: str | None = None


_CONTEXT_FIELDS = {f.name for f in fields(PromptContext)}


@lru_cache(maxsize=None)
def load_template(kind: PromptKind, language: str = "en") -> str:
    if language not in LANGUAGES:
        raise ValueError(f"unsupported language {language!r}")
    base = TEMPLATE_DIR / language
    preamble = (base / "_preamble.txt").read_text(encoding="utf-8").rstrip("\n")
    body = (base / _FILES[PromptKind(kind)]).read_text(encoding="utf-8")
    return body.replace("{preamble}", preamble)


@lru_cache(maxsize=None)
def template_fields(kind: PromptKind, language: str = "en") -> tuple[str, ...]:
    names = []
    for _, name, _, _ in string.Formatter().parse(load_template(kind, language)):
        if name and name not in names:
            names.append(name)
    unknown = set(names) - _CONTEXT_FIELDS
    if unknown:
        raise ValueError(f"template {kind.value}/{language} uses unknown fields {sorted(unknown)}")
    return tuple(names)


def build_prompt(kind: PromptKind, ctx: PromptContext, language: str = "en") -> str:
    """Render the template for ``kind``.

    Only the placeholders the template names are read from ``ctx``; every
    one of them must be set, otherwise MissingContextField is raised.
    """
    kind = PromptKind(kind)
    needed = template_fields(kind, language)
    missing = [f for f in needed if getattr(ctx, f) is None]
    if missing:
        raise MissingContextField(f"{kind.value} prompt needs {', '.join(missing)}")
    values = {f: getattr(ctx, f) for f in needed}
    return load_template(kind, language).format_map(values)


def retry_prompt(original: str, raw: str, reason: str, language: str = "en") -> str:
    """Original prompt plus the rejected output and the format requirements."""
    if language == "zh":
        return (
            f"{original}\n\n你上一次的输出无法被解析：\n{raw}\n\n原因：{reason}\n"
            "请严格按照要求的格式重新回答：\n### THOUGHT: XXX\n### RESPONSE: XXX\n"
        )
    return (
        f"{original}\n\nYour previous output could not be processed:\n{raw}\n\n"
        f"Reason: {reason}\n"
        "Answer again, strictly following the required format:\n"
        "### THOUGHT: XXX\n### RESPONSE: XXX\n"
    )
