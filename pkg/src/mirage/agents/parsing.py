"""Decoder for the ``### THOUGHT:`` / ``### RESPONSE:`` response grammar."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from ..actions import Action, Ask, Investigate, Speak, Vote
from ..errors import ParseFailure
from .prompts import PromptKind

THOUGHT_MARKER = "### THOUGHT:"
RESPONSE_MARKER = "### RESPONSE:"

ACTION_LABELS = {"Ask": "Ask", "询问": "Ask", "Investigate": "Investigate", "调查": "Investigate"}
_ACTION_TAG = re.compile("【(" + "|".join(ACTION_LABELS) + ")】")
_ACTION = re.compile(
    "【(" + "|".join(ACTION_LABELS) + r")】\s*【([^】\n]*)】\s*[:：]?\s*(.*)\Z", re.DOTALL
)
_INTEGER = re.compile(r"[+-]?[0-9]{1,6}")
HISTORY_LINE = re.compile(r"^[^\n:：]+: 【(Speak|Ask|Investigate|Clue|Vote)】: .*$")

SCORE_RANGES = {
    PromptKind.SUSPICION_SCORE: (0, 2),
    PromptKind.TRUST_SCORE: (0, 2),
    PromptKind.ABILITY_JUDGE: (0, 20),
}
_FREE_TEXT = {PromptKind.INTRODUCTION, PromptKind.DISCUSS, PromptKind.ASK_REPLY}

Payload = Union[Action, int, str]


@dataclass(frozen=True)
class ParsedResponse:
    kind: PromptKind
    thought: str
    response: str
    action: Payload

    def canonical(self) -> str:
        return render_raw(self.thought, self.response)


def render_raw(thought: str, response: str) -> str:
    return f"{THOUGHT_MARKER} {thought}\n{RESPONSE_MARKER} {response}"


def split_markers(raw: str) -> tuple[str, str]:
    start = raw.find(THOUGHT_MARKER)
    if start < 0:
        raise ParseFailure("missing markers: no '### THOUGHT:'")
    body = raw[start + len(THOUGHT_MARKER):]
    cut = body.find(RESPONSE_MARKER)
    if cut < 0:
        raise ParseFailure("missing markers: no '### RESPONSE:' after '### THOUGHT:'")
    return body[:cut].strip(), body[cut + len(RESPONSE_MARKER):].strip()


def resolve_name(value: str, options: Sequence[str]) -> str | None:
    """Exact match first, then a unique case-insensitive match."""
    if value in options:
        return value
    folded = value.casefold()
    hits = [o for o in options if o.casefold() == folded]
    return hits[0] if len(hits) == 1 else None


def parse_response(
    kind: PromptKind,
    raw: str | bytes,
    *,
    candidates: Sequence[str] | None = None,
    locations: Sequence[str] | None = None,
) -> ParsedResponse:
    """Decode one raw completion.

    ``candidates`` restricts Ask targets and Vote names, ``locations``
    restricts Investigate targets. Anything outside the grammar raises
    ParseFailure.
    """
    kind = PromptKind(kind)
    if isinstance(raw, (bytes, bytearray)):
        raw = bytes(raw).decode("utf-8", errors="replace")
    if not isinstance(raw, str):
        raise ParseFailure(f"expected text, got {type(raw).__name__}")
    thought, response = split_markers(raw)

    if kind in _FREE_TEXT:
        if not response:
            raise ParseFailure("empty response")
        payload: Payload = Speak(response)
    elif kind is PromptKind.CONVERSE:
        payload = _parse_action(response, candidates, locations)
    elif kind in SCORE_RANGES:
        payload = _parse_score(response, *SCORE_RANGES[kind])
    elif kind is PromptKind.VOTE:
        name = response.strip().strip("。.!！\"'“”「」【】")
        if not name:
            raise ParseFailure("empty vote")
        if candidates is not None:
            resolved = resolve_name(name, candidates)
            if resolved is None:
                raise ParseFailure(f"vote names {name!r}, who is not on the roster")
            name = resolved
        payload = Vote(name)
    elif kind is PromptKind.HISTORY_SUMMARY:
        lines = [ln for ln in response.splitlines() if ln.strip()]
        if not lines:
            raise ParseFailure("empty summary")
        bad = [ln for ln in lines if not HISTORY_LINE.match(ln.strip())]
        if bad:
            raise ParseFailure(f"summary line breaks 'Name: 【Action】: Content' format: {bad[0]!r}")
        payload = "\n".join(ln.strip() for ln in lines)
    elif kind is PromptKind.SCRIPT_SUMMARY:
        if not response:
            raise ParseFailure("empty summary")
        payload = response
    else:  # Reconstruction may legitimately be empty
        payload = response
    return ParsedResponse(kind=kind, thought=thought, response=response, action=payload)


def _parse_score(response: str, low: int, high: int) -> int:
    text = response.strip().rstrip(".。")
    if not _INTEGER.fullmatch(text):
        raise ParseFailure(f"expected an integer, got {response[:40]!r}")
    value = int(text)
    if not low <= value <= high:
        raise ParseFailure(f"score {value} outside [{low}, {high}]")
    return value


def _parse_action(response, candidates, locations) -> Action:
    tags = _ACTION_TAG.findall(response)
    if len(tags) != 1:
        raise ParseFailure(f"expected exactly one 【Ask】 or 【Investigate】 tag, found {len(tags)}")
    m = _ACTION.search(response)
    if m is None:
        raise ParseFailure("malformed action; expected 【Action】【target】: content")
    label, target, body = ACTION_LABELS[m.group(1)], m.group(2).strip(), m.group(3).strip()
    if not target:
        raise ParseFailure("empty action target")
    if label == "Ask":
        if not body:
            raise ParseFailure("【Ask】 without a question")
        if candidates is not None:
            resolved = resolve_name(target, candidates)
            if resolved is None:
                raise ParseFailure(f"cannot ask {target!r}: not an eligible player")
            target = resolved
        return Ask(target=target, question=body)
    if locations is not None:
        resolved = resolve_name(target, locations)
        if resolved is None:
            raise ParseFailure(f"cannot investigate {target!r}: unknown location")
        target = resolved
    return Investigate(location=target, reason=body)
