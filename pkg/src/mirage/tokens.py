"""Deterministic token heuristic used for budgets, usage accounting and Rouge-L.

A token is either a single CJK codepoint or a maximal run of non-whitespace,
non-CJK characters.
"""

from __future__ import annotations

import re

_CJK_RANGES = (
    "⺀-⿟"  # radicals
    "　-〿"  # CJK symbols and punctuation (includes 【】)
    "぀-ヿ"  # kana
    "㄀-ㄯ"
    "㆐-ㇿ"
    "㐀-䶿"  # extension A
    "一-鿿"  # unified ideographs
    "가-힯"  # hangul syllables
    "豈-﫿"  # compatibility ideographs
    "︰-﹏"
    "＀-￯"  # full-width forms
    "\U00020000-\U0003134f"
)

_TOKEN_RE = re.compile(f"[{_CJK_RANGES}]|[^\\s{_CJK_RANGES}]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    """Number of tokens in ``text``; ``count_tokens("") == 0``."""
    if text.isascii():  # no CJK possible; str.split and \s agree on whitespace
        return len(text.split())
    return len(_TOKEN_RE.findall(text))
