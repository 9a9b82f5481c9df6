"""Player actions shared by the parser and the engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Speak:
    text: str


@dataclass(frozen=True)
class Ask:
    target: str
    question: str


@dataclass(frozen=True)
class Investigate:
    location: str
    reason: str


@dataclass(frozen=True)
class Vote:
    accused: str


Action = Union[Speak, Ask, Investigate, Vote]
