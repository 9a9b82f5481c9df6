"""Per-game memory: history log, suspicion/trust ledger, usage counters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterator

from .agents.backends import AgentBackend, Attempt, RerunPolicy, solicit
from .agents.prompts import PromptContext, PromptKind
from .errors import InvalidLevel, RerunExhausted, SelfScoring, SummarizerFailure
from .tokens import count_tokens

LEVELS = (0, 1, 2)
HISTORY_ACTIONS = ("Speak", "Ask", "Investigate", "Clue", "Vote")
DEFAULT_CONTEXT_BUDGET = 6000


# -- history -------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryEntry:
    seq: int
    round: int
    phase: str
    actor: str
    kind: str  # one of HISTORY_ACTIONS
    payload: str

    def line(self) -> str:
        content = " ".join(self.payload.split())
        return f"{self.actor}: 【{self.kind}】: {content}"

    @cached_property
    def tokens(self) -> int:
        return count_tokens(self.line())


@dataclass(frozen=True)
class SummaryPrefix:
    through_seq: int
    text: str


@dataclass
class HistoryLog:
    entries: list[HistoryEntry] = field(default_factory=list)
    summarized_prefix: SummaryPrefix | None = None

    def append(self, entry: HistoryEntry) -> None:
        if entry.kind not in HISTORY_ACTIONS:
            raise ValueError(f"unknown history action {entry.kind!r}")
        last = self.entries[-1].seq if self.entries else (
            self.summarized_prefix.through_seq if self.summarized_prefix else -1
        )
        if entry.seq <= last:
            raise ValueError(f"history seq must increase ({entry.seq} after {last})")
        self.entries.append(entry)

    def lines(self) -> Iterator[str]:
        if self.summarized_prefix is not None:
            yield from self.summarized_prefix.text.splitlines()
        for e in self.entries:
            yield e.line()

    def render(self) -> str:
        return "\n".join(self.lines())

    def tokens(self) -> int:
        # lines are newline-joined, so the count is additive per line
        prefix = count_tokens(self.summarized_prefix.text) if self.summarized_prefix else 0
        return prefix + sum(e.tokens for e in self.entries)

    def copy(self) -> HistoryLog:
        return HistoryLog(list(self.entries), self.summarized_prefix)


def maybe_summarize(
    history: HistoryLog,
    budget: int,
    summarizer: AgentBackend,
    *,
    policy: RerunPolicy | None = None,
    language: str = "en",
    trace: list[Attempt] | None = None,
) -> HistoryLog:
    """Fold the oldest half of the retained entries into the summary until the
    rendered history fits ``budget`` tokens.

    Stops early once only the summary plus one entry remain, or when the
    summarizer twice fails to produce text shorter than its source. The input
    log is never mutated.
    """
    if budget <= 0:
        raise ValueError("context budget must be positive")
    policy = policy if policy is not None else RerunPolicy()
    log = history.copy()
    while log.tokens() > budget and len(log.entries) > 1:
        k = max(1, len(log.entries) // 2)
        head = log.entries[:k]
        source_lines = []
        if log.summarized_prefix is not None:
            source_lines.append(log.summarized_prefix.text)
        source_lines.extend(e.line() for e in head)
        source = "\n".join(source_lines)
        source_tokens = count_tokens(source)
        summary = None
        for _ in range(2):
            try:
                parsed, _attempts = solicit(
                    summarizer,
                    PromptKind.HISTORY_SUMMARY,
                    PromptContext(text=source),
                    policy,
                    language=language,
                    trace=trace,
                )
            except RerunExhausted as exc:
                raise SummarizerFailure(str(exc)) from exc
            if count_tokens(parsed.action) < source_tokens:
                summary = parsed.action
                break
        if summary is None:
            break
        log = HistoryLog(log.entries[k:], SummaryPrefix(head[-1].seq, summary))
    return log


# -- suspicion / trust -----------------------------------------------------------


@dataclass
class LedgerCell:
    sus_total: int = 0
    trust_total: int = 0
    samples: int = 0


@dataclass
class SuspicionTrustLedger:
    cells: dict[tuple[str, str], LedgerCell] = field(default_factory=dict)

    def record(self, observer: str, subject: str, sus: int, trust: int) -> None:
        for level in (sus, trust):
            if isinstance(level, bool) or not isinstance(level, int) or level not in LEVELS:
                raise InvalidLevel(f"level {level!r} not in {{0, 1, 2}}")
        if observer == subject:
            raise SelfScoring(f"{observer!r} cannot score themselves")
        cell = self.cells.setdefault((observer, subject), LedgerCell())
        cell.sus_total += sus
        cell.trust_total += trust
        cell.samples += 1

    def totals(self, subject: str) -> tuple[int, int]:
        """(sum of suspicion, sum of trust) received by ``subject`` from others."""
        sus = trust = 0
        for (obs, subj), cell in self.cells.items():
            if subj == subject and obs != subject:
                sus += cell.sus_total
                trust += cell.trust_total
        return sus, trust

    def accumulated_suspicion(self, subject: str) -> int:
        return self.totals(subject)[0]

    def copy(self) -> SuspicionTrustLedger:
        return SuspicionTrustLedger({k: replace(v) for k, v in self.cells.items()})


def record_scores(
    ledger: SuspicionTrustLedger, observer: str, subject: str, sus: int, trust: int
) -> SuspicionTrustLedger:
    ledger.record(observer, subject, sus, trust)
    return ledger


def accumulated_suspicion(ledger: SuspicionTrustLedger, subject: str) -> int:
    return ledger.accumulated_suspicion(subject)


# -- usage -----------------------------------------------------------------------


class Direction(str, Enum):
    ENV_INPUT = "EnvInput"
    USER_OUTPUT = "UserOutput"


@dataclass(frozen=True)
class UsageCounters:
    env_tokens: int = 0
    envs: int = 0
    user_tokens: int = 0
    users: int = 0
    failures: int = 0

    def __add__(self, other: UsageCounters) -> UsageCounters:
        return UsageCounters(
            self.env_tokens + other.env_tokens,
            self.envs + other.envs,
            self.user_tokens + other.user_tokens,
            self.users + other.users,
            self.failures + other.failures,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "env_tokens": self.env_tokens,
            "envs": self.envs,
            "user_tokens": self.user_tokens,
            "users": self.users,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, data: dict) -> UsageCounters:
        return cls(**{k: int(data.get(k, 0)) for k in cls().as_dict()})


def charge(
    counters: UsageCounters, direction: Direction, tokens: int, countable_completion: bool = True
) -> UsageCounters:
    if tokens < 0:
        raise ValueError("token count must be non-negative")
    if Direction(direction) is Direction.ENV_INPUT:
        return replace(counters, env_tokens=counters.env_tokens + tokens, envs=counters.envs + 1)
    return replace(
        counters,
        user_tokens=counters.user_tokens + tokens,
        users=counters.users + (1 if countable_completion else 0),
    )


def usage_of(attempts: list[Attempt], *, countable: bool | None = None) -> UsageCounters:
    """Counters for a group of attempts; ``countable`` overrides per-attempt kind."""
    out = UsageCounters()
    for a in attempts:
        out = charge(out, Direction.ENV_INPUT, a.input_tokens)
        is_countable = a.countable if countable is None else countable
        out = charge(out, Direction.USER_OUTPUT, a.output_tokens, is_countable)
        if not a.ok:
            out = replace(out, failures=out.failures + 1)
    return out
