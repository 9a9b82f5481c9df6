"""Turn-ordered game engine.

A game runs Introduction, then ``rounds`` pairs of OpenConversation and
Interaction phases, then Voting. Each call to :meth:`Game.step` performs one
agent turn or one phase boundary and returns the events it produced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

from .actions import Action, Ask, Investigate, Speak, Vote
from .agents.backends import AgentBackend, Attempt, RerunPolicy, solicit
from .agents.parsing import ParsedResponse, resolve_name
from .agents.prompts import PromptContext, PromptKind
from .errors import (
    BackendError,
    IncompleteVotes,
    MirageError,
    NotYourTurn,
    RerunExhausted,
    RosterMismatch,
    SummarizerFailure,
    UnknownLocation,
    UnknownTarget,
)
from .memory import (
    DEFAULT_CONTEXT_BUDGET,
    HistoryEntry,
    HistoryLog,
    SuspicionTrustLedger,
    UsageCounters,
    maybe_summarize,
    usage_of,
)
from .script_model import PARTS, Script

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    INTRODUCTION = "Introduction"
    OPEN_CONVERSATION = "OpenConversation"
    INTERACTION = "Interaction"
    VOTING = "Voting"
    FINISHED = "Finished"


class EventKind(str, Enum):
    SPEAK = "Speak"
    ASK = "Ask"
    ANSWER = "Answer"
    INVESTIGATE = "Investigate"
    CLUE_REVEALED = "ClueRevealed"
    SCORE = "Score"
    SUMMARY = "Summary"
    ACCUSE = "Accuse"
    VOTE = "Vote"
    PHASE_CHANGE = "PhaseChange"
    FAILURE = "Failure"


class Winner(str, Enum):
    CIVILIANS = "Civilians"
    CULPRIT = "Culprit"


@dataclass(frozen=True)
class Event:
    seq: int
    round: int
    phase: str
    actor: str | None
    kind: str
    payload: dict[str, Any]
    usage: dict[str, int]

    def to_record(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "round": self.round,
            "phase": self.phase,
            "actor": self.actor,
            "kind": self.kind,
            "payload": self.payload,
            "usage": self.usage,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> Event:
        return cls(
            seq=rec["seq"],
            round=rec["round"],
            phase=rec["phase"],
            actor=rec["actor"],
            kind=rec["kind"],
            payload=dict(rec["payload"]),
            usage=dict(rec["usage"]),
        )


@dataclass(frozen=True)
class GameConfig:
    rounds: int = 5
    seed: int = 0
    language: str = "en"
    max_retries: int = 3
    context_budget: int = DEFAULT_CONTEXT_BUDGET

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.context_budget <= 0:
            raise ValueError("context_budget must be positive")


@dataclass(frozen=True)
class VotingResult:
    vote_tally: dict[str, int]
    accused_ranking: list[tuple[str, int, int]]
    final_accused: str
    winner: Winner

    def to_dict(self) -> dict[str, Any]:
        return {
            "vote_tally": dict(self.vote_tally),
            "accused_ranking": [list(r) for r in self.accused_ranking],
            "final_accused": self.final_accused,
            "winner": self.winner.value,
        }


@dataclass
class GameState:
    script_id: str
    rng_seed: int
    round: int = 0
    phase: Phase = Phase.INTRODUCTION
    turn_cursor: int = 0
    revealed_clues: list[str] = field(default_factory=list)
    revealed_by: dict[str, list[str]] = field(default_factory=dict)
    history: HistoryLog = field(default_factory=HistoryLog)
    ledger: SuspicionTrustLedger = field(default_factory=SuspicionTrustLedger)
    counters: UsageCounters = field(default_factory=UsageCounters)
    accusations: dict[str, str | None] = field(default_factory=dict)
    votes: dict[str, str | None] = field(default_factory=dict)
    unlocked_stages: int = 1
    last_action: dict[str, str] = field(default_factory=dict)
    actions: dict[str, list[str]] = field(default_factory=dict)
    next_seq: int = 0
    result: VotingResult | None = None


def step_budget(players: int, rounds: int) -> int:
    """Exact number of steps from a new game to Finished."""
    turns = players * 2 * rounds + players + 2 * players
    boundaries = 1 + rounds + (rounds - 1) + 1 + 1
    return turns + boundaries


def tally_votes(
    votes: Mapping[str, str | None],
    order: Sequence[str],
    ledger: SuspicionTrustLedger,
    culprit_ids,
) -> VotingResult:
    """Rank every character by votes, then accumulated suspicion, then roster order."""
    missing = [c for c in order if c not in votes]
    if missing:
        raise IncompleteVotes(f"no vote recorded for {', '.join(missing)}")
    tally = {c: 0 for c in order}
    for accused in votes.values():
        if accused is not None:
            if accused not in tally:
                raise IncompleteVotes(f"vote for unknown character {accused!r}")
            tally[accused] += 1
    index = {c: i for i, c in enumerate(order)}
    ranking = sorted(
        ((c, tally[c], ledger.accumulated_suspicion(c)) for c in order),
        key=lambda r: (-r[1], -r[2], index[r[0]]),
    )
    final = ranking[0][0]
    winner = Winner.CIVILIANS if final in culprit_ids else Winner.CULPRIT
    return VotingResult(tally, ranking, final, winner)


_LABELS = {
    "en": {
        "story": "Story",
        "script": "Script",
        "relationships": "Relationships",
        "performance": "Performance",
        "goals": "Goals",
        "abilities": "Abilities",
        "none": "None",
        "repeat": "searched {location} again but found nothing new",
    },
    "zh": {
        "story": "人物故事",
        "script": "人物剧本",
        "relationships": "人物关系",
        "performance": "角色表现",
        "goals": "角色目标",
        "abilities": "其他能力",
        "none": "无",
        "repeat": "再次搜查了{location}，没有新的发现",
    },
}


def describe_character(script: Script, cid: str, *, stages: int | None = None, language: str = "en") -> str:
    labels = _LABELS[language]
    ch = script.character(cid)
    lines = []
    for part in PARTS:
        text = ch.part(part, stages=stages)
        if text.strip():
            lines.append(f"{labels[part]}: {text}")
    return "\n".join(lines)


def private_clue_text(script: Script, cid: str, language: str = "en") -> str:
    ch = script.character(cid)
    if not ch.private_clues:
        return _LABELS[language]["none"]
    return "\n".join(
        f"- {script.clue(k).location}: {script.clue(k).text}" for k in ch.private_clues
    )


class Game:
    """One simulation of a script by a roster of agent backends."""

    def __init__(
        self,
        script: Script,
        roster: Sequence[AgentBackend] | Sequence[tuple[str, AgentBackend]],
        config: GameConfig | None = None,
        *,
        summarizer: AgentBackend | None = None,
    ):
        self.script = script
        self.config = config or GameConfig()
        pairs = self._normalize_roster(script, roster)
        self.order = [cid for cid, _ in pairs]
        self.backends = dict(pairs)
        self.summarizer = summarizer
        self.policy = RerunPolicy(self.config.max_retries)
        self.language = self.config.language
        self.state = GameState(script_id=script.id, rng_seed=self.config.seed)
        self.state.revealed_by = {cid: [] for cid in self.order}
        self.state.actions = {cid: [] for cid in self.order}
        self._locations = script.locations
        # never summarized; judges read the whole game
        self.full_history = HistoryLog()

    @staticmethod
    def _normalize_roster(script, roster) -> list[tuple[str, AgentBackend]]:
        roster = list(roster)
        if len(roster) != len(script.characters):
            raise RosterMismatch(
                f"roster has {len(roster)} agents for {len(script.characters)} characters"
            )
        if all(isinstance(r, AgentBackend) for r in roster):
            return list(zip(script.character_ids, roster))
        ids = [cid for cid, _ in roster]
        if len(set(ids)) != len(ids):
            raise RosterMismatch("a character is assigned more than once")
        if set(ids) != set(script.character_ids):
            unknown = sorted(set(ids) - set(script.character_ids))
            raise RosterMismatch(f"roster names unknown characters {unknown}")
        return [(cid, backend) for cid, backend in roster]

    # -- bookkeeping ---------------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.state.phase is Phase.FINISHED

    @property
    def budget(self) -> int:
        return step_budget(len(self.order), self.config.rounds)

    def current_actor(self) -> str | None:
        n, cur = len(self.order), self.state.turn_cursor
        if self.state.phase is Phase.VOTING:
            return self.order[cur % n] if cur < 2 * n else None
        return self.order[cur] if cur < n else None

    def emit(self, kind: EventKind, actor: str | None, payload: dict, usage=None) -> Event:
        usage = usage or UsageCounters()
        st = self.state
        ev = Event(
            seq=st.next_seq,
            round=st.round,
            phase=st.phase.value,
            actor=actor,
            kind=kind.value,
            payload=payload,
            usage=usage.as_dict(),
        )
        st.next_seq += 1
        st.counters = st.counters + usage
        return ev

    def _remember(self, seq: int, actor: str, kind: str, text: str) -> None:
        st = self.state
        entry = HistoryEntry(seq, st.round, st.phase.value, actor, kind, text)
        st.history.append(entry)
        self.full_history.append(entry)

    def failure_events(self, actor: str | None, trace: list[Attempt]) -> list[Event]:
        out = []
        for a in trace:
            if not a.ok:
                out.append(
                    self.emit(
                        EventKind.FAILURE,
                        actor,
                        {"prompt": a.kind.value, "reason": a.error, "raw": a.raw},
                        usage_of([a]),
                    )
                )
        return out

    def _solicit(
        self,
        cid: str,
        kind: PromptKind,
        ctx: PromptContext,
        events: list[Event],
        *,
        backend: AgentBackend | None = None,
        candidates=None,
        locations=None,
    ) -> tuple[ParsedResponse | None, list[Attempt]]:
        """Solicit with the rerun policy; returns (None, ok_attempts) on forfeit."""
        backend = backend or self.backends[cid]
        trace: list[Attempt] = []
        try:
            parsed, _ = solicit(
                backend,
                kind,
                ctx,
                self.policy,
                language=self.language,
                candidates=candidates,
                locations=locations,
                trace=trace,
            )
        except RerunExhausted as exc:
            logger.info("%s forfeits %s: %s", cid, kind.value, exc)
            parsed = None
        except BackendError as exc:
            exc.character = cid
            exc.seq = self.state.next_seq
            exc.args = (f"turn of {cid} (seq {self.state.next_seq}): {exc}",)
            raise
        events.extend(self.failure_events(cid, trace))
        return parsed, [a for a in trace if a.ok]

    def _ctx(self, cid: str, **extra) -> PromptContext:
        return PromptContext(
            name=cid,
            description=describe_character(
                self.script, cid, stages=self.state.unlocked_stages, language=self.language
            ),
            self_clues=private_clue_text(self.script, cid, self.language),
            history=self.state.history.render() or _LABELS[self.language]["none"],
            **extra,
        )

    def _compact_history(self, cid: str, events: list[Event]) -> None:
        st = self.state
        if st.history.tokens() <= self.config.context_budget:
            return
        trace: list[Attempt] = []
        try:
            new = maybe_summarize(
                st.history,
                self.config.context_budget,
                self.summarizer or self.backends[cid],
                policy=self.policy,
                language=self.language,
                trace=trace,
            )
        except SummarizerFailure:
            events.extend(self.failure_events(None, trace))
            return
        events.extend(self.failure_events(None, trace))
        if new.summarized_prefix != st.history.summarized_prefix:
            st.history = new
            events.append(
                self.emit(
                    EventKind.SUMMARY,
                    None,
                    {"through_seq": new.summarized_prefix.through_seq, "text": new.summarized_prefix.text},
                    usage_of([a for a in trace if a.ok]),
                )
            )

    # -- stepping ------------------------------------------------------------

    def step(self) -> list[Event]:
        st = self.state
        n = len(self.order)
        if st.phase is Phase.FINISHED:
            raise MirageError("game already finished")
        if st.phase is Phase.INTRODUCTION:
            if st.turn_cursor < n:
                return self._turn_introduction(self.order[st.turn_cursor])
            return [self._enter(Phase.OPEN_CONVERSATION, 0)]
        if st.phase is Phase.OPEN_CONVERSATION:
            if st.turn_cursor < n:
                return self._turn_discuss(self.order[st.turn_cursor])
            return [self._enter(Phase.INTERACTION, st.round)]
        if st.phase is Phase.INTERACTION:
            if st.turn_cursor < n:
                return self._turn_interact(self.order[st.turn_cursor])
            if st.round + 1 < self.config.rounds:
                return [self._enter(Phase.OPEN_CONVERSATION, st.round + 1)]
            return [self._enter(Phase.VOTING, st.round)]
        # voting
        if st.turn_cursor < n:
            return self._turn_accuse(self.order[st.turn_cursor])
        if st.turn_cursor < 2 * n:
            return self._turn_vote(self.order[st.turn_cursor - n])
        result = self.run_voting()
        st.result = result
        return [self._enter(Phase.FINISHED, st.round, result=result.to_dict())]

    def run(self) -> list[Event]:
        events: list[Event] = []
        while not self.finished:
            events.extend(self.step())
        return events

    def _enter(self, phase: Phase, round_: int, **extra) -> Event:
        st = self.state
        previous = st.phase
        st.phase = phase
        st.round = round_
        st.turn_cursor = 0
        payload: dict[str, Any] = {"from": previous.value, "to": phase.value}
        if phase is Phase.OPEN_CONVERSATION:
            unlocked = []
            while (
                st.unlocked_stages < len(self.script.stages)
                and self.script.stages[st.unlocked_stages].unlock_round <= round_
            ):
                unlocked.append(st.unlocked_stages)
                st.unlocked_stages += 1
            if unlocked:
                payload["unlocked_stages"] = unlocked
        payload.update(extra)
        return self.emit(EventKind.PHASE_CHANGE, None, payload)

    def _turn_introduction(self, cid: str) -> list[Event]:
        events: list[Event] = []
        parsed, ok = self._solicit(cid, PromptKind.INTRODUCTION, self._ctx(cid), events)
        text = parsed.action.text if parsed else ""
        ev = self.emit(EventKind.SPEAK, cid, {"text": text}, usage_of(ok))
        if text:
            self._remember(ev.seq, cid, "Speak", text)
        events.append(ev)
        self.state.turn_cursor += 1
        return events

    def _turn_discuss(self, cid: str) -> list[Event]:
        events: list[Event] = []
        self._compact_history(cid, events)
        parsed, ok = self._solicit(cid, PromptKind.DISCUSS, self._ctx(cid), events)
        text = parsed.action.text if parsed else ""
        before = self.state.history.render() or _LABELS[self.language]["none"]
        ev = self.emit(EventKind.SPEAK, cid, {"text": text}, usage_of(ok))
        events.append(ev)
        if text:
            self._remember(ev.seq, cid, "Speak", text)
            self.state.actions[cid].append(f"【Speak】: {text}")
            events.extend(self._score_utterance(cid, text, before))
        self.state.turn_cursor += 1
        return events

    def _score_utterance(self, speaker: str, text: str, history: str) -> list[Event]:
        events: list[Event] = []
        ctx = PromptContext(history=history, other_name=speaker, content=text)
        for observer in self.order:
            if observer == speaker:
                continue
            sus, ok_s = self._solicit(observer, PromptKind.SUSPICION_SCORE, ctx, events)
            trust, ok_t = self._solicit(observer, PromptKind.TRUST_SCORE, ctx, events)
            if sus is None or trust is None:
                continue
            self.state.ledger.record(observer, speaker, sus.action, trust.action)
            events.append(
                self.emit(
                    EventKind.SCORE,
                    observer,
                    {
                        "metric": "ledger",
                        "observer": observer,
                        "subject": speaker,
                        "suspicion": sus.action,
                        "trust": trust.action,
                    },
                    usage_of(ok_s + ok_t),
                )
            )
        return events

    def _turn_interact(self, cid: str) -> list[Event]:
        events: list[Event] = []
        self._compact_history(cid, events)
        others = [c for c in self.order if c != cid]
        targets = self._locations + [c.id for c in self.script.clues if c.id not in self._locations]
        ctx = self._ctx(
            cid,
            last_action=self.state.last_action.get(cid, _LABELS[self.language]["none"]),
            characters=", ".join(others),
            address=", ".join(self._locations),
        )
        parsed, ok = self._solicit(
            cid, PromptKind.CONVERSE, ctx, events, candidates=others, locations=targets
        )
        if parsed is None:
            events.append(self.emit(EventKind.SPEAK, cid, {"text": ""}))
            self.state.turn_cursor += 1
            return events
        action = parsed.action
        usage = usage_of(ok, countable=not isinstance(action, Investigate))
        events.extend(self._apply(cid, action, usage))
        self.state.turn_cursor += 1
        return events

    def _turn_accuse(self, cid: str) -> list[Event]:
        events: list[Event] = []
        self._compact_history(cid, events)
        others = [c for c in self.order if c != cid]
        parsed, ok = self._solicit(
            cid, PromptKind.VOTE, self._ctx(cid, role_list=", ".join(others)), events, candidates=others
        )
        accused = parsed.action.accused if parsed else None
        events.extend(self._record_accusation(cid, accused, usage_of(ok)))
        self.state.turn_cursor += 1
        return events

    def _vote_candidates(self, cid: str) -> list[str]:
        accused = [a for a in dict.fromkeys(self.state.accusations.values()) if a and a != cid]
        return accused or [c for c in self.order if c != cid]

    def _turn_vote(self, cid: str) -> list[Event]:
        events: list[Event] = []
        candidates = self._vote_candidates(cid)
        parsed, ok = self._solicit(
            cid,
            PromptKind.VOTE,
            self._ctx(cid, role_list=", ".join(candidates)),
            events,
            candidates=candidates,
        )
        accused = parsed.action.accused if parsed else None
        events.extend(self._record_vote(cid, accused, usage_of(ok)))
        self.state.turn_cursor += 1
        return events

    def _record_accusation(self, cid: str, accused: str | None, usage=None) -> list[Event]:
        self.state.accusations[cid] = accused
        ev = self.emit(EventKind.ACCUSE, cid, {"accused": accused}, usage)
        if accused:
            self._remember(ev.seq, cid, "Vote", f"accuses {accused}")
            self.state.actions[cid].append(f"【Accuse】: {accused}")
        return [ev]

    def _record_vote(self, cid: str, accused: str | None, usage=None) -> list[Event]:
        self.state.votes[cid] = accused
        ev = self.emit(EventKind.VOTE, cid, {"accused": accused}, usage)
        if accused:
            self._remember(ev.seq, cid, "Vote", f"votes for {accused}")
            self.state.actions[cid].append(f"【Vote】: {accused}")
        return [ev]

    # -- actions -------------------------------------------------------------

    def apply_action(self, actor: str, action: Action) -> list[Event]:
        """Apply an externally chosen action for the player holding the turn.

        Advances the turn cursor like :meth:`step` would.
        """
        if self.current_actor() != actor:
            raise NotYourTurn(f"it is not {actor}'s turn")
        st = self.state
        if st.phase is Phase.VOTING:
            if not isinstance(action, Vote):
                raise MirageError("only Vote actions are allowed while voting")
            if action.accused not in self.order or action.accused == actor:
                raise UnknownTarget(f"cannot accuse {action.accused!r}")
            accusing = st.turn_cursor < len(self.order)
            events = (self._record_accusation if accusing else self._record_vote)(actor, action.accused)
        else:
            if isinstance(action, Vote):
                raise MirageError("Vote actions are only allowed while voting")
            events = self._apply(actor, action, None)
        st.turn_cursor += 1
        return events

    def _resolve_clue(self, location: str):
        """Next unrevealed clue at ``location`` (or with that id); None if exhausted."""
        by_loc = resolve_name(location, self._locations)
        if by_loc is not None:
            for clue in self.script.clues:
                if clue.location == by_loc and clue.id not in self.state.revealed_clues:
                    return by_loc, clue
            return by_loc, None
        ids = [c.id for c in self.script.clues]
        by_id = resolve_name(location, ids)
        if by_id is not None:
            clue = self.script.clue(by_id)
            return clue.location, (None if by_id in self.state.revealed_clues else clue)
        raise UnknownLocation(f"no clue location named {location!r}")

    def _apply(self, actor: str, action: Action, usage) -> list[Event]:
        st = self.state
        if isinstance(action, Speak):
            ev = self.emit(EventKind.SPEAK, actor, {"text": action.text}, usage)
            if action.text:
                self._remember(ev.seq, actor, "Speak", action.text)
            return [ev]
        if isinstance(action, Ask):
            target = resolve_name(action.target, self.order)
            if target is None or target == actor:
                raise UnknownTarget(f"{actor} cannot ask {action.target!r}")
            events = [
                self.emit(EventKind.ASK, actor, {"target": target, "question": action.question}, usage)
            ]
            self._remember(events[0].seq, actor, "Ask", f"{target}, {action.question}")
            st.actions[actor].append(f"【Ask】【{target}】: {action.question}")
            ctx = self._ctx(target, ask_name=actor, ask_content=action.question)
            parsed, ok = self._solicit(target, PromptKind.ASK_REPLY, ctx, events)
            answer = parsed.action.text if parsed else ""
            ev = self.emit(EventKind.ANSWER, target, {"to": actor, "text": answer}, usage_of(ok))
            events.append(ev)
            if answer:
                self._remember(ev.seq, target, "Speak", answer)
            st.last_action[actor] = f"【Ask】【{target}】: {action.question}\n{target}: {answer}"
            return events
        if isinstance(action, Investigate):
            location, clue = self._resolve_clue(action.location)
            if clue is None:
                note = _LABELS[self.language]["repeat"].format(location=location)
                ev = self.emit(EventKind.SPEAK, actor, {"text": note, "repeat_of": location}, usage)
                self._remember(ev.seq, actor, "Speak", note)
                st.last_action[actor] = f"【Investigate】【{location}】: {note}"
                return [ev]
            inv = self.emit(
                EventKind.INVESTIGATE,
                actor,
                {"location": location, "reason": action.reason, "clue_id": clue.id},
                usage,
            )
            self._remember(inv.seq, actor, "Investigate", f"{location}: {action.reason}" if action.reason else location)
            st.revealed_clues.append(clue.id)
            st.revealed_by[actor].append(clue.id)
            rev = self.emit(
                EventKind.CLUE_REVEALED,
                actor,
                {"clue_id": clue.id, "location": location, "text": clue.text, "is_key": clue.is_key},
            )
            self._remember(rev.seq, actor, "Clue", clue.text)
            st.actions[actor].append(f"【Investigate】【{location}】: {clue.text}")
            st.last_action[actor] = f"【Investigate】【{location}】: {clue.text}"
            return [inv, rev]
        raise TypeError(f"unsupported action {action!r}")

    # -- voting --------------------------------------------------------------

    def run_voting(self) -> VotingResult:
        if self.state.phase is not Phase.VOTING:
            raise IncompleteVotes("voting has not started")
        return tally_votes(self.state.votes, self.order, self.state.ledger, self.script.culprit_ids)


def new_game(
    script: Script,
    roster: Sequence[AgentBackend] | Sequence[tuple[str, AgentBackend]],
    config: GameConfig | None = None,
    *,
    summarizer: AgentBackend | None = None,
) -> Game:
    return Game(script, roster, config, summarizer=summarizer)
