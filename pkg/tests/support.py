"""Shared fixtures and fakes for the test suite."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from mirage.agents.backends import AgentBackend, CompletionRequest, ScriptedBackend
from mirage.agents.parsing import render_raw
from mirage.script_model import Script, bundled_script_path, load_script, script_from_dict

MANOR_PATH = bundled_script_path()
REPO = Path(__file__).resolve().parent.parent
DEMO_CONFIG = REPO / "configs" / "demo.toml"
HONG, CHEN, WEN = "Madam Hong", "Butler Chen", "Doctor Wen"


def manor() -> Script:
    return load_script(MANOR_PATH)


def manor_doc() -> dict:
    return json.loads(MANOR_PATH.read_text(encoding="utf-8"))


def script_doc(
    agents: int,
    clues: int,
    *,
    stages: int = 1,
    structure: str | None = None,
    kind: str = "Orthodox",
    ending: str = "Close",
    key_every: int = 3,
    script_id: str = "synthetic",
) -> dict:
    """A valid script document with the requested shape."""
    structure = structure or ("Single" if stages == 1 else "Multi")
    names = [f"Guest {i}" for i in range(agents)]
    places = ["Hall", "Library", "Kitchen", "Attic", "Cellar", "Garden", "Chapel"]
    chars = []
    for i, name in enumerate(names):
        body = [f"Stage {s} notes for {name}." for s in range(stages)]
        chars.append(
            {
                "id": name,
                "story": f"{name} came to the house for the reading of the will.",
                "script": body if structure == "Multi" else body[0],
                "relationships": f"{name} knows everyone only by reputation.",
                "performance": "Quiet and watchful.",
                "goals": "Learn who is lying.",
                "abilities": "",
                "private_clues": [],
            }
        )
    return {
        "id": script_id,
        "title": "Synthetic",
        "language": "en",
        "structure": structure,
        "kind": kind,
        "ending": ending,
        "stages": [{"index": s, "unlock_round": 2 * s} for s in range(stages)],
        "characters": chars,
        "clues": [
            {
                "id": f"k{j}",
                "location": places[j % len(places)],
                "text": f"Clue number {j} found in the {places[j % len(places)].lower()}.",
                "is_key": j % key_every == 0,
            }
            for j in range(clues)
        ],
        "truth": f"{names[-1]} did it.",
        "culprit_ids": [names[-1]],
    }


def synthetic(agents: int, clues: int, **kw) -> Script:
    return script_from_dict(script_doc(agents, clues, **kw))


def raw(response: str, thought: str = "considered") -> str:
    return render_raw(thought, response)


# Per-kind plays for a fully scripted three-player mini_manor game.
MANOR_PLAYS = {
    HONG: {
        "Introduction": [raw("I am Madam Hong, owner of this manor.")],
        "Discuss": [raw("The doctor arrived late and left the study door open.")],
        "Converse": [
            raw("【Investigate】【Safe Box】: The safe was opened without force."),
            raw(f"【Ask】【{WEN}】: Where were you after the storm began?"),
        ],
        "AskReply": [raw("I was in the guest wing.")],
        "Vote": [raw(WEN)],
        "SuspicionScore": [raw("1"), raw("2")],
        "TrustScore": [raw("1")],
        "HistorySummary": [raw("Narrator: 【Speak】: Earlier talk circled the study.")],
    },
    CHEN: {
        "Introduction": [raw("Butler Chen, twenty years in service.")],
        "Discuss": [raw("I locked the cellar at nine and heard footsteps in the study.")],
        "Converse": [
            raw("【Investigate】【Study】: The desk drawer looks disturbed."),
            raw("【Investigate】【Wine Cellar】: A bottle is missing."),
        ],
        "AskReply": [raw("I was polishing silver.")],
        "Vote": [raw(WEN)],
        "SuspicionScore": [raw("2"), raw("0")],
        "TrustScore": [raw("1"), raw("2")],
        "HistorySummary": [raw("Narrator: 【Speak】: Earlier talk covered the cellar.")],
    },
    WEN: {
        "Introduction": [raw("Doctor Wen, the family physician.")],
        "Discuss": [raw("I was reading in the garden. The butler had every key.")],
        "Converse": [
            raw(f"【Ask】【{CHEN}】: Who else holds a key to the study?"),
            raw("【Investigate】【Garden】: Fresh footprints by the gate."),
        ],
        "AskReply": [raw("I was in the garden the whole evening.")],
        "Vote": [raw(CHEN)],
        "SuspicionScore": [raw("1")],
        "TrustScore": [raw("0"), raw("1")],
        "HistorySummary": [raw("Narrator: 【Speak】: Earlier talk was about keys.")],
    },
}


def manor_roster(plays: dict | None = None) -> list[tuple[str, ScriptedBackend]]:
    plays = copy.deepcopy(plays or MANOR_PLAYS)
    return [(cid, ScriptedBackend(plays[cid], repeat=True)) for cid in (HONG, CHEN, WEN)]


class FaultyBackend(AgentBackend):
    """Emits ``bad`` unparseable outputs, then ``good`` forever."""

    name = "faulty"

    def __init__(self, bad: int, good: str, garbage: str = "no markers here"):
        super().__init__()
        self.bad = bad
        self.good = good
        self.garbage = garbage
        self.calls: list[CompletionRequest] = []

    def _complete(self, request: CompletionRequest) -> str:
        self.calls.append(request)
        return self.garbage if len(self.calls) <= self.bad else self.good


class ConstantBackend(AgentBackend):
    """Answers every request with a fixed string."""

    def __init__(self, text: str):
        super().__init__()
        self.text = text

    def _complete(self, request: CompletionRequest) -> str:
        return self.text
