"""Script data model: characters, clues, stage segments and scenario metadata.

Scripts are stored as one UTF-8 JSON document each. ``truth`` and every
character's ``private_clues`` live in the same document but are treated as
confidential by the prompt layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .errors import FormatError, SchemaViolation, ScriptIoError
from .tokens import count_tokens

PARTS = ("story", "script", "relationships", "performance", "goals", "abilities")
REQUIRED_PARTS = PARTS[:5]


class Language(str, Enum):
    ZH = "zh"
    EN = "en"


class Structure(str, Enum):
    SINGLE = "Single"
    MULTI = "Multi"


class Kind(str, Enum):
    ORTHODOX = "Orthodox"
    UNORTHODOX = "Unorthodox"


class Ending(str, Enum):
    CLOSE = "Close"
    OPEN = "Open"


@dataclass(frozen=True)
class StageSegment:
    index: int
    unlock_round: int


@dataclass(frozen=True)
class Clue:
    id: str
    location: str
    text: str
    is_key: bool = False


@dataclass(frozen=True)
class CharacterProfile:
    """One character's dossier.

    ``script`` is a single string for Single-structure scripts and a tuple
    with one entry per stage for Multi-structure scripts.
    """

    id: str
    story: str
    script: str | tuple[str, ...]
    relationships: str
    performance: str
    goals: str
    abilities: str = ""
    private_clues: tuple[str, ...] = ()

    def part(self, name: str, *, stages: int | None = None) -> str:
        """Text of one of the six parts; staged scripts are joined in order."""
        value = getattr(self, name)
        if isinstance(value, tuple):
            chunks = value if stages is None else value[:stages]
            return "\n".join(chunks)
        return value


@dataclass(frozen=True)
class Script:
    id: str
    title: str
    language: Language
    structure: Structure
    kind: Kind
    ending: Ending
    stages: tuple[StageSegment, ...]
    characters: tuple[CharacterProfile, ...]
    clues: tuple[Clue, ...]
    truth: str
    culprit_ids: frozenset[str]

    def character(self, cid: str) -> CharacterProfile:
        for c in self.characters:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def clue(self, clue_id: str) -> Clue:
        for c in self.clues:
            if c.id == clue_id:
                return c
        raise KeyError(clue_id)

    @property
    def character_ids(self) -> list[str]:
        return [c.id for c in self.characters]

    @property
    def locations(self) -> list[str]:
        """Distinct clue locations in first-appearance order."""
        return list(dict.fromkeys(c.location for c in self.clues))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ScriptStats:
    agents: int
    clues: int
    stages: int
    words: int


def validate_script(script: Script) -> list[Violation]:
    """Return every invariant the script breaks; empty when it is valid."""
    out: list[Violation] = []
    ids = [c.id for c in script.characters]
    if len(ids) < 2:
        out.append(Violation("TooFewCharacters", f"need at least 2 characters, got {len(ids)}"))
    for dup in _duplicates(ids):
        out.append(Violation("DuplicateCharacterId", f"character id {dup!r} appears more than once"))
    if not script.culprit_ids:
        out.append(Violation("NoCulprit", "culprit_ids is empty"))
    for cid in sorted(script.culprit_ids):
        if cid not in ids:
            out.append(Violation("UnknownCulprit", f"culprit {cid!r} is not a character"))
    if ids and set(ids) <= set(script.culprit_ids):
        out.append(Violation("NoCivilian", "every character is a culprit"))

    clue_ids = [c.id for c in script.clues]
    for dup in _duplicates(clue_ids):
        out.append(Violation("DuplicateClueId", f"clue id {dup!r} appears more than once"))
    for clue in script.clues:
        if not clue.location.strip():
            out.append(Violation("EmptyClueLocation", f"clue {clue.id!r} has an empty location"))

    n_stages = len(script.stages)
    if n_stages < 1:
        out.append(Violation("NoStages", "a script needs at least one stage"))
    if (script.structure is Structure.SINGLE) != (n_stages == 1):
        out.append(
            Violation(
                "StructureStageMismatch",
                f"{script.structure.value} structure with {n_stages} stage(s)",
            )
        )
    for pos, stage in enumerate(script.stages):
        if stage.index != pos:
            out.append(Violation("StageIndexOrder", f"stage at position {pos} has index {stage.index}"))
    rounds = [s.unlock_round for s in script.stages]
    if rounds and rounds[0] != 0:
        out.append(Violation("FirstStageUnlock", "stage 0 must unlock at round 0"))
    if any(b <= a for a, b in zip(rounds, rounds[1:])):
        out.append(Violation("StageUnlockOrder", "unlock_round must strictly increase with index"))

    known_clues = set(clue_ids)
    for ch in script.characters:
        for part in REQUIRED_PARTS:
            value = ch.part(part)
            if not value.strip():
                out.append(Violation("EmptyPart", f"character {ch.id!r} has an empty {part!r} part"))
        if script.structure is Structure.MULTI:
            if not isinstance(ch.script, tuple) or len(ch.script) != n_stages:
                got = len(ch.script) if isinstance(ch.script, tuple) else 1
                out.append(
                    Violation(
                        "StageScriptCount",
                        f"character {ch.id!r} has {got} script entries for {n_stages} stages",
                    )
                )
        for clue_id in ch.private_clues:
            if clue_id not in known_clues:
                out.append(
                    Violation("UnknownPrivateClue", f"character {ch.id!r} holds unknown clue {clue_id!r}")
                )
    return out


def _duplicates(items: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    dups: list[str] = []
    for item in items:
        if item in seen and item not in dups:
            dups.append(item)
        seen.add(item)
    return dups


def script_stats(script: Script) -> ScriptStats:
    words = 0
    for ch in script.characters:
        words += sum(count_tokens(ch.part(p)) for p in PARTS)
    words += sum(count_tokens(c.text) for c in script.clues)
    return ScriptStats(
        agents=len(script.characters),
        clues=len(script.clues),
        stages=len(script.stages),
        words=words,
    )


# -- serialization -------------------------------------------------------------


def _require(doc: dict, key: str, kind: type, where: str) -> Any:
    if key not in doc:
        raise FormatError("missing key", field=f"{where}{key}")
    value = doc[key]
    if kind is str and not isinstance(value, str):
        raise FormatError("expected a string", field=f"{where}{key}")
    if kind is list and not isinstance(value, list):
        raise FormatError("expected a list", field=f"{where}{key}")
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise FormatError("expected an integer", field=f"{where}{key}")
    return value


def _enum(enum_cls, value, field_name: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = "|".join(m.value for m in enum_cls)
        raise FormatError(f"{value!r} is not one of {allowed}", field=field_name) from None


def script_from_dict(doc: Any) -> Script:
    """Build a Script from a decoded JSON document without validating invariants."""
    if not isinstance(doc, dict):
        raise FormatError("top-level value must be an object")
    stages = []
    for i, raw in enumerate(_require(doc, "stages", list, "")):
        where = f"stages[{i}]."
        if not isinstance(raw, dict):
            raise FormatError("expected an object", field=where[:-1])
        stages.append(
            StageSegment(
                index=_require(raw, "index", int, where),
                unlock_round=_require(raw, "unlock_round", int, where),
            )
        )
    characters = []
    for i, raw in enumerate(_require(doc, "characters", list, "")):
        where = f"characters[{i}]."
        if not isinstance(raw, dict):
            raise FormatError("expected an object", field=where[:-1])
        script_part = raw.get("script")
        if isinstance(script_part, list):
            if not all(isinstance(s, str) for s in script_part):
                raise FormatError("expected a list of strings", field=f"{where}script")
            script_part = tuple(script_part)
        elif not isinstance(script_part, str):
            raise FormatError("expected a string or list of strings", field=f"{where}script")
        private = raw.get("private_clues", [])
        if not isinstance(private, list) or not all(isinstance(p, str) for p in private):
            raise FormatError("expected a list of clue ids", field=f"{where}private_clues")
        abilities = raw.get("abilities", "")
        if not isinstance(abilities, str):
            raise FormatError("expected a string", field=f"{where}abilities")
        characters.append(
            CharacterProfile(
                id=_require(raw, "id", str, where),
                story=_require(raw, "story", str, where),
                script=script_part,
                relationships=_require(raw, "relationships", str, where),
                performance=_require(raw, "performance", str, where),
                goals=_require(raw, "goals", str, where),
                abilities=abilities,
                private_clues=tuple(private),
            )
        )
    clues = []
    for i, raw in enumerate(_require(doc, "clues", list, "")):
        where = f"clues[{i}]."
        if not isinstance(raw, dict):
            raise FormatError("expected an object", field=where[:-1])
        is_key = raw.get("is_key", False)
        if not isinstance(is_key, bool):
            raise FormatError("expected a boolean", field=f"{where}is_key")
        clues.append(
            Clue(
                id=_require(raw, "id", str, where),
                location=_require(raw, "location", str, where),
                text=_require(raw, "text", str, where),
                is_key=is_key,
            )
        )
    culprits = _require(doc, "culprit_ids", list, "")
    if not all(isinstance(c, str) for c in culprits):
        raise FormatError("expected a list of character ids", field="culprit_ids")
    return Script(
        id=_require(doc, "id", str, ""),
        title=_require(doc, "title", str, ""),
        language=_enum(Language, _require(doc, "language", str, ""), "language"),
        structure=_enum(Structure, _require(doc, "structure", str, ""), "structure"),
        kind=_enum(Kind, _require(doc, "kind", str, ""), "kind"),
        ending=_enum(Ending, _require(doc, "ending", str, ""), "ending"),
        stages=tuple(stages),
        characters=tuple(characters),
        clues=tuple(clues),
        truth=_require(doc, "truth", str, ""),
        culprit_ids=frozenset(culprits),
    )


def script_to_dict(script: Script) -> dict:
    return {
        "id": script.id,
        "title": script.title,
        "language": script.language.value,
        "structure": script.structure.value,
        "kind": script.kind.value,
        "ending": script.ending.value,
        "stages": [{"index": s.index, "unlock_round": s.unlock_round} for s in script.stages],
        "characters": [
            {
                "id": c.id,
                "story": c.story,
                "script": list(c.script) if isinstance(c.script, tuple) else c.script,
                "relationships": c.relationships,
                "performance": c.performance,
                "goals": c.goals,
                "abilities": c.abilities,
                "private_clues": list(c.private_clues),
            }
            for c in script.characters
        ],
        "clues": [
            {"id": c.id, "location": c.location, "text": c.text, "is_key": c.is_key}
            for c in script.clues
        ],
        "truth": script.truth,
        "culprit_ids": sorted(script.culprit_ids),
    }


def load_script(path: str | Path) -> Script:
    """Load and validate a script document.

    Raises ScriptIoError, FormatError (with line or field locus) or
    SchemaViolation listing every broken invariant.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScriptIoError(f"cannot read script {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    script = script_from_dict(doc)
    violations = validate_script(script)
    if violations:
        raise SchemaViolation(violations)
    return script


def save_script(script: Script, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(script_to_dict(script), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def bundled_script_path(name: str = "mini_manor.json") -> Path:
    return Path(__file__).parent / "data" / name
