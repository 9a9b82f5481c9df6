"""Evaluation metrics: TII/FII, CIC, Rouge-L, SCI, ICI, Victory MRR, Kendall tau,
and the judge-driven ability and reconstruction scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from .agents.backends import AgentBackend, Attempt, RerunPolicy, solicit
from .agents.prompts import PromptContext, PromptKind
from .errors import (
    CulpritNotRanked,
    EmptyReconstruction,
    ItemSetMismatch,
    NoCluesDefined,
    NoObservations,
)
from .engine import describe_character, private_clue_text
from .memory import SuspicionTrustLedger
from .script_model import PARTS, Script
from .tokens import tokenize

ABILITIES = ("reasoning", "communication", "observation", "innovation", "role_play")
ABILITY_NAMES = {
    "en": {
        "reasoning": "Reasoning and Analysis",
        "communication": "Communication and Cooperation",
        "observation": "Detail Observation",
        "innovation": "Creative Thinking",
        "role_play": "Role-Playing",
    },
    "zh": {
        "reasoning": "推理分析",
        "communication": "沟通合作",
        "observation": "细节观察",
        "innovation": "创新思维",
        "role_play": "角色扮演",
    },
}
PART_NAMES = {
    "en": {
        "story": "Story",
        "script": "Script",
        "relationships": "Relationships",
        "performance": "Performance",
        "goals": "Goals",
        "abilities": "Abilities",
    },
    "zh": {
        "story": "人物故事",
        "script": "人物剧本",
        "relationships": "人物关系",
        "performance": "角色表现",
        "goals": "角色目标",
        "abilities": "其他能力",
    },
}


# -- trust / falsification -------------------------------------------------------


def _split(ledger: SuspicionTrustLedger, subject: str) -> tuple[int, int]:
    sus, trust = ledger.totals(subject)
    if sus + trust == 0:
        raise NoObservations(f"no suspicion or trust recorded for {subject!r}")
    return sus, trust


def tii(ledger: SuspicionTrustLedger, subject: str, *, exact: bool = False) -> float | Fraction:
    """Share of trust in all scores other characters gave ``subject``."""
    sus, trust = _split(ledger, subject)
    return Fraction(trust, sus + trust) if exact else trust / (sus + trust)


def fii(ledger: SuspicionTrustLedger, subject: str, *, exact: bool = False) -> float | Fraction:
    """Share of suspicion; the complement of :func:`tii`."""
    sus, trust = _split(ledger, subject)
    return Fraction(sus, sus + trust) if exact else sus / (sus + trust)


# -- clues -----------------------------------------------------------------------


def cic(
    revealed_by: Mapping[str, Iterable[str]],
    script: Script,
    scope: str | None = None,
    *,
    key_only: bool = False,
) -> float:
    """Fraction of the script's clues (or key clues) revealed.

    ``scope`` is a character id for that character's own finds, or None for
    the whole game.
    """
    pool = {c.id for c in script.clues if c.is_key or not key_only}
    if not pool:
        raise NoCluesDefined("script defines no key clues" if key_only else "script defines no clues")
    if scope is None:
        found = set().union(*(set(v) for v in revealed_by.values())) if revealed_by else set()
    else:
        found = set(revealed_by.get(scope, ()))
    return len(found & pool) / len(pool)


# -- Rouge-L ---------------------------------------------------------------------


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate) if candidate else 0.0
    r = lcs / len(reference) if reference else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f1)


# -- judged indices --------------------------------------------------------------


@dataclass(frozen=True)
class AbilityScores:
    reasoning: int
    communication: int
    observation: int
    innovation: int
    role_play: int

    def __post_init__(self) -> None:
        for name in ABILITIES:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 20:
                raise ValueError(f"{name} must be an integer in [0, 20], got {value!r}")

    def to_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in ABILITIES}


def ici(scores: AbilityScores) -> float:
    """Mean of the four interaction abilities, scaled to [0, 100]."""
    total = scores.reasoning + scores.communication + scores.observation + scores.innovation
    return 100 * total / 80


def sci(role_play: int, rouge_f1_per_part: Sequence[float], *, role_weight: float = 0.5) -> float:
    """Blend of normalized role-play rating and mean reconstruction F1, in [0, 100]."""
    if not rouge_f1_per_part:
        raise EmptyReconstruction("no reconstructed parts to score")
    if not 0 <= role_play <= 20:
        raise ValueError(f"role_play must be in [0, 20], got {role_play}")
    return 100 * (role_weight * role_play / 20 + (1 - role_weight) * fmean(rouge_f1_per_part))


# -- ranking ---------------------------------------------------------------------


def victory_mrr(ranking: Sequence[str], culprit_ids: Iterable[str]) -> float:
    """Reciprocal rank of the best-placed culprit in the accusation ranking."""
    culprits = set(culprit_ids)
    for pos, cid in enumerate(ranking, 1):
        if cid in culprits:
            return 1 / pos
    raise CulpritNotRanked("no culprit appears in the ranking")


def mean_mrr(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise ValueError("no games to average")
    return fmean(values)


def kendall_tau(rank_a: Sequence, rank_b: Sequence) -> float:
    """Tau-a between two orderings of the same distinct items.

    Counts discordant pairs as inversions (merge sort), O(n log n).
    """
    n = len(rank_a)
    if n < 2 or len(set(rank_a)) != n or set(rank_a) != set(rank_b) or len(rank_b) != n:
        raise ItemSetMismatch("rankings must be permutations of the same >= 2 distinct items")
    pos_b = {item: i for i, item in enumerate(rank_b)}
    seq = [pos_b[item] for item in rank_a]
    discordant = _inversions(seq)
    pairs = n * (n - 1) // 2
    return (pairs - 2 * discordant) / pairs


def _inversions(seq: list[int]) -> int:
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    count = _inversions(left) + _inversions(right)
    i = j = 0
    merged = []
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            count += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return count


# -- judge-driven scoring --------------------------------------------------------


@dataclass(frozen=True)
class TranscriptView:
    """What judges see of a finished game."""

    script: Script
    history: str
    actions: Mapping[str, Sequence[str]]
    roster: Sequence[str]
    language: str = "en"

    def actions_of(self, cid: str) -> str:
        acts = self.actions.get(cid, ())
        return "\n".join(acts) if acts else ("None" if self.language == "en" else "无")


def judge_abilities(
    view: TranscriptView,
    character: str,
    judge: AgentBackend,
    *,
    policy: RerunPolicy | None = None,
    trace: list[Attempt] | None = None,
) -> AbilityScores:
    """One AbilityJudge solicitation per ability; the judge sees the solution."""
    policy = policy if policy is not None else RerunPolicy()
    names = ABILITY_NAMES[view.language]
    values = {}
    for ability in ABILITIES:
        ctx = PromptContext(
            name=character,
            description=describe_character(view.script, character, language=view.language),
            self_clues=private_clue_text(view.script, character, view.language),
            history=view.history,
            actions=view.actions_of(character),
            role_list=", ".join(view.roster),
            truth=view.script.truth,
            ability=names[ability],
        )
        parsed, _ = solicit(judge, PromptKind.ABILITY_JUDGE, ctx, policy, language=view.language, trace=trace)
        values[ability] = parsed.action
    return AbilityScores(**values)


def reference_part(script: Script, character: str, part: str) -> str:
    return script.character(character).part(part)


def reconstruct_and_score(
    view: TranscriptView,
    character: str,
    judge: AgentBackend,
    script: Script | None = None,
    *,
    policy: RerunPolicy | None = None,
    trace: list[Attempt] | None = None,
    summarizer: AgentBackend | None = None,
) -> dict[str, RougeScore]:
    """Reconstruct each nonempty script part from the public record and score it.

    The judge never sees the solution or the character's private clues. With a
    ``summarizer`` the reference is the summarized part, otherwise the raw text.
    """
    script = script or view.script
    policy = policy if policy is not None else RerunPolicy()
    names = PART_NAMES[view.language]
    out: dict[str, RougeScore] = {}
    for part in PARTS:
        reference = reference_part(script, character, part)
        if not reference.strip():
            continue
        if summarizer is not None:
            parsed, _ = solicit(
                summarizer,
                PromptKind.SCRIPT_SUMMARY,
                PromptContext(name=character, item=names[part], content=reference),
                policy,
                language=view.language,
                trace=trace,
            )
            reference = parsed.action
        ctx = PromptContext(
            name=character,
            history=view.history,
            actions=view.actions_of(character),
            role_list=", ".join(view.roster),
            script_part=names[part],
        )
        parsed, _ = solicit(judge, PromptKind.RECONSTRUCTION, ctx, policy, language=view.language, trace=trace)
        out[part] = rouge_l(tokenize(parsed.action), tokenize(reference))
    return out


# -- report ----------------------------------------------------------------------


@dataclass
class CharacterMetrics:
    tii: float | None
    fii: float | None
    cic: float
    cic_key: float | None
    accumulated_suspicion: int
    ici: float | None = None
    sci: float | None = None
    abilities: dict[str, int] | None = None
    rouge: dict[str, dict[str, float]] | None = None


@dataclass
class GameMetrics:
    script_id: str
    victory_mrr: float | None  # None only for partial replays that never voted
    winner: str | None
    final_accused: str | None
    ranking: list[str]
    cic: float
    cic_key: float | None
    failures: int
    usage: dict[str, int]


@dataclass
class MetricReport:
    game: GameMetrics
    characters: dict[str, CharacterMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": asdict(self.game),
            "characters": {cid: asdict(m) for cid, m in self.characters.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricReport:
        return cls(
            game=GameMetrics(**data["game"]),
            characters={cid: CharacterMetrics(**m) for cid, m in data["characters"].items()},
        )

    def summary_row(self) -> dict[str, float | None]:
        """Per-game means in table column order (Victory, TII, CIC, ICI, SCI)."""

        def avg(values):
            values = [v for v in values if v is not None]
            return fmean(values) if values else None

        chars = self.characters.values()
        return {
            "Victory": self.game.victory_mrr,
            "TII": avg(c.tii for c in chars),
            "CIC": self.game.cic,
            "ICI": avg(c.ici for c in chars),
            "SCI": avg(c.sci for c in chars),
        }


def character_metrics(
    ledger: SuspicionTrustLedger,
    revealed_by: Mapping[str, Iterable[str]],
    script: Script,
    character: str,
    abilities: AbilityScores | None = None,
    rouge: Mapping[str, RougeScore] | None = None,
) -> CharacterMetrics:
    try:
        t, f = tii(ledger, character), fii(ledger, character)
    except NoObservations:
        t = f = None
    try:
        key = cic(revealed_by, script, character, key_only=True)
    except NoCluesDefined:
        key = None
    try:
        clue_share = cic(revealed_by, script, character)
    except NoCluesDefined:
        clue_share = 0.0
    m = CharacterMetrics(
        tii=t,
        fii=f,
        cic=clue_share,
        cic_key=key,
        accumulated_suspicion=ledger.accumulated_suspicion(character),
    )
    if abilities is not None:
        m.abilities = abilities.to_dict()
        m.ici = ici(abilities)
    if rouge:
        m.rouge = {part: score.to_dict() for part, score in rouge.items()}
        if abilities is not None:
            m.sci = sci(abilities.role_play, [s.f1 for s in rouge.values()])
    return m
