"""Run orchestration: configuration, transcript persistence, replay and reports."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agents.backends import AgentBackend, Attempt, RandomBackend, ScriptedBackend, remote_backend
from .engine import Event, EventKind, Game, GameConfig, Phase, new_game, tally_votes
from .errors import ConfigError, CorruptTranscript, NoCluesDefined, RerunExhausted, StorageError
from .memory import SuspicionTrustLedger, UsageCounters, usage_of
from .metrics import (
    ABILITIES,
    AbilityScores,
    GameMetrics,
    MetricReport,
    RougeScore,
    TranscriptView,
    character_metrics,
    cic,
    judge_abilities,
    reconstruct_and_score,
    victory_mrr,
)
from .script_model import Script, load_script

logger = logging.getLogger(__name__)

TRANSCRIPT_NAME = "transcript.jsonl"
REPORT_NAME = "report.json"
RECORD_KEYS = ("seq", "round", "phase", "actor", "kind", "payload", "usage")


# -- configuration ---------------------------------------------------------------


@dataclass
class RunConfig:
    script: Path
    rounds: int = 5
    seed: int = 0
    language: str = "en"
    agents: dict[str, dict[str, Any]] = field(default_factory=dict)
    default_agent: dict[str, Any] = field(default_factory=lambda: {"type": "random"})
    judge: dict[str, Any] | None = None
    summarizer: dict[str, Any] | None = None
    max_retries: int = 3
    context_budget: int = 6000
    out: Path = Path("runs")
    script_summary: bool = False
    seeds: list[int] = field(default_factory=list)
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.context_budget <= 0:
            raise ConfigError("context_budget must be positive")
        if self.language not in ("en", "zh"):
            raise ConfigError(f"language must be en or zh, got {self.language!r}")

    def backend_spec(self, cid: str) -> dict[str, Any]:
        return self.agents.get(cid, self.default_agent)


def load_config(path: str | Path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    base = path.parent
    if "script" not in doc:
        raise ConfigError("config needs a 'script' path")
    agents = dict(doc.get("agents", {}))
    default = agents.pop("default", {"type": "random"})
    known = {
        "script", "rounds", "seed", "language", "agents", "judge", "summarizer",
        "max_retries", "context_budget", "out", "script_summary", "seeds",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(
        script=base / doc["script"],
        rounds=doc.get("rounds", 5),
        seed=doc.get("seed", 0),
        language=doc.get("language", "en"),
        agents=agents,
        default_agent=default,
        judge=doc.get("judge"),
        summarizer=doc.get("summarizer"),
        max_retries=doc.get("max_retries", 3),
        context_budget=doc.get("context_budget", 6000),
        out=base / doc.get("out", "runs"),
        script_summary=doc.get("script_summary", False),
        seeds=list(doc.get("seeds", [])),
        base_dir=base,
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, Path(value) if key == "out" else value)
    return cfg


def build_backend(spec: Mapping[str, Any], *, seed: int, slot: int, base_dir: Path = Path(".")) -> AgentBackend:
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "random":
        return RandomBackend(spec.get("seed", seed * 1009 + slot))
    if kind == "scripted":
        if "playbook" in spec:
            try:
                plays = json.loads((base_dir / spec["playbook"]).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot load playbook {spec['playbook']}: {exc}") from exc
        elif "plays" in spec:
            plays = spec["plays"]
        else:
            raise ConfigError("scripted backend needs 'plays' or 'playbook'")
        return ScriptedBackend(plays, repeat=bool(spec.get("repeat", False)))
    if kind == "remote":
        return remote_backend(spec)
    raise ConfigError(f"unknown backend type {kind!r}")


# -- transcripts -----------------------------------------------------------------


def canonical_line(event: Event) -> str:
    return json.dumps(event.to_record(), ensure_ascii=False, sort_keys=True, separators=(",", ":"))


class TranscriptWriter:
    """Appends canonical JSON lines and keeps a running SHA-256 of the bytes."""

    def __init__(self, path: Path):
        self.path = path
        self._hash = hashlib.sha256()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = path.open("w", encoding="utf-8", newline="\n")
        except OSError as exc:
            raise StorageError(f"cannot open transcript {path}: {exc}") from exc

    def write(self, events: Iterable[Event]) -> None:
        for ev in events:
            line = canonical_line(ev) + "\n"
            try:
                self._fh.write(line)
            except OSError as exc:
                raise StorageError(f"cannot write transcript {self.path}: {exc}") from exc
            self._hash.update(line.encode("utf-8"))

    def close(self) -> str:
        self._fh.close()
        return self._hash.hexdigest()


def transcript_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_transcript(path: str | Path) -> list[Event]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorruptTranscript(f"cannot read transcript {path}: {exc}") from exc
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptTranscript(f"line {lineno}: malformed record ({exc.msg})") from exc
        if not isinstance(rec, dict) or set(rec) != set(RECORD_KEYS):
            raise CorruptTranscript(f"line {lineno}: record keys must be {', '.join(RECORD_KEYS)}")
        if not isinstance(rec["payload"], dict) or not isinstance(rec["usage"], dict):
            raise CorruptTranscript(f"line {lineno}: payload and usage must be objects")
        events.append(Event.from_record(rec))
    return events


# -- reports ---------------------------------------------------------------------


def build_report(
    script: Script,
    order: Sequence[str],
    ledger: SuspicionTrustLedger,
    revealed_by: Mapping[str, Sequence[str]],
    votes: Mapping[str, str | None],
    abilities: Mapping[str, AbilityScores],
    rouge: Mapping[str, Mapping[str, RougeScore]],
    usage: UsageCounters,
    *,
    voted: bool = True,
) -> MetricReport:
    if voted:
        result = tally_votes(votes, order, ledger, script.culprit_ids)
        ranking = [c for c, _, _ in result.accused_ranking]
        mrr, winner, final = victory_mrr(ranking, script.culprit_ids), result.winner.value, result.final_accused
    else:
        ranking, mrr, winner, final = [], None, None, None
    try:
        game_key = cic(revealed_by, script, key_only=True)
    except NoCluesDefined:
        game_key = None
    try:
        game_cic = cic(revealed_by, script)
    except NoCluesDefined:
        game_cic = 0.0
    game = GameMetrics(
        script_id=script.id,
        victory_mrr=mrr,
        winner=winner,
        final_accused=final,
        ranking=ranking,
        cic=game_cic,
        cic_key=game_key,
        failures=usage.failures,
        usage=usage.as_dict(),
    )
    chars = {
        cid: character_metrics(ledger, revealed_by, script, cid, abilities.get(cid), rouge.get(cid))
        for cid in order
    }
    return MetricReport(game=game, characters=chars)


@dataclass
class ReportBundle:
    transcript_path: Path
    report: MetricReport
    canonical_hash: str
    report_path: Path | None = None


def _judge_game(game: Game, judge: AgentBackend, script_summary: bool):
    """Score every character with the judge, emitting Score/Failure events."""
    view = TranscriptView(
        script=game.script,
        history=game.full_history.render(),
        actions=game.state.actions,
        roster=game.order,
        language=game.language,
    )
    events: list[Event] = []
    abilities: dict[str, AbilityScores] = {}
    rouge: dict[str, dict[str, RougeScore]] = {}
    for cid in game.order:
        trace: list[Attempt] = []
        try:
            scores = judge_abilities(view, cid, judge, policy=game.policy, trace=trace)
        except RerunExhausted:
            scores = None
        events.extend(game.failure_events(None, trace))
        if scores is not None:
            abilities[cid] = scores
            payload = {"metric": "abilities", "character": cid, **scores.to_dict()}
            events.append(game.emit(EventKind.SCORE, None, payload, usage_of([a for a in trace if a.ok])))

        trace = []
        try:
            parts = reconstruct_and_score(
                view,
                cid,
                judge,
                policy=game.policy,
                trace=trace,
                summarizer=judge if script_summary else None,
            )
        except RerunExhausted:
            parts = None
        events.extend(game.failure_events(None, trace))
        if parts:
            rouge[cid] = parts
            payload = {
                "metric": "rouge",
                "character": cid,
                "parts": {p: s.to_dict() for p, s in parts.items()},
            }
            events.append(game.emit(EventKind.SCORE, None, payload, usage_of([a for a in trace if a.ok])))
    return events, abilities, rouge


def run(config: RunConfig, *, seed: int | None = None) -> ReportBundle:
    """Play one game end to end, persist its transcript and compute its report."""
    seed = config.seed if seed is None else seed
    script = load_script(config.script)
    roster = [
        (cid, build_backend(config.backend_spec(cid), seed=seed, slot=i, base_dir=config.base_dir))
        for i, cid in enumerate(script.character_ids)
    ]
    judge = (
        build_backend(config.judge, seed=seed, slot=len(roster), base_dir=config.base_dir)
        if config.judge
        else None
    )
    summarizer = (
        build_backend(config.summarizer, seed=seed, slot=len(roster) + 1, base_dir=config.base_dir)
        if config.summarizer
        else None
    )
    game = new_game(
        script,
        roster,
        GameConfig(
            rounds=config.rounds,
            seed=seed,
            language=config.language,
            max_retries=config.max_retries,
            context_budget=config.context_budget,
        ),
        summarizer=summarizer,
    )
    out_dir = Path(config.out) / f"{script.id}-seed{seed}"
    writer = TranscriptWriter(out_dir / TRANSCRIPT_NAME)
    try:
        while not game.finished:
            writer.write(game.step())
        abilities: dict = {}
        rouge: dict = {}
        if judge is not None:
            events, abilities, rouge = _judge_game(game, judge, config.script_summary)
            writer.write(events)
    finally:
        digest = writer.close()
    st = game.state
    report = build_report(
        script, game.order, st.ledger, st.revealed_by, st.votes, abilities, rouge, st.counters
    )
    report_path = out_dir / REPORT_NAME
    report_path.write_text(
        json.dumps({"transcript_sha256": digest, "report": report.to_dict()}, ensure_ascii=False, indent=2)
        + "\n",
        encoding="utf-8",
    )
    return ReportBundle(writer.path, report, digest, report_path)


def run_many(config: RunConfig, seeds: Sequence[int] | None = None, *, workers: int = 4) -> list[ReportBundle]:
    """Run one game per seed concurrently; results come back in seed order."""
    seeds = list(seeds or config.seeds or [config.seed])
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(seeds)))) as pool:
        bundles = list(pool.map(lambda s: run(config, seed=s), seeds))
    if len(bundles) > 1:
        table = render_table([(f"{b.report.game.script_id}-seed{s}", b.report) for s, b in zip(seeds, bundles)])
        (Path(config.out) / "aggregate.txt").write_text(table + "\n", encoding="utf-8")
    return bundles


# -- replay ----------------------------------------------------------------------


def replay(transcript_path: str | Path, script_path: str | Path) -> MetricReport:
    """Recompute a game's report purely from its recorded events."""
    script = load_script(script_path)
    return replay_events(read_transcript(transcript_path), script)


def replay_events(events: Sequence[Event], script: Script, *, partial: bool = False) -> MetricReport:
    """Rebuild the report from events.

    With ``partial=True`` a transcript that stops before the game finished
    is accepted; vote-derived fields are then None and the roster order
    falls back to the script's order for characters never introduced.
    """
    known = set(script.character_ids)
    clue_ids = {c.id for c in script.clues}
    kinds = {k.value for k in EventKind}
    order: list[str] = []
    ledger = SuspicionTrustLedger()
    revealed_by: dict[str, list[str]] = {}
    revealed: set[str] = set()
    votes: dict[str, str | None] = {}
    abilities: dict[str, AbilityScores] = {}
    rouge: dict[str, dict[str, RougeScore]] = {}
    usage = UsageCounters()
    failures = 0
    finished = False

    for expected, ev in enumerate(events):
        if ev.seq != expected:
            raise CorruptTranscript(f"seq gap: expected {expected}, found {ev.seq}")
        if ev.kind not in kinds:
            raise CorruptTranscript(f"seq {ev.seq}: unknown event kind {ev.kind!r}")
        if ev.actor is not None and ev.actor not in known:
            raise CorruptTranscript(f"seq {ev.seq}: unknown actor {ev.actor!r}")
        try:
            usage = usage + UsageCounters.from_dict(ev.usage)
        except (TypeError, ValueError) as exc:
            raise CorruptTranscript(f"seq {ev.seq}: bad usage record") from exc
        p = ev.payload
        try:
            if ev.kind == EventKind.SPEAK and ev.phase == Phase.INTRODUCTION.value:
                if ev.actor in order:
                    raise CorruptTranscript(f"seq {ev.seq}: {ev.actor} introduced twice")
                order.append(ev.actor)
            elif ev.kind == EventKind.CLUE_REVEALED:
                clue_id = p["clue_id"]
                if clue_id not in clue_ids:
                    raise CorruptTranscript(f"seq {ev.seq}: unknown clue {clue_id!r}")
                if clue_id in revealed:
                    raise CorruptTranscript(f"seq {ev.seq}: clue {clue_id!r} revealed twice")
                revealed.add(clue_id)
                revealed_by.setdefault(ev.actor, []).append(clue_id)
            elif ev.kind == EventKind.SCORE:
                metric = p["metric"]
                if metric == "ledger":
                    ledger.record(p["observer"], p["subject"], p["suspicion"], p["trust"])
                elif metric == "abilities":
                    abilities[p["character"]] = AbilityScores(**{a: p[a] for a in ABILITIES})
                elif metric == "rouge":
                    rouge[p["character"]] = {
                        part: RougeScore(s["precision"], s["recall"], s["f1"]) for part, s in p["parts"].items()
                    }
                else:
                    raise CorruptTranscript(f"seq {ev.seq}: unknown score metric {metric!r}")
            elif ev.kind == EventKind.VOTE:
                accused = p["accused"]
                if accused is not None and accused not in known:
                    raise CorruptTranscript(f"seq {ev.seq}: vote for unknown character {accused!r}")
                votes[ev.actor] = accused
            elif ev.kind == EventKind.FAILURE:
                failures += 1
            elif ev.kind == EventKind.PHASE_CHANGE and p.get("to") == Phase.FINISHED.value:
                finished = True
        except CorruptTranscript:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptTranscript(f"seq {ev.seq}: malformed {ev.kind} payload ({exc})") from exc

    if not finished and not partial:
        raise CorruptTranscript("transcript ends before the game finished")
    if partial:
        order.extend(c for c in script.character_ids if c not in order)
    elif set(order) != known:
        raise CorruptTranscript("introduction phase does not cover the roster")
    if failures != usage.failures:
        raise CorruptTranscript(f"{failures} Failure records but usage counts {usage.failures}")
    for cid in order:
        revealed_by.setdefault(cid, [])
    return build_report(
        script, order, ledger, revealed_by, votes, abilities, rouge, usage, voted=finished
    )


# -- tables ----------------------------------------------------------------------


def _fmt(value, spec: str) -> str:
    return "-" if value is None else format(value, spec)


def render_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Plain-text table: Victory, TII, CIC, ICI, SCI, then failures and usage."""
    header = ["Game", "Victory", "TII", "CIC", "ICI", "SCI", "#Failure", "Env Tokens / Envs", "User Tokens / Users"]
    body = []
    summaries = []
    for name, rep in rows:
        s = rep.summary_row()
        summaries.append((s, rep.game))
        u = rep.game.usage
        body.append(
            [
                name,
                _fmt(s["Victory"], ".3f"),
                _fmt(s["TII"], ".3f"),
                _fmt(s["CIC"], ".3f"),
                _fmt(s["ICI"], ".2f"),
                _fmt(s["SCI"], ".2f"),
                str(rep.game.failures),
                f"{u['env_tokens']:,} / {u['envs']:,}",
                f"{u['user_tokens']:,} / {u['users']:,}",
            ]
        )
    if len(rows) > 1:

        def mean_of(key):
            values = [s[key] for s, _ in summaries if s[key] is not None]
            return fmean(values) if values else None

        def mean_usage(key):
            return fmean(g.usage[key] for _, g in summaries)

        body.append(
            [
                "mean",
                _fmt(mean_of("Victory"), ".3f"),
                _fmt(mean_of("TII"), ".3f"),
                _fmt(mean_of("CIC"), ".3f"),
                _fmt(mean_of("ICI"), ".2f"),
                _fmt(mean_of("SCI"), ".2f"),
                f"{fmean(g.failures for _, g in summaries):.1f}",
                f"{mean_usage('env_tokens'):,.0f} / {mean_usage('envs'):,.0f}",
                f"{mean_usage('user_tokens'):,.0f} / {mean_usage('users'):,.0f}",
            ]
        )
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in body)
    return "\n".join(lines)


def collect_reports(directory: str | Path) -> list[tuple[str, MetricReport]]:
    directory = Path(directory)
    rows = []
    for path in sorted(directory.rglob(REPORT_NAME)):
        doc = json.loads(path.read_text(encoding="utf-8"))
        rows.append((path.parent.name, MetricReport.from_dict(doc["report"])))
    return rows
