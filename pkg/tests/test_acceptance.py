"""The ten acceptance criteria, each at its stated tolerance and time limit.

A PASS/FAIL line per criterion is printed in the "acceptance criteria"
section of the pytest summary.
"""

from __future__ import annotations

import hashlib
import itertools
import random
import time
from fractions import Fraction

import pytest

from mirage import harness
from mirage.agents import PromptKind, RandomBackend, RerunPolicy, solicit
from mirage.agents.parsing import HISTORY_LINE
from mirage.engine import GameConfig, Winner, new_game, tally_votes
from mirage.errors import RerunExhausted
from mirage.memory import HistoryEntry, HistoryLog, SuspicionTrustLedger, maybe_summarize
from mirage.metrics import cic, fii, kendall_tau, mean_mrr, rouge_l, tii, victory_mrr
from mirage.script_model import save_script
from support import (
    DEMO_CONFIG,
    MANOR_PATH,
    ConstantBackend,
    FaultyBackend,
    manor,
    manor_roster,
    raw,
    synthetic,
)
from test_agents import FULL_CTX
from test_metrics import lcs_oracle, tau_oracle


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _canonical_hash(events) -> str:
    h = hashlib.sha256()
    for e in events:
        h.update((harness.canonical_line(e) + "\n").encode("utf-8"))
    return h.hexdigest()


def test_ac1_tii_fii_formula_fidelity():
    rng = random.Random(1)
    subjects = "ABCDE"
    with Timer() as t:
        for _ in range(1000):
            ledger = SuspicionTrustLedger()
            records = []
            for _ in range(rng.randint(1, 30)):
                obs, subj = rng.sample(subjects, 2)
                s, tr = rng.randint(0, 2), rng.randint(0, 2)
                ledger.record(obs, subj, s, tr)
                records.append((obs, subj, s, tr))
            for subj in subjects:
                ps = sum(r[2] for r in records if r[1] == subj)
                pt = sum(r[3] for r in records if r[1] == subj)
                if ps + pt == 0:
                    continue
                assert abs(tii(ledger, subj) - pt / (ps + pt)) <= 1e-12
                assert abs(fii(ledger, subj) - ps / (ps + pt)) <= 1e-12
                assert tii(ledger, subj, exact=True) + fii(ledger, subj, exact=True) == Fraction(1)
    assert t.elapsed < 1.0, f"took {t.elapsed:.2f}s"


def test_ac2_rouge_l_oracle_equivalence():
    rng = random.Random(2)
    vocab = [f"w{i}" for i in range(8)]
    with Timer() as t:
        r = rouge_l("the cat sat on mat".split(), "the cat on the mat".split())
        assert (r.precision, r.recall, r.f1) == pytest.approx((0.8, 0.8, 0.8), abs=1e-12)
        for _ in range(1000):
            a = [rng.choice(vocab) for _ in range(rng.randint(0, 50))]
            b = [rng.choice(vocab) for _ in range(rng.randint(0, 50))]
            lcs = lcs_oracle(a, b)
            p = lcs / len(a) if a else 0.0
            rc = lcs / len(b) if b else 0.0
            expected = 2 * p * rc / (p + rc) if p + rc else 0.0
            assert rouge_l(a, b).f1 == expected
    assert t.elapsed < 5.0, f"took {t.elapsed:.2f}s"


def test_ac3_kendall_tau_exhaustive():
    identity = list(range(6))
    with Timer() as t:
        for perm in itertools.permutations(identity):
            assert kendall_tau(identity, list(perm)) == pytest.approx(tau_oracle(identity, list(perm)), abs=1e-12)
        swapped = kendall_tau(identity, [1, 0, 2, 3, 4, 5])
    assert swapped == pytest.approx(13 / 15, abs=1e-12)
    assert round(swapped, 3) == 0.867
    assert t.elapsed < 1.0, f"took {t.elapsed:.2f}s"


def test_ac4_protocol_conformance():
    script = manor()
    hashes = set()
    with Timer() as t:
        for _ in range(10):
            game = new_game(script, manor_roster(), GameConfig(rounds=5, seed=42))
            events = game.run()
            hashes.add(_canonical_hash(events))
    oc = [e for e in events if e.kind == "Speak" and e.phase == "OpenConversation"]
    interactions = [e for e in events if e.phase == "Interaction" and e.kind in ("Ask", "Investigate", "Speak")]
    accusations = [e for e in events if e.kind == "Accuse"]
    votes = [e for e in events if e.kind == "Vote"]
    assert len(oc) == 15
    assert len(interactions) <= 15
    assert len(accusations) == 3 and len(votes) == 3
    tally = {c: 0 for c in script.character_ids}
    for v in votes:
        if v.payload["accused"] is not None:
            tally[v.payload["accused"]] += 1
    result = game.state.result
    assert tally[result.final_accused] == max(tally.values())
    assert (result.winner is Winner.CIVILIANS) == (result.final_accused in script.culprit_ids)
    assert len(hashes) == 1
    assert t.elapsed < 1.0, f"took {t.elapsed:.2f}s"


def test_ac5_clue_mechanics_monte_carlo():
    script = manor()
    with Timer() as t:
        for seed in range(500):
            game = new_game(
                script,
                [RandomBackend(seed * 7 + i) for i in range(3)],
                GameConfig(rounds=5, seed=seed),
            )
            revealed: list[str] = []
            by_round: dict[int, float] = {}
            for e in game.run():
                if e.kind == "ClueRevealed":
                    assert e.payload["clue_id"] not in revealed
                    revealed.append(e.payload["clue_id"])
                by_round[e.round] = cic({"all": revealed}, script)
            values = [by_round[r] for r in sorted(by_round)]
            assert all(0.0 <= v <= 1.0 for v in values)
            assert values == sorted(values)
            assert revealed == game.state.revealed_clues
    assert t.elapsed < 30.0, f"took {t.elapsed:.2f}s"


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_ac6_rerun_module_counts(k):
    policy = RerunPolicy(max_retries=3)
    backend = FaultyBackend(k, raw("2"))
    if k == policy.max_retries + 1:
        with pytest.raises(RerunExhausted):
            solicit(backend, PromptKind.SUSPICION_SCORE, FULL_CTX, policy)
        assert policy.failure_counter == k
        assert len(backend.calls) == k
        return
    parsed, attempts = solicit(backend, PromptKind.SUSPICION_SCORE, FULL_CTX, policy)
    assert parsed.action == 2
    assert attempts == k + 1 == len(backend.calls)
    assert policy.failure_counter == k


def test_ac7_summarization_preserves_format():
    log = HistoryLog()
    kinds = ["Speak", "Ask", "Investigate", "Clue", "Vote"]
    rng = random.Random(7)
    for i in range(60):
        log.append(HistoryEntry(i, i // 12, "OpenConversation", f"Guest {i % 4}", kinds[i % 5],
                                " ".join(rng.choice(["door", "key", "late", "storm"]) for _ in range(12))))
    budget = 120
    assert log.tokens() > budget
    digest = "Guest 0: 【Speak】: earlier the guests argued about the key\nGuest 1: 【Clue】: a torn letter"
    out = maybe_summarize(log, budget, ConstantBackend(raw(digest)))
    assert out.tokens() <= budget
    assert out.summarized_prefix is not None
    lines = list(out.lines())
    assert lines and all(HISTORY_LINE.match(line) for line in lines)
    assert [e.line() for e in out.entries] == lines[-len(out.entries):]


def test_ac8_scoring_bounds():
    for bad in ("3", "-1", "5", "1.5"):
        policy = RerunPolicy(max_retries=3)
        backend = FaultyBackend(1, raw("1"), garbage=raw(bad))
        parsed, attempts = solicit(backend, PromptKind.SUSPICION_SCORE, FULL_CTX, policy)
        assert (parsed.action, attempts, policy.failure_counter) == (1, 2, 1)
        assert "chosen from [0, 1, 2]" in backend.calls[1].prompt
    for seed in range(20):
        game = new_game(manor(), [RandomBackend(seed * 3 + i) for i in range(3)], GameConfig(rounds=3))
        game.run()
        for cell in game.state.ledger.cells.values():
            assert 0 <= cell.sus_total <= 2 * cell.samples
            assert 0 <= cell.trust_total <= 2 * cell.samples
    game = new_game(manor(), manor_roster(), GameConfig(rounds=5))
    game.run()
    assert game.state.ledger.cells
    for cell in game.state.ledger.cells.values():
        assert 0 <= cell.sus_total <= 2 * cell.samples and 0 <= cell.trust_total <= 2 * cell.samples


def test_ac9_victory_mrr():
    ranks = [1, 2, 4]
    values = []
    for r in ranks:
        ranking = [f"c{i}" for i in range(1, 6)]
        ranking.insert(r - 1, "culprit")
        values.append(victory_mrr(ranking, {"culprit"}))
    assert values == [1.0, 0.5, 0.25]
    assert abs(mean_mrr(values) - 0.5833333333333334) <= 1e-12
    rng = random.Random(9)
    for _ in range(1000):
        n = rng.randint(2, 8)
        order = [f"p{i}" for i in range(n)]
        culprits = set(rng.sample(order, rng.randint(1, n - 1)))
        votes = {p: rng.choice([None] + [q for q in order if q != p]) for p in order}
        ledger = SuspicionTrustLedger()
        for _ in range(rng.randint(0, 10)):
            a, b = rng.sample(order, 2)
            ledger.record(a, b, rng.randint(0, 2), rng.randint(0, 2))
        result = tally_votes(votes, order, ledger, culprits)
        mrr = victory_mrr([c for c, _, _ in result.accused_ranking], culprits)
        assert (mrr == 1.0) == (result.winner is Winner.CIVILIANS)


def test_ac10_replay_closure(tmp_path):
    multi = synthetic(4, 9, stages=2, script_id="two_stage")
    save_script(multi, tmp_path / "two_stage.json")
    zh_doc = synthetic(3, 5, script_id="zh_small")
    save_script(zh_doc, tmp_path / "zh_small.json")
    fixtures = [
        (harness.load_config(DEMO_CONFIG, out=tmp_path / "demo"), MANOR_PATH, [7]),
        (harness.RunConfig(script=MANOR_PATH, out=tmp_path / "rand"), MANOR_PATH, [0, 1, 2, 3]),
        (harness.RunConfig(script=MANOR_PATH, out=tmp_path / "tight", context_budget=80, max_retries=0),
         MANOR_PATH, [5]),
        (harness.RunConfig(script=tmp_path / "two_stage.json", rounds=4, out=tmp_path / "multi"),
         tmp_path / "two_stage.json", [11]),
        (harness.RunConfig(script=tmp_path / "zh_small.json", rounds=2, language="zh", out=tmp_path / "zh"),
         tmp_path / "zh_small.json", [3]),
    ]
    runs = 0
    for cfg, script_path, seeds in fixtures:
        for seed in seeds:
            bundle = harness.run(cfg, seed=seed)
            assert harness.replay(bundle.transcript_path, script_path) == bundle.report
            runs += 1
    assert runs == 8
