from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirage.agents import PromptKind, RerunPolicy
from mirage.agents.backends import Attempt
from mirage.agents.parsing import HISTORY_LINE
from mirage.errors import InvalidLevel, SelfScoring, SummarizerFailure
from mirage.memory import (
    Direction,
    HistoryEntry,
    HistoryLog,
    LedgerCell,
    SuspicionTrustLedger,
    UsageCounters,
    accumulated_suspicion,
    charge,
    maybe_summarize,
    record_scores,
    usage_of,
)
from mirage.tokens import count_tokens
from support import ConstantBackend, FaultyBackend, raw

DIGEST = "Narrator: 【Speak】: earlier talk"  # 7 tokens under the heuristic


def long_log(n=40, words=10):
    log = HistoryLog()
    for i in range(n):
        log.append(HistoryEntry(i, 0, "OpenConversation", f"P{i % 3}", "Speak", " ".join(["word"] * words)))
    return log


# -- ledger ----------------------------------------------------------------------


def test_single_update():
    ledger = record_scores(SuspicionTrustLedger(), "A", "B", 2, 0)
    assert ledger.cells[("A", "B")] == LedgerCell(2, 0, 1)


@pytest.mark.parametrize("sus, trust", [(3, 0), (0, -1), (1.0, 1), (True, 0)])
def test_invalid_levels(sus, trust):
    with pytest.raises(InvalidLevel):
        SuspicionTrustLedger().record("A", "B", sus, trust)


def test_self_scoring():
    with pytest.raises(SelfScoring):
        SuspicionTrustLedger().record("A", "A", 1, 1)


def test_accumulated_suspicion():
    ledger = SuspicionTrustLedger()
    assert accumulated_suspicion(ledger, "C") == 0
    ledger.record("A", "C", 2, 0)
    ledger.record("B", "C", 1, 2)
    before = ledger.copy()
    assert accumulated_suspicion(ledger, "C") == 3
    assert ledger == before


@given(st.lists(st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD"), st.integers(0, 2), st.integers(0, 2))))
def test_cell_bounds(records):
    ledger = SuspicionTrustLedger()
    for obs, subj, s, t in records:
        if obs != subj:
            ledger.record(obs, subj, s, t)
    for cell in ledger.cells.values():
        assert 0 <= cell.sus_total <= 2 * cell.samples
        assert 0 <= cell.trust_total <= 2 * cell.samples
    total = sum(s for o, subj, s, _ in records if o != subj)
    assert sum(ledger.accumulated_suspicion(c) for c in "ABCD") == total


# -- history ---------------------------------------------------------------------


def test_history_line_format_and_order():
    log = HistoryLog()
    log.append(HistoryEntry(0, 0, "Introduction", "A", "Speak", "hello\nthere"))
    assert log.render() == "A: 【Speak】: hello there"
    with pytest.raises(ValueError):
        log.append(HistoryEntry(0, 0, "Introduction", "A", "Speak", "again"))
    with pytest.raises(ValueError):
        log.append(HistoryEntry(5, 0, "Introduction", "A", "Shout", "x"))


def test_under_budget_unchanged():
    log = HistoryLog()
    log.append(HistoryEntry(0, 0, "OpenConversation", "A", "Speak", "just a few words here"))
    assert log.tokens() == 10
    out = maybe_summarize(log, 100, ConstantBackend(raw(DIGEST)))
    assert out == log


def test_over_budget_is_reduced():
    log = long_log()
    assert count_tokens(DIGEST) == 7
    budget = 100
    assert log.tokens() > budget
    out = maybe_summarize(log, budget, ConstantBackend(raw(DIGEST)))
    assert out.summarized_prefix is not None and out.summarized_prefix.text == DIGEST
    assert out.tokens() <= budget
    assert all(HISTORY_LINE.match(line) for line in out.lines())
    # the retained tail is the newest entries, untouched
    assert out.entries == log.entries[-len(out.entries):]
    assert out.summarized_prefix.through_seq == log.entries[-len(out.entries) - 1].seq
    assert len(log.entries) == 40  # input not mutated


def test_zero_budget():
    with pytest.raises(ValueError):
        maybe_summarize(long_log(), 0, ConstantBackend(raw(DIGEST)))


def test_summarizer_that_cannot_shrink_stops():
    bloated = "Narrator: 【Speak】: " + " ".join(["more"] * 500)
    log = long_log()
    out = maybe_summarize(log, 50, ConstantBackend(raw(bloated)))
    assert out == log


def test_summarizer_failure():
    with pytest.raises(SummarizerFailure):
        maybe_summarize(long_log(), 50, FaultyBackend(10, raw(DIGEST)), policy=RerunPolicy(1))


def test_summary_keeps_at_least_one_entry():
    out = maybe_summarize(long_log(), 1, ConstantBackend(raw(DIGEST)))
    assert len(out.entries) == 1


# -- usage -----------------------------------------------------------------------


def test_charge_rules():
    zero = UsageCounters()
    assert charge(zero, Direction.USER_OUTPUT, 40, countable_completion=False) == UsageCounters(user_tokens=40)
    assert charge(zero, Direction.USER_OUTPUT, 25) == UsageCounters(user_tokens=25, users=1)
    assert charge(zero, Direction.ENV_INPUT, 0) == UsageCounters(envs=1)
    with pytest.raises(ValueError):
        charge(zero, Direction.ENV_INPUT, -1)


def test_usage_of_attempts():
    attempts = [
        Attempt(PromptKind.HISTORY_SUMMARY, "x", 100, 40),
        Attempt(PromptKind.CONVERSE, "y", 50, 25, error="bad"),
        Attempt(PromptKind.CONVERSE, "z", 60, 25),
    ]
    u = usage_of(attempts)
    assert u == UsageCounters(env_tokens=210, envs=3, user_tokens=90, users=2, failures=1)
    assert usage_of(attempts[2:], countable=False).users == 0


@given(st.lists(st.integers(0, 1000), max_size=5), st.lists(st.integers(0, 1000), max_size=5))
def test_counters_add_and_serialize(a, b):
    x = UsageCounters(*((a + [0] * 5)[:5]))
    y = UsageCounters(*((b + [0] * 5)[:5]))
    assert UsageCounters.from_dict((x + y).as_dict()) == y + x


@given(st.lists(st.text(max_size=30), max_size=15), st.one_of(st.none(), st.text(max_size=40)))
def test_token_count_is_additive_over_lines(payloads, prefix):
    from mirage.memory import SummaryPrefix

    log = HistoryLog(summarized_prefix=SummaryPrefix(-1, prefix) if prefix is not None else None)
    for i, text in enumerate(payloads):
        log.append(HistoryEntry(i, 0, "OpenConversation", "A", "Speak", text))
    assert log.tokens() == count_tokens(log.render())
