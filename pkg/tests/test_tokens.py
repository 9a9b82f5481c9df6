from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from mirage.tokens import count_tokens, tokenize


def test_examples():
    assert count_tokens("") == 0
    assert count_tokens("the cat sat") == 3
    assert count_tokens("凶手是谁") == 4


def test_mixed_scripts():
    assert tokenize("Wen是凶手 ok") == ["Wen", "是", "凶", "手", "ok"]
    assert count_tokens("【Ask】【Doctor Wen】") == 7


@given(st.text(), st.text())
def test_whitespace_join_is_additive(a, b):
    assert count_tokens(a + " " + b) == count_tokens(a) + count_tokens(b)


@given(st.text())
def test_count_matches_tokenize(text):
    assert count_tokens(text) == len(tokenize(text))


@given(st.text(alphabet=st.characters(max_codepoint=127)))
def test_ascii_fast_path_agrees_with_regex(text):
    assert count_tokens(text) == len(tokenize(text))
