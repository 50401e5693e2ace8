from __future__ import annotations

import logging

import pytest

from conftest import CORPUS, GAMES
from oracles import tokens_by_hand
from psforge.corpus import (
    BUDGET_PRESETS,
    CorpusError,
    estimate_tokens,
    load_corpus,
    sample_fewshot,
)


@pytest.fixture(scope="module")
def corpus():
    return load_corpus(CORPUS)


def test_estimator_definition():
    assert estimate_tokens("") == 0
    assert estimate_tokens("x" * 400) == 100
    assert estimate_tokens("x" * 401) == 101
    assert estimate_tokens("é") == 1  # two bytes


@pytest.mark.parametrize("a,b", [("abc", "defgh"), ("", "x"), ("1234", "5678"), ("é" * 3, "z")])
def test_estimator_concatenation_bound(a, b):
    assert estimate_tokens(a + b) <= estimate_tokens(a) + estimate_tokens(b) + 1
    assert estimate_tokens(a + b) >= estimate_tokens(a)


def test_fixture_corpus_loads_sorted_with_counts(corpus):
    assert len(corpus) == 12
    assert corpus.ids == sorted(corpus.ids)
    for entry in corpus:
        assert entry.token_count == tokens_by_hand(entry.source.content)
        assert entry.parses and entry.compiles


def test_titles_come_from_meta(corpus):
    assert corpus["grand_warehouse"].title == "Grand Warehouse"
    assert corpus["depot"].title is None


def test_small_directory(tmp_path):
    for name in ("corridor", "keys", "twins"):
        (tmp_path / f"{name}.txt").write_text((GAMES / f"{name}.txt").read_text())
    corpus = load_corpus(tmp_path)
    assert corpus.ids == ["corridor", "keys", "twins"]
    assert all(e.parses and e.compiles for e in corpus)


def test_prose_entry_is_kept_but_not_sampled(tmp_path):
    (tmp_path / "corridor.txt").write_text((GAMES / "corridor.txt").read_text())
    (tmp_path / "essay.txt").write_text("Once upon a time there was a box.\n")
    corpus = load_corpus(tmp_path)
    essay = corpus["essay"]
    assert not essay.parses and not essay.compiles
    assert [e.id for e in corpus.pool()] == ["corridor"]
    assert {e.id for e in corpus.pool(include_broken=True)} == {"corridor", "essay"}
    for seed in range(20):
        assert "essay" not in sample_fewshot(corpus, 10_000, seed).games


def test_missing_directory_raises(tmp_path):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "nope")


def test_empty_directory_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        corpus = load_corpus(tmp_path)
    assert len(corpus) == 0
    assert "no .txt games" in caplog.text
    assert sample_fewshot(corpus, 1000, 0).games == ()


def test_budget_zero_is_empty(corpus):
    sample = sample_fewshot(corpus, 0, 3)
    assert sample.games == () and sample.total_tokens == 0


def test_negative_budget_rejected(corpus):
    with pytest.raises(ValueError):
        sample_fewshot(corpus, -1, 0)


def test_regression_sample_at_1000(corpus):
    # frozen from the first run on the committed corpus
    assert sample_fewshot(corpus, 1000, 0).games == ("corridor", "pull", "lever", "gates")
    assert sample_fewshot(corpus, 1000, 1).games == ("keys", "twins")


def test_presets():
    assert BUDGET_PRESETS == (10_000, 30_000, 50_000, 70_000)


@pytest.mark.parametrize("budget", BUDGET_PRESETS)
@pytest.mark.parametrize("seed", range(8))
def test_budget_safety_and_stop_rule(corpus, budget, seed):
    sample = sample_fewshot(corpus, budget, seed)
    assert sample.total_tokens <= budget
    assert sample.total_tokens == sum(corpus[g].token_count for g in sample.games)
    assert len(set(sample.games)) == len(sample.games)
    if sample.rejected is not None:
        assert sample.total_tokens + corpus[sample.rejected].token_count > budget
        assert sample.rejected not in sample.games
    else:
        assert set(sample.games) == {e.id for e in corpus.pool()}
    assert sample_fewshot(corpus, budget, seed) == sample


def test_custom_estimator(tmp_path):
    (tmp_path / "corridor.txt").write_text((GAMES / "corridor.txt").read_text())
    corpus = load_corpus(tmp_path, estimator=len)
    assert corpus["corridor"].token_count == len((GAMES / "corridor.txt").read_text())
