"""Local game corpus: ingestion, token estimates and few-shot sampling.

A corpus directory is a flat folder of UTF-8 ``.txt`` game sources; the id of
each game is its file stem.  An optional ``corpus.meta`` file maps ids to
display titles, one ``id<TAB>title`` pair per line.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from psforge.compiler import compile_game
from psforge.grammar import SourceText, parse_game

log = logging.getLogger(__name__)

META_FILE = "corpus.meta"

#: Context sizes swept when varying the few-shot budget.
BUDGET_PRESETS = (10_000, 30_000, 50_000, 70_000)

TokenEstimator = Callable[[str], int]


def estimate_tokens(text: str) -> int:
    """Approximate token count: one token per four UTF-8 bytes, rounded up.

    This is a model-agnostic stand-in; pass a real tokenizer's counting
    function wherever an estimator is accepted to get exact figures.
    """
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    source: SourceText
    token_count: int
    parses: bool
    compiles: bool
    title: Optional[str] = None


@dataclass(frozen=True)
class Corpus:
    entries: tuple[CorpusEntry, ...]
    estimator: TokenEstimator = field(default=estimate_tokens, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, entry_id: str) -> CorpusEntry:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        raise KeyError(entry_id)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def pool(self, include_broken: bool = False) -> list[CorpusEntry]:
        """Entries eligible for sampling; non-compiling games are left out by default."""
        return [e for e in self.entries if include_broken or e.compiles]


@dataclass(frozen=True)
class FewshotSample:
    games: tuple[str, ...]
    total_tokens: int
    budget: int
    # id of the draw that stopped sampling, if any; None when the pool ran out
    rejected: Optional[str] = None
    rejected_tokens: int = 0


class CorpusError(OSError):
    pass


def _read_meta(directory: Path) -> dict[str, str]:
    path = directory / META_FILE
    if not path.is_file():
        return {}
    titles = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "\t" in line:
            key, title = line.split("\t", 1)
            titles[key.strip()] = title.strip()
    return titles


def load_corpus(directory: str | Path, estimator: TokenEstimator = estimate_tokens) -> Corpus:
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory not found: {directory}")
    try:
        paths = sorted(directory.glob("*.txt"), key=lambda p: p.stem)
    except OSError as exc:
        raise CorpusError(f"cannot read corpus directory {directory}: {exc}") from exc
    titles = _read_meta(directory)
    entries = []
    for path in paths:
        source = SourceText.from_path(path, origin=path.stem)
        parsed = parse_game(source)
        compiles = False
        if parsed.spec is not None:
            compiles = compile_game(parsed.spec).game is not None
        entries.append(CorpusEntry(
            id=path.stem,
            source=source,
            token_count=estimator(source.content),
            parses=parsed.spec is not None,
            compiles=compiles,
            title=titles.get(path.stem),
        ))
    if not entries:
        log.warning("corpus directory %s contains no .txt games", directory)
    return Corpus(tuple(entries), estimator)


def sample_fewshot(
    corpus: Corpus,
    budget: int,
    rng_seed: int,
    include_broken: bool = False,
) -> FewshotSample:
    """Draw games at random until the next one would overflow ``budget``.

    Draws are uniform without replacement from the sampling pool.  Sampling
    stops at the first game that does not fit, even if a smaller one further
    down the shuffled order would have.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    order = corpus.pool(include_broken)
    random.Random(rng_seed).shuffle(order)
    chosen: list[str] = []
    total = 0
    for entry in order:
        if total + entry.token_count > budget:
            return FewshotSample(tuple(chosen), total, budget, entry.id, entry.token_count)
        chosen.append(entry.id)
        total += entry.token_count
    return FewshotSample(tuple(chosen), total, budget)


def sources_for(corpus: Corpus, ids: Iterable[str]) -> list[SourceText]:
    return [corpus[i].source for i in ids]
