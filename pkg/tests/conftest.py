from __future__ import annotations

import sys
from functools import lru_cache
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"
GAMES = FIXTURES / "games"
CORPUS = FIXTURES / "corpus"
REPAIR = FIXTURES / "repair"

from psforge.compiler import compile_source  # noqa: E402


@lru_cache(maxsize=None)
def load_game(name: str):
    game, diags = compile_source((GAMES / f"{name}.txt").read_text(encoding="utf-8"))
    assert game is not None, [d.render() for d in diags]
    return game


def game_text(name: str) -> str:
    return (GAMES / f"{name}.txt").read_text(encoding="utf-8")


MINIMAL = """\
========
OBJECTS
========

Background
green

Player
blue

=======
LEGEND
=======

. = Background
P = Player

================
COLLISIONLAYERS
================

Background
Player

======
RULES
======

==============
WINCONDITIONS
==============

=======
LEVELS
=======

P.
"""


@pytest.fixture
def minimal_source() -> str:
    return MINIMAL


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(module.summary_line(n))
