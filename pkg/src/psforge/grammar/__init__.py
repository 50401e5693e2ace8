"""PuzzleScript syntax: parsing, canonical printing and bounded repair."""

from psforge.grammar.parser import ParseResult, parse_game
from psforge.grammar.printer import format_rule, print_game
from psforge.grammar.repair import RepairResult, extract_fenced_block, repair_source
from psforge.grammar.tree import *  # noqa: F401,F403

__all__ = [
    "ParseResult",
    "RepairResult",
    "extract_fenced_block",
    "format_rule",
    "parse_game",
    "print_game",
    "repair_source",
]
