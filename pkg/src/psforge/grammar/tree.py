"""Syntax tree for PuzzleScript programs.

Nodes are frozen dataclasses so that two parses of equivalent text compare
equal.  Source line numbers are carried for diagnostics but excluded from
equality, which is what makes parse -> print -> parse round-trips comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


@dataclass(frozen=True)
class SourceText:
    content: str
    origin: str = "<string>"

    @classmethod
    def from_bytes(cls, data: bytes, origin: str = "<bytes>") -> "SourceText":
        return cls(normalize_newlines(data.decode("utf-8", errors="replace")), origin)

    @classmethod
    def from_path(cls, path, origin: Optional[str] = None) -> "SourceText":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), origin=origin or str(path))


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


SECTION_ORDER = (
    "objects",
    "legend",
    "sounds",
    "collisionlayers",
    "rules",
    "winconditions",
    "levels",
)

DIRECTIONS = ("up", "down", "left", "right")


class LegendKind(str, Enum):
    ALIAS = "alias"
    AGGREGATE = "aggregate"
    PROPERTY = "property"


class Motion(str, Enum):
    NONE = ""
    FORWARD = ">"
    BACKWARD = "<"
    PERP_UP = "^"
    PERP_DOWN = "v"
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"
    MOVING = "moving"
    STATIONARY = "stationary"
    ACTION = "action"
    RANDOMDIR = "randomdir"
    RANDOM = "random"
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    PERPENDICULAR = "perpendicular"
    PARALLEL = "parallel"
    ORTHOGONAL = "orthogonal"


RELATIVE_MOTIONS = (Motion.FORWARD, Motion.BACKWARD, Motion.PERP_UP, Motion.PERP_DOWN)
UNSUPPORTED_MOTIONS = (
    Motion.RANDOMDIR,
    Motion.RANDOM,
    Motion.HORIZONTAL,
    Motion.VERTICAL,
    Motion.PERPENDICULAR,
    Motion.PARALLEL,
    Motion.ORTHOGONAL,
)


@dataclass(frozen=True)
class Sprite:
    """A 5x5 pixel grid; ``None`` marks a transparent pixel."""

    rows: tuple[tuple[Optional[int], ...], ...]


@dataclass(frozen=True)
class ObjectDef:
    name: str
    colors: tuple[str, ...]
    sprite: Optional[Sprite] = None  # None means a solid block of colors[0]
    glyph: Optional[str] = None  # optional legend alias declared on the name line
    line: int = field(default=0, compare=False)

    @property
    def key(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class LegendEntry:
    glyph: str
    kind: LegendKind
    members: tuple[str, ...]
    line: int = field(default=0, compare=False)

    @property
    def key(self) -> str:
        return self.glyph.lower()


@dataclass(frozen=True)
class Atom:
    entity: str
    motion: Motion = Motion.NONE
    negated: bool = False


@dataclass(frozen=True)
class CellPattern:
    atoms: tuple[Atom, ...] = ()
    ellipsis: bool = False


ELLIPSIS = CellPattern(ellipsis=True)


@dataclass(frozen=True)
class BracketPattern:
    cells: tuple[CellPattern, ...]

    @property
    def ellipsis_positions(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.cells) if c.ellipsis)


@dataclass(frozen=True)
class Command:
    name: str  # cancel, win, again, checkpoint, restart, message, sfxN
    text: str = ""


@dataclass(frozen=True)
class RuleDef:
    lhs: tuple[BracketPattern, ...]
    rhs: tuple[BracketPattern, ...] = ()
    commands: tuple[Command, ...] = ()
    late: bool = False
    random: bool = False
    rigid: bool = False
    group_continuation: bool = False  # line started with '+'
    direction: Optional[str] = None  # up/down/left/right/horizontal/vertical
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LoopMarker:
    """``startloop`` / ``endloop``; parsed so the compiler can reject them."""

    kind: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class WinCondition:
    quantifier: str  # all, some, no
    subject: str
    target: Optional[str] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LevelGrid:
    rows: tuple[str, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LevelMessage:
    text: str
    line: int = field(default=0, compare=False)


LevelEntry = Union[LevelGrid, LevelMessage]
RuleItem = Union[RuleDef, LoopMarker]


@dataclass(frozen=True)
class PreludeItem:
    key: str
    value: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class GameSpec:
    prelude: tuple[PreludeItem, ...] = ()
    objects: tuple[ObjectDef, ...] = ()
    legend: tuple[LegendEntry, ...] = ()
    sounds: tuple[str, ...] = ()
    collision_layers: tuple[tuple[str, ...], ...] = ()
    rules: tuple[RuleItem, ...] = ()
    win_conditions: tuple[WinCondition, ...] = ()
    levels: tuple[LevelEntry, ...] = ()
    sections: frozenset = field(default=frozenset(), compare=False)
    layer_lines: tuple[int, ...] = field(default=(), compare=False)

    def prelude_value(self, key: str) -> Optional[str]:
        for item in self.prelude:
            if item.key.lower() == key:
                return item.value
        return None

    @property
    def title(self) -> str:
        return self.prelude_value("title") or ""
