"""Line-oriented recursive-descent parser for PuzzleScript.

The accepted language, as an EBNF over comment-stripped lines::

    program      = prelude { section } ;
    prelude      = { key [ value ] NL } ;
    section      = DELIM NL HEADER NL DELIM NL body ;
    HEADER       = "objects" | "legend" | "sounds" | "collisionlayers"
                 | "rules" | "winconditions" | "levels" ;
    object       = name [ glyph ] NL colors NL [ sprite ] ;
    colors       = color { color } ;                     (* 1..10 *)
    sprite       = 5 * ( pixel pixel pixel pixel pixel NL ) ;
    pixel        = "." | digit ;
    legend_line  = glyph "=" entity { ( "and" | "or" ) entity } ;
    layer_line   = entity { [ "," ] entity } ;
    rule_line    = { prefix } bracket { bracket } "->" { bracket } { command }
                 | "startloop" | "endloop" ;
    prefix       = "late" | "random" | "rigid" | "+" | direction ;
    bracket      = "[" cell { "|" cell } "]" ;
    cell         = "..." | { [ "no" ] [ motion ] entity } ;
    command      = "cancel" | "win" | "again" | "checkpoint" | "restart"
                 | "sfx" digit { digit } | "message" text ;
    wincondition = ( "all" | "some" | "any" | "no" ) entity [ "on" entity ] ;
    level_line   = "message" text | glyph { glyph } ;

Keywords are case-insensitive.  Parsing never raises: every problem is
reported as a :class:`~psforge.diagnostics.Diagnostic` and the parser resumes
at the next line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from psforge import diagnostics as dg
from psforge.diagnostics import Diagnostic, Phase
from psforge.grammar.tree import (
    ELLIPSIS,
    SECTION_ORDER,
    Atom,
    BracketPattern,
    CellPattern,
    Command,
    GameSpec,
    LegendEntry,
    LegendKind,
    LevelGrid,
    LevelMessage,
    LoopMarker,
    Motion,
    ObjectDef,
    PreludeItem,
    RuleDef,
    SourceText,
    Sprite,
    WinCondition,
    normalize_newlines,
)

NAMED_COLORS = frozenset(
    """
    black white lightgray lightgrey gray grey darkgray darkgrey red darkred
    lightred brown darkbrown lightbrown orange yellow green darkgreen
    lightgreen blue lightblue darkblue purple pink transparent
    """.split()
)

_HEX_COLOR = re.compile(r"#(?:[0-9a-fA-F]{3}|[0-9a-fA-F]{6})$")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_NAME = re.compile(r"[^\s=\[\]|,]+$")
_SPRITE_ROW = re.compile(r"[.0-9]+$")
_DELIM = re.compile(r"=+$")
_RULE_TOKEN = re.compile(r"->|\.\.\.|[\[\]|<>^]|[^\s\[\]|<>^]+")

RULE_DIRECTIONS = {
    "up": "up",
    "down": "down",
    "left": "left",
    "right": "right",
    "horizontal": "horizontal",
    "vertical": "vertical",
    "orthogonal": None,
}

MOTION_WORDS = {m.value: m for m in Motion if m is not Motion.NONE}

COMMANDS = ("cancel", "win", "again", "checkpoint", "restart")
_SFX = re.compile(r"sfx\d+$")

KEYWORDS = frozenset(
    {"no", "late", "random", "rigid", "->", "...", "message", "startloop", "endloop"}
    | set(COMMANDS)
    | set(MOTION_WORDS)
)


@dataclass
class ParseResult:
    spec: Optional[GameSpec]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def syntax_errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error and d.phase is Phase.SYNTAX]

    @property
    def ok(self) -> bool:
        return not self.syntax_errors


def strip_comments(text: str) -> tuple[str, list[Diagnostic]]:
    """Blank out nestable ``( ... )`` comments, keeping every other offset."""
    out = []
    depth = 0
    line, col = 1, 1
    open_at: list[tuple[int, int]] = []
    for ch in text:
        if ch == "(":
            depth += 1
            open_at.append((line, col))
            out.append(" ")
        elif ch == ")" and depth:
            depth -= 1
            open_at.pop()
            out.append(" ")
        elif ch == "\n":
            out.append(ch)
        else:
            out.append(" " if depth else ch)
        if ch == "\n":
            line, col = line + 1, 1
        else:
            col += 1
    diags = []
    if depth:
        ln, cl = open_at[0]
        diags.append(
            dg.error(Phase.SYNTAX, ln, cl, dg.UNCLOSED_COMMENT, "comment is never closed")
        )
    return "".join(out), diags


def _col(raw: str) -> int:
    return len(raw) - len(raw.lstrip()) + 1


class _Parser:
    def __init__(self, source: SourceText):
        self.raw_lines = normalize_newlines(source.content).split("\n")
        text, self.diags = strip_comments("\n".join(self.raw_lines))
        self.lines = text.split("\n")
        self.prelude: list[PreludeItem] = []
        self.objects: list[ObjectDef] = []
        self.legend: list[LegendEntry] = []
        self.sounds: list[str] = []
        self.layers: list[tuple[str, ...]] = []
        self.layer_lines: list[int] = []
        self.rules: list = []
        self.wins: list[WinCondition] = []
        self.levels: list = []
        self.seen_sections: set[str] = set()

    def err(self, line: int, col: int, code: str, message: str) -> None:
        self.diags.append(dg.error(Phase.SYNTAX, line, col, code, message))

    def end_position(self) -> tuple[int, int]:
        return len(self.raw_lines), len(self.raw_lines[-1]) + 1

    # -- layout ----------------------------------------------------------
    def run(self) -> ParseResult:
        headers = []
        for i, text in enumerate(self.lines):
            if text.strip().lower() in SECTION_ORDER:
                headers.append(i)
        self._check_delimiters(headers)

        first = headers[0] if headers else len(self.lines)
        self._parse_prelude(range(0, first))
        for n, start in enumerate(headers):
            stop = headers[n + 1] if n + 1 < len(headers) else len(self.lines)
            name = self.lines[start].strip().lower()
            if name in self.seen_sections:
                self.err(start + 1, _col(self.lines[start]), dg.DUPLICATE_SECTION,
                         f"section {name.upper()} appears more than once")
            self.seen_sections.add(name)
            body = [
                i for i in range(start + 1, stop)
                if self.lines[i].strip() and not _DELIM.match(self.lines[i].strip())
            ]
            getattr(self, f"_parse_{name}")(body, start + 1, stop)

        end_line, end_col = self.end_position()
        for required in ("objects", "levels"):
            if required not in self.seen_sections:
                self.err(end_line, end_col, dg.MISSING_SECTION,
                         f"missing {required.upper()} section")

        spec = GameSpec(
            prelude=tuple(self.prelude),
            objects=tuple(self.objects),
            legend=tuple(self.legend),
            sounds=tuple(self.sounds),
            collision_layers=tuple(self.layers),
            rules=tuple(self.rules),
            win_conditions=tuple(self.wins),
            levels=tuple(self.levels),
            sections=frozenset(self.seen_sections),
            layer_lines=tuple(self.layer_lines),
        )
        diags = sorted(self.diags, key=dg.sort_key)
        has_errors = any(d.is_error for d in diags)
        return ParseResult(None if has_errors else spec, diags)

    def _check_delimiters(self, headers: list[int]) -> None:
        for i in headers:
            before = next((j for j in range(i - 1, -1, -1) if self.lines[j].strip()), None)
            after = next(
                (j for j in range(i + 1, len(self.lines)) if self.lines[j].strip()), None
            )
            ok_before = before is not None and _DELIM.match(self.lines[before].strip())
            ok_after = after is not None and _DELIM.match(self.lines[after].strip())
            if not (ok_before and ok_after):
                name = self.lines[i].strip().upper()
                self.err(i + 1, _col(self.lines[i]), dg.MISSING_DELIMITER,
                         f"section header {name} must be enclosed by '=====' lines")

    # -- prelude ---------------------------------------------------------
    def _parse_prelude(self, indices) -> None:
        for i in indices:
            text = self.lines[i].strip()
            if not text or _DELIM.match(text):
                continue
            key, _, value = text.partition(" ")
            if not _KEY.match(key):
                self.err(i + 1, _col(self.lines[i]), dg.BAD_PRELUDE,
                         f"expected 'key value' metadata line, found {text[:40]!r}")
                continue
            self.prelude.append(PreludeItem(key.lower(), value.strip(), line=i + 1))

    # -- objects ---------------------------------------------------------
    def _parse_objects(self, body: list[int], _start: int, _stop: int) -> None:
        k = 0
        while k < len(body):
            i = body[k]
            tokens = self.lines[i].split()
            col = _col(self.lines[i])
            k += 1
            if len(tokens) > 2 or not _NAME.match(tokens[0]) or (
                len(tokens) == 2 and len(tokens[1]) != 1
            ):
                self.err(i + 1, col, dg.BAD_OBJECT,
                         f"expected an object name, found {self.lines[i].strip()[:40]!r}")
                continue
            name = tokens[0]
            glyph = tokens[1] if len(tokens) == 2 else None
            if k >= len(body) or body[k] != self._next_content(i):
                self.err(i + 1, col, dg.BAD_COLOR, f"object {name} has no color line")
                continue
            ci = body[k]
            k += 1
            colors = self.lines[ci].split()
            good = True
            if _SPRITE_ROW.match(self.lines[ci].strip()):
                self.err(ci + 1, _col(self.lines[ci]), dg.BAD_COLOR,
                         f"object {name} has no color line")
                good = False
            elif len(colors) > 10:
                self.err(ci + 1, _col(self.lines[ci]), dg.BAD_COLOR,
                         f"object {name} lists {len(colors)} colors (at most 10)")
                good = False
            else:
                for c in colors:
                    if c.lower() not in NAMED_COLORS and not _HEX_COLOR.match(c):
                        self.err(ci + 1, self.lines[ci].find(c) + 1, dg.BAD_COLOR,
                                 f"unknown color {c!r} for object {name}")
                        good = False
            rows = []
            prev = ci
            while (
                k < len(body)
                and body[k] == prev + 1
                and _SPRITE_ROW.match(self.lines[body[k]].strip())
            ):
                rows.append((body[k], self.lines[body[k]].strip()))
                prev = body[k]
                k += 1
            sprite = None
            if rows:
                sprite = self._sprite(name, rows, len(colors) if good else 10)
            if good:
                self.objects.append(
                    ObjectDef(name, tuple(colors), sprite, glyph, line=i + 1)
                )

    def _next_content(self, i: int) -> Optional[int]:
        for j in range(i + 1, len(self.lines)):
            if self.lines[j].strip():
                return j
        return None

    def _sprite(self, name: str, rows, ncolors: int) -> Optional[Sprite]:
        first_line = rows[0][0] + 1
        if len(rows) != 5 or any(len(r) != 5 for _, r in rows):
            self.err(first_line, _col(self.lines[rows[0][0]]), dg.BAD_SPRITE,
                     f"sprite for {name} must be 5 rows of 5 pixels")
            return None
        grid = []
        for li, row in rows:
            cells = []
            for ch in row:
                if ch == ".":
                    cells.append(None)
                else:
                    idx = int(ch)
                    if idx >= ncolors:
                        self.err(li + 1, _col(self.lines[li]), dg.BAD_SPRITE,
                                 f"sprite for {name} uses color {idx} but only "
                                 f"{ncolors} colors are defined")
                    cells.append(idx)
            grid.append(tuple(cells))
        return Sprite(tuple(grid))

    # -- legend ----------------------------------------------------------
    def _parse_legend(self, body: list[int], _start: int, _stop: int) -> None:
        for i in body:
            text = self.lines[i].strip()
            col = _col(self.lines[i])
            lhs, eq, rhs = text.partition("=")
            glyph = lhs.strip()
            words = rhs.split()
            if not eq or not glyph or len(glyph.split()) != 1 or not words:
                self.err(i + 1, col, dg.BAD_LEGEND,
                         f"expected 'glyph = object', found {text[:40]!r}")
                continue
            members = words[0::2]
            joiners = {w.lower() for w in words[1::2]}
            bad_member = any(m.lower() in ("and", "or") or not _NAME.match(m) for m in members)
            if len(words) % 2 == 0 or bad_member or not joiners <= {"and", "or"}:
                self.err(i + 1, col, dg.BAD_LEGEND, f"malformed legend entry {text[:40]!r}")
                continue
            if len(joiners) > 1:
                self.err(i + 1, col, dg.BAD_LEGEND,
                         f"legend entry {glyph} mixes 'and' with 'or'")
                continue
            if not joiners:
                kind = LegendKind.ALIAS
            elif joiners == {"and"}:
                kind = LegendKind.AGGREGATE
            else:
                kind = LegendKind.PROPERTY
            self.legend.append(LegendEntry(glyph, kind, tuple(members), line=i + 1))

    # -- sounds ----------------------------------------------------------
    def _parse_sounds(self, body: list[int], _start: int, _stop: int) -> None:
        self.sounds.extend(" ".join(self.lines[i].split()) for i in body)

    # -- collision layers ------------------------------------------------
    def _parse_collisionlayers(self, body: list[int], _start: int, _stop: int) -> None:
        for i in body:
            names = [n for n in re.split(r"[,\s]+", self.lines[i].strip()) if n]
            bad = next((n for n in names if not _NAME.match(n)), None)
            if bad is not None:
                self.err(i + 1, self.lines[i].find(bad) + 1, dg.BAD_LAYER,
                         f"invalid name {bad!r} in collision layer")
                continue
            self.layers.append(tuple(names))
            self.layer_lines.append(i + 1)

    # -- rules -----------------------------------------------------------
    def _parse_rules(self, body: list[int], _start: int, _stop: int) -> None:
        for i in body:
            word = self.lines[i].strip().lower()
            if word in ("startloop", "endloop"):
                self.rules.append(LoopMarker(word, line=i + 1))
                continue
            rule = _RuleParser(self, i).parse()
            if rule is not None:
                self.rules.append(rule)

    # -- win conditions --------------------------------------------------
    def _parse_winconditions(self, body: list[int], _start: int, _stop: int) -> None:
        for i in body:
            words = self.lines[i].split()
            col = _col(self.lines[i])
            quant = words[0].lower()
            if quant == "any":
                quant = "some"
            ok = quant in ("all", "some", "no") and (
                len(words) == 2
                or (len(words) == 4 and words[2].lower() == "on")
            )
            if ok and any(w.lower() in KEYWORDS for w in words[1::2]):
                ok = False
            if not ok:
                self.err(i + 1, col, dg.BAD_WINCONDITION,
                         "expected 'All|Some|No <object> [on <object>]', found "
                         f"{self.lines[i].strip()[:40]!r}")
                continue
            target = words[3] if len(words) == 4 else None
            self.wins.append(WinCondition(quant, words[1], target, line=i + 1))

    # -- levels ----------------------------------------------------------
    def _parse_levels(self, _body: list[int], start: int, stop: int) -> None:
        rows: list[tuple[int, str]] = []

        def flush():
            if rows:
                width = len(rows[0][1])
                for li, row in rows[1:]:
                    if len(row) != width:
                        self.err(li + 1, _col(self.lines[li]), dg.RAGGED_LEVEL,
                                 f"level row has {len(row)} cells, expected {width}")
                        break
                self.levels.append(LevelGrid(tuple(r for _, r in rows), line=rows[0][0] + 1))
                rows.clear()

        for i in range(start, stop):
            text = self.lines[i].strip()
            if not text or _DELIM.match(text):
                flush()
                continue
            first, _, rest = text.partition(" ")
            if first.lower() == "message":
                flush()
                raw = self.lines[i]
                offset = raw.lower().find("message") + len("message")
                self.levels.append(LevelMessage(raw[offset:].strip(), line=i + 1))
                continue
            if any(ch.isspace() for ch in text):
                self.err(i + 1, _col(self.lines[i]), dg.BAD_LEVEL,
                         f"level rows may not contain spaces: {text[:40]!r}")
                continue
            rows.append((i, text))
        flush()


class _RuleParser:
    def __init__(self, outer: _Parser, index: int):
        self.outer = outer
        self.index = index
        self.line = outer.lines[index]
        self.tokens = [(m.group(), m.start() + 1) for m in _RULE_TOKEN.finditer(self.line)]
        self.pos = 0

    def fail(self, message: str, col: Optional[int] = None, code: str = dg.BAD_RULE):
        if col is None:
            col = self.tokens[self.pos][1] if self.pos < len(self.tokens) else len(self.line) + 1
        self.outer.err(self.index + 1, col, code, message)
        return None

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.tokens[self.pos][0]
        self.pos += 1
        return tok

    def parse(self) -> Optional[RuleDef]:
        late = random = rigid = group = False
        direction = None
        while self.peek() is not None and self.peek() != "[":
            word = self.peek().lower()
            if word == "late":
                late = True
            elif word == "random":
                random = True
            elif word == "rigid":
                rigid = True
            elif word == "+":
                group = True
            elif word in RULE_DIRECTIONS:
                direction = RULE_DIRECTIONS[word]
            else:
                return self.fail(f"unexpected {self.peek()!r} before the first '['")
            self.pos += 1
        lhs = []
        while self.peek() == "[":
            bracket = self.bracket()
            if bracket is None:
                return None
            lhs.append(bracket)
        if not lhs:
            return self.fail("rule has no left-hand pattern")
        if self.peek() != "->":
            return self.fail("expected '->' after the left-hand pattern")
        arrow_col = self.tokens[self.pos][1]
        self.pos += 1
        rhs = []
        while self.peek() == "[":
            bracket = self.bracket()
            if bracket is None:
                return None
            rhs.append(bracket)
        commands = []
        while self.peek() is not None:
            tok, col = self.tokens[self.pos]
            word = tok.lower()
            self.pos += 1
            if word in COMMANDS:
                commands.append(Command(word))
            elif _SFX.match(word):
                commands.append(Command(word))
            elif word == "message":
                commands.append(Command("message", self.line[col - 1 + len(tok):].strip()))
                self.pos = len(self.tokens)
            else:
                return self.fail(f"unknown command {tok!r}", col)
        if not rhs and not commands:
            return self.fail("rule has no right-hand pattern or command", arrow_col)
        if rhs and not self.shapes_agree(lhs, rhs):
            return self.fail(
                "left and right sides differ in shape: "
                f"{self.shape(lhs)} vs {self.shape(rhs)}",
                arrow_col,
                dg.RULE_ARITY_MISMATCH,
            )
        return RuleDef(
            tuple(lhs), tuple(rhs), tuple(commands),
            late=late, random=random, rigid=rigid, group_continuation=group,
            direction=direction, line=self.index + 1,
        )

    @staticmethod
    def shape(side) -> str:
        return "[" + "][".join(
            "|".join("..." if c.ellipsis else "_" for c in b.cells) for b in side
        ) + "]"

    @staticmethod
    def shapes_agree(lhs, rhs) -> bool:
        if len(lhs) != len(rhs):
            return False
        return all(
            len(a.cells) == len(b.cells) and a.ellipsis_positions == b.ellipsis_positions
            for a, b in zip(lhs, rhs)
        )

    def bracket(self) -> Optional[BracketPattern]:
        open_col = self.tokens[self.pos][1]
        self.pos += 1
        cells = []
        current: list[tuple[str, int]] = []
        while True:
            tok = self.peek()
            if tok is None:
                return self.fail("unclosed '['", open_col)
            self.pos += 1
            if tok in ("|", "]"):
                cell = self.cell(current)
                if cell is None:
                    return None
                cells.append(cell)
                current = []
                if tok == "]":
                    break
            elif tok in ("[", "->"):
                self.pos -= 1
                return self.fail(f"unexpected {tok!r} inside brackets")
            else:
                current.append(self.tokens[self.pos - 1])
        ell = [i for i, c in enumerate(cells) if c.ellipsis]
        if ell:
            if ell[0] == 0 or ell[-1] == len(cells) - 1 or any(
                b - a == 1 for a, b in zip(ell, ell[1:])
            ):
                return self.fail("'...' must sit between two cells", open_col, dg.BAD_ELLIPSIS)
        return BracketPattern(tuple(cells))

    def cell(self, toks: list[tuple[str, int]]) -> Optional[CellPattern]:
        if any(t == "..." for t, _ in toks):
            if len(toks) != 1:
                return self.fail("'...' must be alone in its cell", toks[0][1], dg.BAD_ELLIPSIS)
            return ELLIPSIS
        atoms = []
        k = 0
        while k < len(toks):
            negated = False
            motion = Motion.NONE
            tok, col = toks[k]
            if tok.lower() == "no" and k + 1 < len(toks):
                negated = True
                k += 1
                tok, col = toks[k]
            word = tok.lower()
            if word in MOTION_WORDS and k + 1 < len(toks):
                motion = MOTION_WORDS[word]
                k += 1
                tok, col = toks[k]
                word = tok.lower()
            if word in KEYWORDS or tok in "<>^" or not _NAME.match(tok):
                return self.fail(f"expected an object name, found {tok!r}", col)
            atoms.append(Atom(tok, motion, negated))
            k += 1
        return CellPattern(tuple(atoms))


def parse_game(source: SourceText | str) -> ParseResult:
    """Parse PuzzleScript text into a :class:`GameSpec`.

    The returned spec is ``None`` whenever a syntax error was reported.
    """
    if isinstance(source, str):
        source = SourceText(source)
    return _Parser(source).run()
