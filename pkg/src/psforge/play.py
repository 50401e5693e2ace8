"""Terminal play mode.

The session logic (:class:`PlaySession`) is independent of the terminal so
that replays and tests drive it directly; :func:`play_terminal` adds raw-mode
key reading and ANSI drawing on top.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, TextIO

from psforge.compiler import CompiledGame, CompiledLevel, CompiledMessage
from psforge.engine import Action, GameState, Status, hash_state, init_state, step

# The reference editor's named palette (the "arnecolors" scheme).
PALETTE = {
    "black": "#000000", "white": "#ffffff", "grey": "#9d9d9d", "gray": "#9d9d9d",
    "lightgrey": "#bfbfbf", "lightgray": "#bfbfbf", "darkgrey": "#697175",
    "darkgray": "#697175", "red": "#be2633", "darkred": "#732930", "lightred": "#e06f8b",
    "brown": "#a46422", "darkbrown": "#493c2b", "lightbrown": "#eeb62f",
    "orange": "#eb8931", "yellow": "#f7e26b", "green": "#44891a", "darkgreen": "#2f484e",
    "lightgreen": "#a3ce27", "blue": "#1d57f7", "lightblue": "#b2dcef",
    "darkblue": "#1b2632", "purple": "#342a97", "pink": "#de65e2", "transparent": None,
}

KEYMAP = {
    "\x1b[A": "up", "\x1b[B": "down", "\x1b[D": "left", "\x1b[C": "right",
    "w": "up", "s": "down", "a": "left", "d": "right",
    "x": "act", " ": "act", "z": "undo", "u": "undo", "r": "restart", "q": "quit",
    "\x03": "quit", "\x1b": "quit",
}
_ACTION_OF = {"up": Action.UP, "down": Action.DOWN, "left": Action.LEFT,
              "right": Action.RIGHT, "act": Action.ACT}


@dataclass
class PlaySession:
    """One level being played, with an unbounded undo stack."""

    game: CompiledGame
    level_index: int
    state: GameState = field(init=False)
    initial: GameState = field(init=False)
    history: list[tuple[bytes, GameState]] = field(default_factory=list, init=False)
    moves: list[Action] = field(default_factory=list, init=False)
    messages: list[str] = field(default_factory=list, init=False)

    def __post_init__(self):
        self.initial = self.state = init_state(self.game, self.level_index)

    @property
    def won(self) -> bool:
        return self.state.status is Status.WON

    def act(self, action: Action) -> bool:
        """Play one turn; returns whether the board changed."""
        if self.won:
            return False
        outcome = step(self.game, self.state, action)
        for event in outcome.events:
            if event.kind == "message":
                self.messages.append(event.text)
        if outcome.diagnostics:
            self.messages.extend(d.render() for d in outcome.diagnostics)
            return False
        if not outcome.changed and not outcome.won:
            return False
        self.history.append((hash_state(self.state), self.state))
        self.state = outcome.state
        self.moves.append(action)
        return True

    def undo(self) -> bool:
        if not self.history:
            return False
        _, self.state = self.history.pop()
        if self.moves:
            self.moves.pop()
        return True

    def restart(self) -> None:
        if self.state != self.initial:
            self.history.append((hash_state(self.state), self.state))
        self.state = self.initial
        self.moves.clear()

    def command(self, name: str) -> bool:
        """Apply a named command; returns False only for ``quit``."""
        if name == "quit":
            return False
        if name == "undo":
            self.undo()
        elif name == "restart":
            self.restart()
        elif name in _ACTION_OF:
            self.act(_ACTION_OF[name])
        return True


# -- drawing ---------------------------------------------------------------

def _rgb(color: str) -> Optional[tuple[int, int, int]]:
    color = color.lower()
    value = PALETTE.get(color, color)
    if not value or not value.startswith("#"):
        return None
    value = value[1:]
    if len(value) == 3:
        value = "".join(ch * 2 for ch in value)
    try:
        return int(value[0:2], 16), int(value[2:4], 16), int(value[4:6], 16)
    except ValueError:
        return None


def _object_colour(obj) -> Optional[tuple[int, int, int]]:
    if obj.sprite is not None:
        counts: dict[int, int] = {}
        for row in obj.sprite.rows:
            for px in row:
                if px is not None:
                    counts[px] = counts.get(px, 0) + 1
        if counts:
            index = max(counts, key=lambda k: (counts[k], -k))
            if index < len(obj.colors):
                return _rgb(obj.colors[index])
    return _rgb(obj.colors[0]) if obj.colors else None


def _object_glyphs(game: CompiledGame) -> dict[int, str]:
    glyphs = {}
    for glyph, members in game.glyphs.items():
        if len(glyph) != 1:
            continue
        rest = set(members) - {game.background_id}
        if len(rest) == 1:
            glyphs.setdefault(next(iter(rest)), glyph)
    for obj in game.objects:
        glyphs.setdefault(obj.id, obj.name[0])
    return glyphs


class Renderer:
    def __init__(self, game: CompiledGame, colour: bool = True):
        self.game = game
        self.colour = colour
        self.glyphs = _object_glyphs(game)
        self.colours = {o.id: _object_colour(o) for o in game.objects}

    def top_object(self, state: GameState, row: int, col: int) -> Optional[int]:
        for layer in reversed(range(len(self.game.layers))):
            oid = state.slot(self.game, row, col, layer)
            if oid is not None and (oid != self.game.background_id or layer == 0):
                return oid
        return None

    def frame(self, state: GameState) -> str:
        lines = []
        for r in range(state.height):
            cells = []
            for c in range(state.width):
                oid = self.top_object(state, r, c)
                glyph = "." if oid is None or oid == self.game.background_id else self.glyphs[oid]
                rgb = self.colours.get(oid) if oid is not None else None
                if self.colour and rgb:
                    fg = "30" if sum(rgb) > 380 else "97"
                    cells.append(f"\x1b[48;2;{rgb[0]};{rgb[1]};{rgb[2]}m\x1b[{fg}m{glyph} \x1b[0m")
                else:
                    cells.append(glyph + " ")
            lines.append("".join(cells).rstrip() if not self.colour else "".join(cells))
        return "\n".join(lines)


# -- terminal front ends -------------------------------------------------------

def _playable_levels(game: CompiledGame, start: int) -> list[int]:
    return [i for i in range(start, len(game.levels))
            if isinstance(game.levels[i], CompiledLevel)]


def win_banner(session: PlaySession) -> str:
    return f"Level {session.level_index} complete in {len(session.moves)} moves."


def play_replay(game: CompiledGame, level_index: int, actions: Iterable[Action],
                out: TextIO, colour: bool = False) -> int:
    """Feed recorded actions to a session; exit status 0 iff the level is won."""
    session = PlaySession(game, level_index)
    renderer = Renderer(game, colour)
    for action in actions:
        if session.won:
            break
        session.act(action)
    out.write(renderer.frame(session.state) + "\n")
    for message in session.messages:
        out.write(f"message: {message}\n")
    if session.won:
        out.write(win_banner(session) + "\n")
        return 0
    out.write(f"Not solved after {len(session.moves)} moves.\n")
    return 1


def read_key(fd: int) -> str:
    data = os.read(fd, 1).decode("latin-1")
    if data == "\x1b":
        import select

        ready, _, _ = select.select([fd], [], [], 0.05)
        if ready:
            data += os.read(fd, 2).decode("latin-1")
    return data.lower() if len(data) == 1 else data


def play_terminal(game: CompiledGame, level_index: int, out: TextIO = sys.stdout,
                  record: Optional[Callable[[list[Action]], None]] = None) -> int:
    """Interactive loop on the controlling terminal; advances through later levels."""
    import termios
    import tty

    fd = sys.stdin.fileno()
    saved = termios.tcgetattr(fd)
    renderer = Renderer(game, colour=True)
    played: list[Action] = []
    levels = _playable_levels(game, level_index)
    try:
        tty.setcbreak(fd)
        for index in levels:
            entry = game.levels[index - 1] if index > 0 else None
            session = PlaySession(game, index)
            while True:
                out.write("\x1b[2J\x1b[H")
                if isinstance(entry, CompiledMessage) and not session.moves:
                    out.write(f"{entry.text}\n\n")
                out.write(renderer.frame(session.state) + "\n\n")
                out.write(f"level {index}  moves {len(session.moves)}   "
                          "arrows/WASD move, X act, Z undo, R restart, Q quit\n")
                for message in session.messages[-3:]:
                    out.write(f"{message}\n")
                out.flush()
                if session.won:
                    played.extend(session.moves)
                    out.write(win_banner(session) + "\n")
                    out.flush()
                    break
                if not session.command(KEYMAP.get(read_key(fd), "")):
                    played.extend(session.moves)
                    return 0
        out.write("All levels complete.\n")
        return 0
    finally:
        termios.tcsetattr(fd, termios.TCSADRAIN, saved)
        if record is not None:
            record(played)
