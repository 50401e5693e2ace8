from __future__ import annotations

import io

from conftest import load_game
from psforge.engine import Action, hash_state, parse_actions
from psforge.play import KEYMAP, PlaySession, Renderer, play_replay


def test_replay_wins_corridor():
    out = io.StringIO()
    code = play_replay(load_game("corridor"), 0, parse_actions("RRRR"), out)
    assert code == 0
    assert out.getvalue().endswith("Level 0 complete in 4 moves.\n")


def test_undo_and_restart():
    session = PlaySession(load_game("sokoban_13"), 0)
    start = hash_state(session.state)
    session.act(Action.RIGHT)
    session.act(Action.DOWN)
    moved = hash_state(session.state)
    assert moved != start
    session.restart()
    assert hash_state(session.state) == start
    assert session.moves == []
    session.undo()  # undoing the restart returns to where we were
    assert hash_state(session.state) == moved
    while session.undo():
        pass
    assert hash_state(session.state) == start


def test_blocked_move_is_not_recorded():
    session = PlaySession(load_game("corridor"), 0)
    assert not session.act(Action.LEFT)
    assert session.moves == [] and session.history == []


def test_quit_command():
    session = PlaySession(load_game("corridor"), 0)
    assert session.command(KEYMAP["q"]) is False
    assert session.command(KEYMAP["\x1b[C"]) is True
    assert session.moves == [Action.RIGHT]


def test_plain_frame_shows_glyphs():
    game = load_game("sokoban_4")
    session = PlaySession(game, 0)
    frame = Renderer(game, colour=False).frame(session.state)
    assert frame.splitlines()[1].replace(" ", "") == "#P..*.O#"


def test_colour_frame_uses_truecolor():
    game = load_game("sokoban_4")
    frame = Renderer(game, colour=True).frame(PlaySession(game, 0).state)
    assert "\x1b[48;2;" in frame
