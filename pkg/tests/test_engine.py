"""Engine behaviour on small hand-traced boards."""

from __future__ import annotations

import subprocess
import sys

import pytest

from conftest import MINIMAL, load_game
from psforge.compiler import compile_source
from psforge.engine import (
    Action,
    Status,
    check_win,
    hash_state,
    init_state,
    parse_actions,
    resolve_movement,
    step,
    successors,
    with_motion,
)

BOX_GAME = """\
========
OBJECTS
========

Background
black

Wall
grey

Player
blue

Crate
orange

Target
red

=======
LEGEND
=======

. = Background
# = Wall
P = Player
* = Crate
O = Target
@ = Crate and Target

================
COLLISIONLAYERS
================

Background
Target
Player, Wall, Crate

======
RULES
======

{rules}

==============
WINCONDITIONS
==============

{win}

=======
LEVELS
=======

{level}
"""


def make(level: str, rules: str = "", win: str = "All Target on Crate"):
    game, diags = compile_source(BOX_GAME.format(level=level, rules=rules, win=win))
    assert game is not None, [d.render() for d in diags]
    return game


PUSH = "[ > Player | Crate ] -> [ > Player | > Crate ]"


def ids(game, *names):
    return [game.object_named(n).id for n in names]


def test_bare_movement():
    game, _ = compile_source(MINIMAL)
    state = init_state(game, 0)
    (player,) = ids(game, "Player")
    assert state.positions(player) == [(0, 0)]
    outcome = step(game, state, Action.RIGHT)
    assert outcome.changed
    assert outcome.state.positions(player) == [(0, 1)]


def test_wall_blocks_movement():
    game = make("P#O*")
    outcome = step(game, init_state(game, 0), Action.RIGHT)
    assert not outcome.changed
    assert outcome.state.objects == init_state(game, 0).objects


def test_push_moves_both():
    game = make("P*.O", PUSH)
    player, crate = ids(game, "Player", "Crate")
    after = step(game, init_state(game, 0), Action.RIGHT).state
    assert after.positions(player) == [(0, 1)]
    assert after.positions(crate) == [(0, 2)]


def test_push_into_wall_moves_nothing():
    game = make("P*#O", PUSH)
    assert not step(game, init_state(game, 0), Action.RIGHT).changed


def test_off_grid_motion_is_cleared():
    game = make("O.P", PUSH)
    outcome = step(game, init_state(game, 0), Action.RIGHT)
    assert not outcome.changed
    assert outcome.state.motions == ()


def test_contested_cell_goes_to_row_major_first():
    game = make("P.*O")
    player, crate = ids(game, "Player", "Crate")
    layer = game.objects[player].layer
    state = init_state(game, 0)
    state = with_motion(game, state, 0, 0, layer, "right")
    state = with_motion(game, state, 0, 2, layer, "left")
    after = resolve_movement(game, state)
    assert after.positions(player) == [(0, 1)]
    assert after.positions(crate) == [(0, 2)]
    assert after.motions == ()


def test_contest_in_column_prefers_upper_source():
    game = make("*\n.\nP\nO")
    player, crate = ids(game, "Player", "Crate")
    layer = game.objects[player].layer
    state = init_state(game, 0)
    state = with_motion(game, state, 2, 0, layer, "up")
    state = with_motion(game, state, 0, 0, layer, "down")
    after = resolve_movement(game, state)
    assert after.positions(crate) == [(1, 0)]
    assert after.positions(player) == [(2, 0)]


def test_chain_of_movers_all_commit():
    game = make("P**.O")
    player, crate = ids(game, "Player", "Crate")
    layer = game.objects[player].layer
    state = init_state(game, 0)
    for col in (0, 1, 2):
        state = with_motion(game, state, 0, col, layer, "right")
    after = resolve_movement(game, state)
    assert after.positions(player) == [(0, 1)]
    assert sorted(after.positions(crate)) == [(0, 2), (0, 3)]


def test_chain_blocked_at_head_moves_nothing():
    game = make("P**#O")
    player, crate = ids(game, "Player", "Crate")
    layer = game.objects[player].layer
    state = init_state(game, 0)
    for col in (0, 1, 2):
        state = with_motion(game, state, 0, col, layer, "right")
    after = resolve_movement(game, state)
    assert after.objects == init_state(game, 0).objects


def test_win_all_on_is_vacuous_without_subjects():
    game = make("P*.")
    assert check_win(game, init_state(game, 0))


def test_win_no_on_fails_with_witness():
    game = make("P@.", win="No Crate on Target")
    assert not check_win(game, init_state(game, 0))
    game = make("P*O", win="No Crate on Target")
    assert check_win(game, init_state(game, 0))


def test_win_some():
    game = make("P*O", win="Some Crate on Target")
    assert not check_win(game, init_state(game, 0))
    game = make("P@.", win="Some Crate")
    assert check_win(game, init_state(game, 0))


def test_no_win_conditions_never_win():
    game, _ = compile_source(MINIMAL)
    state = init_state(game, 0)
    assert not check_win(game, state)
    assert not step(game, state, Action.RIGHT).won


def test_sokoban_solved_position():
    game = make("P*O", PUSH)
    outcome = step(game, init_state(game, 0), Action.RIGHT)
    assert outcome.won
    assert outcome.state.status is Status.WON
    assert check_win(game, outcome.state)


def test_aggregate_glyph_places_both_objects():
    game = make("P@.")
    crate, target = ids(game, "Crate", "Target")
    state = init_state(game, 0)
    assert crate in state.cell_objects(0, 1)
    assert target in state.cell_objects(0, 1)


def test_cancel_restores_state_and_hash():
    game = make("P*.O", PUSH + "\n[ Crate | Crate ] -> cancel\n[ > Player | Crate ] -> cancel")
    state = init_state(game, 0)
    outcome = step(game, state, Action.RIGHT)
    assert not outcome.changed
    assert [e.kind for e in outcome.events] == ["cancelled"]
    assert hash_state(outcome.state) == hash_state(state)


def test_rule_loop_is_reported_not_hung():
    game = make("P*.O", "[ Crate ] -> [ Target ]\n[ Target no Crate ] -> [ Crate Target ]")
    outcome = step(game, init_state(game, 0), Action.RIGHT)
    assert outcome.failed
    assert outcome.diagnostics[0].code == "RULE_LOOP_DETECTED"


def test_late_rule_sees_post_movement_board():
    game = make("P.O", "late [ Player Target ] -> [ Player Crate Target ]", win="Some Crate")
    outcome = step(game, init_state(game, 0), Action.RIGHT)
    assert not outcome.won
    outcome = step(game, outcome.state, Action.RIGHT)
    assert outcome.won


def test_again_repeats_rules():
    rules = "[ Crate | no Crate ] -> [ Crate | Crate ] again"
    game = make("P*...O", "[ Crate | no Crate no Wall ] -> [ Crate | Crate ]".replace(
        "[ Crate | no Crate no Wall ] -> [ Crate | Crate ]", "right " + rules))
    outcome = step(game, init_state(game, 0), Action.ACT)
    (crate,) = ids(game, "Crate")
    assert len(outcome.state.positions(crate)) == 5


def test_restart_returns_to_level_start():
    game = make("P..O*", "late [ Player Target ] -> restart")
    state = init_state(game, 0)
    for _ in range(2):
        state = step(game, state, Action.RIGHT).state
    outcome = step(game, state, Action.RIGHT)
    assert [e.kind for e in outcome.events] == ["restarted"]
    assert outcome.state.objects == init_state(game, 0).objects


def test_hash_distinguishes_and_matches():
    game = make("P*.O", PUSH)
    a = init_state(game, 0)
    b = step(game, a, Action.RIGHT).state
    assert hash_state(a) == hash_state(init_state(game, 0))
    assert hash_state(a) != hash_state(b)
    assert len(hash_state(a)) == 16


def test_hash_stable_across_processes():
    script = (
        "import sys; sys.path.insert(0, 'tests');"
        "from conftest import load_game;"
        "from psforge.engine import init_state, hash_state;"
        "print(hash_state(init_state(load_game('sokoban_13'), 0)).hex())"
    )
    outs = {subprocess.run([sys.executable, "-c", script], capture_output=True, text=True,
                           check=True).stdout for _ in range(2)}
    assert outs == {hash_state(init_state(load_game("sokoban_13"), 0)).hex() + "\n"}


def test_step_is_deterministic():
    game = load_game("gates")
    state = init_state(game, 0)
    for action in parse_actions("RRDDLLUX"):
        a, b = step(game, state, action), step(game, state, action)
        assert a == b
        if not a.won:
            state = a.state


def test_successors_match_step():
    game = load_game("demolition")
    state = init_state(game, 1)
    for action, outcome in successors(game, state):
        direct = step(game, state, action)
        assert outcome.state.objects == direct.state.objects
        assert outcome.won == direct.won


def test_layer_exclusivity_after_random_play():
    import random

    game = load_game("twins")
    rng = random.Random(5)
    state = init_state(game, 0)
    for _ in range(200):
        outcome = step(game, state, rng.choice(list(Action)))
        if outcome.won:
            state = init_state(game, 0)
            continue
        state = outcome.state
        for layer in game.layers:
            seen = 0
            for oid in layer:
                assert seen & state.objects[oid] == 0
                seen |= state.objects[oid]


def test_message_level_cannot_be_initialised():
    game = load_game("sokoban_micro")
    with pytest.raises(ValueError):
        init_state(game, 1)
    with pytest.raises(IndexError):
        init_state(game, 99)


def test_level_start_rules_run_once():
    game = load_game("level_start")
    assert init_state(game, 0).status is Status.WON


def test_won_state_cannot_step():
    game = load_game("level_start")
    with pytest.raises(ValueError):
        step(game, init_state(game, 0), Action.UP)


@pytest.mark.parametrize("name", ["sokoban_13", "pull", "corridor", "gates", "demolition", "lever"])
def test_skipping_act_is_sound(name):
    from psforge.engine import expand, runtime

    game = load_game(name)
    state = init_state(game, game.grid_level_indices[0])
    codes = [code for code, *_ in expand(game, state)]
    act = step(game, state, Action.ACT)
    if runtime(game).act_inert:
        assert 4 not in codes
        assert not act.changed
    else:
        assert (4 in codes) == act.changed
