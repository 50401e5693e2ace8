from __future__ import annotations

from conftest import MINIMAL, game_text, load_game
from psforge.compiler import DOWN, LEFT, RIGHT, UP, compile_game, compile_source
from psforge.engine import Action, init_state, render_glyphs, step
from psforge.grammar import parse_game

SOKOBAN_RULE = "[ > Player | Crate ] -> [ > Player | > Crate ]"


def compile_text(text):
    return compile_source(text)


def codes(diags):
    return [d.code for d in diags]


def with_rules(text, *rules):
    return text.replace("RULES\n======\n", "RULES\n======\n" + "\n".join(rules) + "\n")


def test_minimal_game_compiles():
    game, diags = compile_text(MINIMAL)
    assert game is not None
    assert len(game.layers) == 2
    assert game.rules == ()
    assert len(game.levels) == 1
    assert not any(d.is_error for d in diags)
    assert codes(diags) == ["NO_WIN_CONDITION"]


def test_player_missing_from_layers():
    text = MINIMAL.replace("Background\nPlayer\n\n======", "Background\n\n======")
    game, diags = compile_text(text)
    assert game is None
    diag = next(d for d in diags if d.code == "OBJECT_IN_NO_LAYER")
    assert "Player" in diag.message


def test_object_in_two_layers():
    text = MINIMAL.replace("Background\nPlayer\n\n======", "Background\nPlayer\nPlayer\n\n======")
    game, diags = compile_text(text)
    assert game is None
    assert "OBJECT_IN_MANY_LAYERS" in codes(diags)


def test_sokoban_rule_expands_to_four_directions():
    game = load_game("sokoban_4")
    assert len(game.rules) == 4
    assert [r.direction for r in game.rules] == [UP, DOWN, LEFT, RIGHT]
    assert {r.source_index for r in game.rules} == {0}


def test_direction_constraints_control_expansion():
    base = game_text("sokoban_4")
    for prefix, expected in (("", 4), ("horizontal ", 2), ("vertical ", 2), ("right ", 1)):
        text = base.replace(SOKOBAN_RULE, prefix + SOKOBAN_RULE)
        game, _ = compile_text(text)
        assert len(game.rules) == expected, prefix


def test_forward_motion_resolves_per_variant():
    text = with_rules(MINIMAL, "[ > Player ] -> [ Player ]")
    game, _ = compile_text(text)
    assert len(game.rules) == 4
    right = next(r for r in game.rules if r.direction == RIGHT)
    (cond,) = right.brackets[0][0].conditions
    assert cond.motion == RIGHT


def test_undefined_object_in_rule():
    game, diags = compile_text(with_rules(MINIMAL, "[ Ghost ] -> [ Player ]"))
    assert game is None
    assert "UNDEFINED_OBJECT" in codes(diags)


def test_unknown_glyph_in_level():
    game, diags = compile_text(MINIMAL.replace("P.\n", "P?\n"))
    assert game is None
    assert "UNKNOWN_GLYPH_IN_LEVEL" in codes(diags)


def test_no_player_defined():
    text = MINIMAL.replace("Player", "Hero")
    game, diags = compile_text(text)
    assert game is None
    assert "NO_PLAYER_DEFINED" in codes(diags)


def test_duplicate_object():
    text = MINIMAL.replace("Player\nblue\n", "Player\nblue\n\nplayer\nred\n")
    game, diags = compile_text(text)
    assert "DUPLICATE_DEFINITION" in codes(diags)


def test_unsupported_prelude_feature():
    game, diags = compile_text("realtime_interval 0.2\n\n" + MINIMAL)
    assert game is None
    assert "UNSUPPORTED_FEATURE" in codes(diags)


def test_aggregate_inside_rule_is_unsupported():
    text = MINIMAL.replace("P = Player\n", "P = Player\nQ = Player and Background\n")
    game, diags = compile_text(with_rules(text, "[ Q ] -> [ Player ]"))
    assert game is None
    assert "UNSUPPORTED_FEATURE" in codes(diags)


def test_randomdir_is_unsupported():
    game, diags = compile_text(with_rules(MINIMAL, "[ Player ] -> [ randomdir Player ]"))
    assert "UNSUPPORTED_FEATURE" in codes(diags)


def test_background_missing_from_layers_is_auto_assigned():
    text = MINIMAL.replace("Background\nPlayer\n\n======", "Player\n\n======")
    game, diags = compile_text(text)
    assert game is not None
    assert "BACKGROUND_AUTO_LAYER" in codes(diags)
    assert game.objects[game.background_id].layer == 0


def test_unused_object_warning_does_not_block():
    text = MINIMAL.replace("Player\nblue\n", "Player\nblue\n\nGem\nyellow\n").replace(
        "Background\nPlayer\n", "Background\nPlayer, Gem\n")
    game, diags = compile_text(text)
    assert game is not None
    assert "UNUSED_OBJECT" in codes(diags)


def test_empty_levels():
    text = MINIMAL.replace("P.\n", "")
    game, diags = compile_text(text)
    assert game is None
    assert "EMPTY_LEVELS" in codes(diags)


def test_compile_is_deterministic():
    spec = parse_game(game_text("gates")).spec
    a, b = compile_game(spec), compile_game(spec)
    assert a.game == b.game
    assert a.diagnostics == b.diagnostics


def test_layers_partition_objects():
    for name in ("gates", "twins", "keys", "sokoban_micro"):
        game = load_game(name)
        members = [oid for layer in game.layers for oid in layer]
        assert sorted(members) == list(range(len(game.objects)))


def test_level_reencodes_to_source_rows():
    game = load_game("sokoban_micro")
    for index in game.grid_level_indices:
        state = init_state(game, index)
        assert render_glyphs(game, state) == list(game.levels[index].rows)


def test_property_binding_preserves_identity():
    text = game_text("sokoban_4")
    text = text.replace("Crate\norange\n", "Ball\nred\n\nCrate\norange\n")
    text = text.replace("* = Crate\n", "* = Crate\nb = Ball\nPushable = Crate or Ball\n")
    text = text.replace("Player, Wall, Crate", "Player, Wall, Crate, Ball")
    text = text.replace(SOKOBAN_RULE, "[ > Player | Pushable ] -> [ > Player | > Pushable ]")
    text = text.replace("#P..*.O#", "#Pb..*O#")
    game, diags = compile_text(text)
    assert game is not None, [d.render() for d in diags]
    state = init_state(game, 0)
    ball = game.object_named("Ball").id
    crate = game.object_named("Crate").id
    assert (state.positions(ball), state.positions(crate)) == ([(1, 2)], [(1, 5)])
    after = step(game, state, Action.RIGHT).state
    assert (after.positions(ball), after.positions(crate)) == ([(1, 3)], [(1, 5)])
    after = step(game, after, Action.RIGHT).state
    after = step(game, after, Action.RIGHT).state
    # the ball is now against the crate, which the ball cannot push
    assert (after.positions(ball), after.positions(crate)) == ([(1, 4)], [(1, 5)])
