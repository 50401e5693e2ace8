from __future__ import annotations

import pytest

from conftest import GAMES, load_game
from oracles import iddfs_length, reachable_count
from psforge.compiler import compile_source
from psforge.engine import Status, format_actions
from psforge.solver import (
    DEFAULT_NODE_BUDGET,
    SolveResult,
    SolverConfig,
    SolveStatus,
    bfs_solve,
    replay,
    solve_all_levels,
)
from test_engine import PUSH, make

SMALL = sorted(p.stem for p in GAMES.glob("*.txt") if p.stem not in ("sokoban_12x12", "sprawl"))


def test_default_budget_is_one_million():
    assert DEFAULT_NODE_BUDGET == 1_000_000
    assert SolverConfig().node_budget == 1_000_000


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        SolverConfig(node_budget=0)


def test_corridor():
    result = bfs_solve(load_game("corridor"), 0)
    assert result.status is SolveStatus.SOLVED
    assert format_actions(result.solution) == "RRRR"
    assert result.solution_length == 4


def test_level_start_win():
    result = bfs_solve(load_game("level_start"), 0)
    assert (result.status, result.solution_length, result.nodes_explored) == (
        SolveStatus.SOLVED, 0, 1)


def test_sealed_room_is_exhausted_at_oracle_count():
    game = load_game("sealed_room")
    result = bfs_solve(game, 0)
    assert result.status is SolveStatus.EXHAUSTED
    assert result.solution == ()
    assert result.nodes_explored == reachable_count(game, 0)


def test_micro_sokoban_lengths():
    results = solve_all_levels(load_game("sokoban_micro"))
    assert [r.status for r in results] == [
        SolveStatus.SOLVED, SolveStatus.SKIPPED, SolveStatus.SOLVED, SolveStatus.SOLVED]
    grid = [r.solution_length for r in results if r.status is SolveStatus.SOLVED]
    assert grid == [4, 9, 13]


@pytest.mark.parametrize("name", SMALL)
def test_lengths_match_iddfs_oracle(name):
    game = load_game(name)
    for result in solve_all_levels(game):
        if result.status is SolveStatus.SKIPPED:
            continue
        expected = iddfs_length(game, result.level_index, max_depth=20)
        if result.status is SolveStatus.SOLVED:
            assert result.solution_length == expected
        else:
            assert expected is None


@pytest.mark.parametrize("name", SMALL)
def test_replay_soundness(name):
    game = load_game(name)
    for result in solve_all_levels(game):
        if result.status is not SolveStatus.SOLVED:
            continue
        states = replay(game, result.level_index, result.solution)
        assert states[-1].status is Status.WON
        assert all(s.status is not Status.WON for s in states[:-1]) or not result.solution


@pytest.mark.parametrize("budget", [1, 7, 100, 2_000])
def test_budget_exactness(budget):
    result = bfs_solve(load_game("sprawl"), 0, SolverConfig(node_budget=budget))
    assert result.status is SolveStatus.BUDGET_EXCEEDED
    assert result.nodes_explored == budget


def test_exact_budget_still_exhausts():
    game = load_game("sealed_room")
    count = reachable_count(game, 0)
    assert bfs_solve(game, 0, SolverConfig(node_budget=count)).status is SolveStatus.EXHAUSTED
    short = bfs_solve(game, 0, SolverConfig(node_budget=count - 1))
    assert short.status is SolveStatus.BUDGET_EXCEEDED


def test_random_rules_are_refused():
    game = make("P*.O", "random [ Crate ] -> [ Crate ]\n" + PUSH)
    result = bfs_solve(game, 0)
    assert result.status is SolveStatus.NONDETERMINISTIC
    assert result.nodes_explored == 0


def test_engine_error_is_reported():
    game = make("P*.O", "[ Crate ] -> [ Target ]\n[ Target no Crate ] -> [ Crate Target ]")
    result = bfs_solve(game, 0)
    assert result.status is SolveStatus.ENGINE_ERROR
    assert "RULE_LOOP_DETECTED" in result.detail


def test_message_level_rejected():
    with pytest.raises(ValueError):
        bfs_solve(load_game("sokoban_micro"), 1)


def test_empty_grid_list():
    game, _ = compile_source((GAMES / "corridor.txt").read_text())
    assert len(solve_all_levels(game)) == 1


def test_repeat_runs_are_identical():
    game = load_game("sokoban_13_15")
    assert solve_all_levels(game) == solve_all_levels(game)


def test_result_round_trips_through_dict():
    result = bfs_solve(load_game("keys"), 0)
    again = SolveResult.from_dict(result.to_dict())
    assert again == result
    assert result.to_dict()["solution"] == format_actions(result.solution)


def test_summary_line_format():
    result = bfs_solve(load_game("corridor"), 0)
    assert result.summary_line() == f"level 0: solved, length 4, nodes {result.nodes_explored}"


def test_time_budget_stops_search():
    result = bfs_solve(load_game("sprawl"), 0,
                       SolverConfig(node_budget=10_000_000, per_level_time_budget=0.05))
    assert result.status is SolveStatus.BUDGET_EXCEEDED
    assert result.timed_out
