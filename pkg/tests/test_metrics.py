from __future__ import annotations

import csv
import io
from types import SimpleNamespace

import pytest

from conftest import game_text
from oracles import half_up, mean_std_text
from psforge.metrics import (
    NOT_COMPILED,
    EvalThresholds,
    GameEvalReport,
    SummaryTable,
    aggregate,
    aggregate_reports,
    evaluate_game,
    percent,
    report_from_results,
    round_half_up,
)
from psforge.solver import SolveResult, SolveStatus, solve_all_levels
from psforge.engine import Action


def solved(length, nodes, index=0):
    return SolveResult(SolveStatus.SOLVED, (Action.RIGHT,) * length, nodes, level_index=index)


def trial(report, **config):
    return SimpleNamespace(final_eval=report, config=config)


def test_prose_does_not_compile():
    report = evaluate_game("I would rather write a poem.")
    assert report == GameEvalReport(False, (), False, False, 0)


def test_four_and_thirteen():
    report = evaluate_game(game_text("sokoban_4_13"))
    assert report.compiles and report.any_solvable and not report.all_solvable
    assert [r.solution_length for r in report.per_level] == [4, 13]


def test_thirteen_and_fifteen():
    report = evaluate_game(game_text("sokoban_13_15"))
    assert report.all_solvable
    assert report.complexity == sum(r.nodes_explored for r in report.per_level)


def test_threshold_edges():
    assert not report_from_results([solved(1, 2)]).any_solvable
    assert report_from_results([solved(2, 2)]).any_solvable
    assert not report_from_results([solved(10, 2)]).all_solvable
    assert report_from_results([solved(11, 2)]).all_solvable


def test_thresholds_validate():
    with pytest.raises(ValueError):
        EvalThresholds(5, 2)
    with pytest.raises(ValueError):
        EvalThresholds(-1, 2)


def test_complexity_counts_solved_levels_only():
    results = [solved(12, 30), SolveResult(SolveStatus.BUDGET_EXCEEDED, (), 1000, level_index=1)]
    report = report_from_results(results)
    assert report.complexity == 30
    assert not report.all_solvable


def test_no_grid_levels_is_not_all_solvable():
    report = report_from_results([SolveResult(SolveStatus.SKIPPED)])
    assert report.compiles and not report.any_solvable and not report.all_solvable


def test_complexity_is_order_invariant():
    results = [solved(12, 30, 0), solved(3, 7, 1), solved(15, 80, 2)]
    assert report_from_results(results).complexity == report_from_results(results[::-1]).complexity


@pytest.mark.parametrize("bar", range(0, 20))
def test_raising_the_bar_is_monotone(bar):
    results = solve_all_levels(__import__("conftest").load_game("sokoban_13_15"))
    low = report_from_results(results, EvalThresholds(0, bar))
    high = report_from_results(results, EvalThresholds(0, bar + 1))
    assert not (high.all_solvable and not low.all_solvable)


def test_report_round_trips():
    report = evaluate_game(game_text("sokoban_4_13"))
    assert GameEvalReport.from_dict(report.to_dict()) == report


def test_rounding_is_half_up():
    for value in (0.5, 1.5, 2.5, 12.5, 56.5, 2.4999, 99.5):
        assert round_half_up(value) == half_up(value)
    assert percent(1, 8) == 13  # 12.5
    assert percent(0, 0) == 0


def test_sixteen_of_twenty_is_eighty_percent():
    reports = [GameEvalReport(True)] * 16 + [NOT_COMPILED] * 4
    table = aggregate_reports([("T/T", r) for r in reports])
    (row,) = table.rows
    assert row.cells()[0] == "80%"
    assert row.trials == 20


def test_identical_complexity():
    reports = [GameEvalReport(True, complexity=13)] * 20
    (row,) = aggregate_reports([("x", r) for r in reports]).rows
    assert row.complexity_text == "13 ± 0"


def test_one_outlier_complexity():
    values = [0] * 19 + [260]
    reports = [GameEvalReport(True, complexity=v) for v in values]
    (row,) = aggregate_reports([("x", r) for r in reports]).rows
    assert row.complexity_text == mean_std_text(values) == "13 ± 57"


def test_thousands_separator():
    (row,) = aggregate_reports([("x", GameEvalReport(True, complexity=1_234_567))]).rows
    assert row.complexity_text == "1,234,567 ± 0"


def test_grouping_by_config_flags():
    trials = []
    for fewshot in (True, False):
        for cot in (True, False):
            for k in range(5):
                report = GameEvalReport(k < 4, complexity=k)
                trials.append(trial(report, fewshot=fewshot, cot=cot))
    table = aggregate(trials, ["fewshot", "cot"])
    assert table.group_label == "fewshot/cot"
    assert [r.group for r in table.rows] == ["T/T", "T/F", "F/T", "F/F"]
    assert all(r.trials == 5 and r.compiles_pct == 80 for r in table.rows)
    assert sum(r.trials for r in table.rows) == len(trials)


def test_missing_evaluation_counts_as_not_compiled():
    (row,) = aggregate([trial(None, fewshot=False)], "fewshot").rows
    assert (row.compiles_pct, row.complexity_text) == (0, "0 ± 0")


def test_empty_input_gives_empty_table():
    table = aggregate([], None)
    assert table.rows == ()
    assert table.to_csv().count("\n") == 1


def test_csv_and_text_forms():
    reports = [GameEvalReport(True, (), True, False, 1500), NOT_COMPILED]
    table = aggregate_reports([("a", r) for r in reports], "Model")
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == ["Model", "Trials", "Compiles", "Any Solvable", "All Solvable",
                       "Sol. Complexity"]
    assert rows[1] == ["a", "2", "50%", "50%", "0%", "750 ± 750"]
    text = table.to_text().splitlines()
    assert text[0].startswith("Model")
    assert len({len(line) for line in text[:2]}) == 1


def test_percentages_in_range():
    import random

    rng = random.Random(9)
    reports = [GameEvalReport(rng.random() < 0.5, (), rng.random() < 0.3, False,
                              rng.randrange(1000)) for _ in range(37)]
    table: SummaryTable = aggregate_reports([(str(i % 3), r) for i, r in enumerate(reports)])
    for row in table.rows:
        for pct in (row.compiles_pct, row.any_pct, row.all_pct):
            assert 0 <= pct <= 100
