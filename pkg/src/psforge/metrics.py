"""Per-game evaluation and table-style aggregation over many trials."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Callable, Iterable, Optional, Sequence, Union

from psforge.compiler import CompiledGame, compile_game
from psforge.grammar import SourceText, parse_game
from psforge.solver import SolveResult, SolverConfig, SolveStatus, grid_results, solve_all_levels

COLUMNS = ("Compiles", "Any Solvable", "All Solvable", "Sol. Complexity")


@dataclass(frozen=True)
class EvalThresholds:
    """Solution-length bars, both strict: a level counts when length > bar."""

    any_solvable_min_length: int = 1
    all_solvable_min_length: int = 10

    def __post_init__(self):
        if not 0 <= self.any_solvable_min_length <= self.all_solvable_min_length:
            raise ValueError("thresholds must satisfy 0 <= any <= all")

    def to_dict(self) -> dict:
        return {"any_solvable_min_length": self.any_solvable_min_length,
                "all_solvable_min_length": self.all_solvable_min_length}

    @classmethod
    def from_dict(cls, data: dict) -> "EvalThresholds":
        return cls(**data)


@dataclass(frozen=True)
class GameEvalReport:
    compiles: bool
    per_level: tuple[SolveResult, ...] = ()
    any_solvable: bool = False
    all_solvable: bool = False
    # nodes explored, summed over solved levels only
    complexity: int = 0

    def to_dict(self) -> dict:
        return {
            "compiles": self.compiles,
            "any_solvable": self.any_solvable,
            "all_solvable": self.all_solvable,
            "complexity": self.complexity,
            "per_level": [r.to_dict() for r in self.per_level],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameEvalReport":
        return cls(
            compiles=data["compiles"],
            per_level=tuple(SolveResult.from_dict(r) for r in data.get("per_level", ())),
            any_solvable=data.get("any_solvable", False),
            all_solvable=data.get("all_solvable", False),
            complexity=data.get("complexity", 0),
        )


NOT_COMPILED = GameEvalReport(compiles=False)


def report_from_results(results: Sequence[SolveResult],
                        thresholds: EvalThresholds = EvalThresholds()) -> GameEvalReport:
    """Report for a game that compiled and was solved level by level."""
    levels = tuple(grid_results(list(results)))
    solved = [r for r in levels if r.status is SolveStatus.SOLVED]
    any_ok = any(r.solution_length > thresholds.any_solvable_min_length for r in solved)
    all_ok = bool(levels) and all(
        r.status is SolveStatus.SOLVED
        and r.solution_length > thresholds.all_solvable_min_length
        for r in levels
    )
    return GameEvalReport(
        compiles=True,
        per_level=levels,
        any_solvable=any_ok,
        all_solvable=all_ok,
        complexity=sum(r.nodes_explored for r in solved),
    )


def evaluate_compiled(game: CompiledGame, thresholds: EvalThresholds = EvalThresholds(),
                      solver_config: SolverConfig = SolverConfig()) -> GameEvalReport:
    return report_from_results(solve_all_levels(game, solver_config), thresholds)


def evaluate_game(source: Union[SourceText, str], thresholds: EvalThresholds = EvalThresholds(),
                  solver_config: SolverConfig = SolverConfig()) -> GameEvalReport:
    parsed = parse_game(source)
    if parsed.spec is None:
        return NOT_COMPILED
    game = compile_game(parsed.spec).game
    if game is None:
        return NOT_COMPILED
    return evaluate_compiled(game, thresholds, solver_config)


# -- aggregation -------------------------------------------------------------

def round_half_up(value: float) -> int:
    return int(Decimal(repr(value)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def percent(part: int, whole: int) -> int:
    return round_half_up(100 * part / whole) if whole else 0


@dataclass(frozen=True)
class SummaryRow:
    group: str
    trials: int
    compiles_pct: int
    any_pct: int
    all_pct: int
    complexity_mean: int
    complexity_std: int

    @property
    def complexity_text(self) -> str:
        return f"{self.complexity_mean:,} ± {self.complexity_std:,}"

    def cells(self) -> list[str]:
        return [f"{self.compiles_pct}%", f"{self.any_pct}%", f"{self.all_pct}%",
                self.complexity_text]


@dataclass(frozen=True)
class SummaryTable:
    group_label: str
    rows: tuple[SummaryRow, ...] = field(default_factory=tuple)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.group_label, "Trials", *COLUMNS])
        for row in self.rows:
            writer.writerow([row.group, row.trials, *row.cells()])
        return buf.getvalue()

    def to_text(self) -> str:
        header = [self.group_label, "Trials", *COLUMNS]
        body = [[row.group, str(row.trials), *row.cells()] for row in self.rows]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

        def line(cells):
            first = cells[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
            return "  ".join([first, *rest]).rstrip()

        out = [line(header), "  ".join("-" * w for w in widths)]
        out += [line(r) for r in body]
        return "\n".join(out) + "\n"


def _summarise(group: str, reports: list[GameEvalReport]) -> SummaryRow:
    n = len(reports)
    complexities = [r.complexity for r in reports]
    mean = sum(complexities) / n
    std = math.sqrt(sum((c - mean) ** 2 for c in complexities) / n)
    return SummaryRow(
        group=group,
        trials=n,
        compiles_pct=percent(sum(r.compiles for r in reports), n),
        any_pct=percent(sum(r.any_solvable for r in reports), n),
        all_pct=percent(sum(r.all_solvable for r in reports), n),
        complexity_mean=round_half_up(mean),
        complexity_std=round_half_up(std),
    )


def aggregate_reports(pairs: Iterable[tuple[str, GameEvalReport]],
                      group_label: str = "Group") -> SummaryTable:
    """Group ``(group, report)`` pairs, keeping first-seen group order."""
    groups: dict[str, list[GameEvalReport]] = {}
    for group, report in pairs:
        groups.setdefault(group, []).append(report)
    return SummaryTable(group_label, tuple(_summarise(g, rs) for g, rs in groups.items()))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "T" if value else "F"
    return str(value)


GroupKey = Union[str, Sequence[str], Callable[[Any], str], None]


def group_label(group_key: GroupKey) -> str:
    if group_key is None:
        return "All"
    if callable(group_key):
        return getattr(group_key, "__name__", "Group")
    if isinstance(group_key, str):
        return group_key
    return "/".join(group_key)


def group_of(trial, group_key: GroupKey) -> str:
    """Group label of a trial; config fields render booleans as T/F joined by '/'."""
    if group_key is None:
        return "all"
    if callable(group_key):
        return str(group_key(trial))
    keys = [group_key] if isinstance(group_key, str) else list(group_key)
    config = trial.config
    values = []
    for key in keys:
        value = config.get(key) if isinstance(config, dict) else getattr(config, key)
        values.append(_format_value(value))
    return "/".join(values)


def aggregate(trials: Iterable, group_key: GroupKey = None) -> SummaryTable:
    """Summarise trials by their final iteration's evaluation.

    Trials that never produced an evaluation count as non-compiling games
    with complexity 0.
    """
    pairs = []
    for trial in trials:
        report: Optional[GameEvalReport] = trial.final_eval
        pairs.append((group_of(trial, group_key), report or NOT_COMPILED))
    return aggregate_reports(pairs, group_label(group_key))
