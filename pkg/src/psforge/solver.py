"""Budgeted breadth-first playtesting.

The search keeps only 128-bit state digests in its visited set.  Paths are
recovered from an append-only arena of (parent index, action) pairs, so the
frontier is the only place full states live.
"""

from __future__ import annotations

import time
from array import array
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from psforge.compiler import CompiledGame, CompiledLevel
from psforge.engine import (
    ACTIONS,
    Action,
    EngineError,
    Status,
    format_actions,
    hash_state,
    digest,
    expand,
    init_state,
    step,
)

DEFAULT_NODE_BUDGET = 1_000_000


class SolveStatus(str, Enum):
    SOLVED = "solved"
    EXHAUSTED = "exhausted"
    BUDGET_EXCEEDED = "budget_exceeded"
    NONDETERMINISTIC = "nondeterministic"
    ENGINE_ERROR = "engine_error"
    SKIPPED = "skipped"  # message entries in solve_all_levels


@dataclass(frozen=True)
class SolverConfig:
    node_budget: int = DEFAULT_NODE_BUDGET
    per_level_time_budget: Optional[float] = None

    def __post_init__(self):
        if self.node_budget < 1:
            raise ValueError("node_budget must be at least 1")


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    solution: tuple[Action, ...] = ()
    nodes_explored: int = 0
    enqueued: int = 0
    level_index: int = -1
    detail: str = ""
    timed_out: bool = field(default=False, compare=False)

    @property
    def solution_length(self) -> int:
        return len(self.solution)

    @property
    def solved(self) -> bool:
        return self.status is SolveStatus.SOLVED

    def summary_line(self, number: Optional[int] = None) -> str:
        n = self.level_index if number is None else number
        return (
            f"level {n}: {self.status.value}, length {self.solution_length}, "
            f"nodes {self.nodes_explored}"
        )

    def to_dict(self) -> dict:
        return {
            "level": self.level_index,
            "status": self.status.value,
            "length": self.solution_length,
            "nodes": self.nodes_explored,
            "enqueued": self.enqueued,
            "solution": format_actions(self.solution),
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveResult":
        from psforge.engine import parse_actions

        return cls(
            status=SolveStatus(data["status"]),
            solution=tuple(parse_actions(data.get("solution", ""))),
            nodes_explored=data.get("nodes", 0),
            enqueued=data.get("enqueued", 0),
            level_index=data.get("level", -1),
            detail=data.get("detail", ""),
        )


def bfs_solve(
    game: CompiledGame, level_index: int, config: SolverConfig = SolverConfig()
) -> SolveResult:
    if game.has_random_rules:
        return SolveResult(SolveStatus.NONDETERMINISTIC, level_index=level_index,
                           detail="NONDETERMINISTIC_GAME: game uses random rules")
    try:
        start = init_state(game, level_index)
    except EngineError as exc:
        return SolveResult(SolveStatus.ENGINE_ERROR, level_index=level_index,
                           detail=exc.diagnostic.render())

    deadline = None
    if config.per_level_time_budget is not None:
        deadline = time.monotonic() + config.per_level_time_budget
    budget = config.node_budget
    width, height = start.width, start.height
    parents = array("q", [-1])
    moves = bytearray([255])
    seen = {hash_state(start)}
    # frontier entries: (node, state) or (node, objects, won, parent) for plain
    # children, whose full state is rebuilt from the parent only when popped
    frontier = deque([(0, start)])
    explored = 0
    enqueued = 1

    while frontier:
        if explored >= budget:
            return SolveResult(SolveStatus.BUDGET_EXCEEDED, nodes_explored=explored,
                               enqueued=enqueued, level_index=level_index)
        if deadline is not None and explored % 256 == 0 and time.monotonic() > deadline:
            return SolveResult(SolveStatus.BUDGET_EXCEEDED, nodes_explored=explored,
                               enqueued=enqueued, level_index=level_index,
                               detail="time budget exceeded", timed_out=True)
        entry = frontier.popleft()
        explored += 1
        node = entry[0]
        if len(entry) == 2:
            state = entry[1]
        elif entry[2]:
            state = entry[3]._replace(objects=entry[1], status=Status.WON)
        else:
            state = entry[3]._replace(objects=entry[1])
        if state.status is Status.WON:
            path = []
            while node > 0:
                path.append(ACTIONS[moves[node]])
                node = parents[node]
            path.reverse()
            return SolveResult(SolveStatus.SOLVED, tuple(path), explored, enqueued,
                               level_index)
        for code, objects, won, outcome in expand(game, state):
            if outcome is not None:
                if outcome.diagnostics:
                    return SolveResult(SolveStatus.ENGINE_ERROR, nodes_explored=explored,
                                       enqueued=enqueued, level_index=level_index,
                                       detail=outcome.diagnostics[0].render())
                key = hash_state(outcome.state)
                item = (len(parents), outcome.state)
            else:
                key = digest(width, height, won, objects)
                item = (len(parents), objects, won, state)
            if key in seen:
                continue
            seen.add(key)
            parents.append(node)
            moves.append(code)
            frontier.append(item)
            enqueued += 1
    return SolveResult(SolveStatus.EXHAUSTED, nodes_explored=explored, enqueued=enqueued,
                       level_index=level_index)


def solve_all_levels(game: CompiledGame, config: SolverConfig = SolverConfig()) -> list[SolveResult]:
    """One result per level entry; message entries yield a SKIPPED marker."""
    results = []
    for index, level in enumerate(game.levels):
        if isinstance(level, CompiledLevel):
            results.append(bfs_solve(game, index, config))
        else:
            results.append(SolveResult(SolveStatus.SKIPPED, level_index=index))
    return results


def grid_results(results: list[SolveResult]) -> list[SolveResult]:
    return [r for r in results if r.status is not SolveStatus.SKIPPED]


def replay(game: CompiledGame, level_index: int, actions) -> list:
    """States visited when playing ``actions`` from the level start."""
    state = init_state(game, level_index)
    states = [state]
    for action in actions:
        if state.status is Status.WON:
            break
        state = step(game, state, action).state
        states.append(state)
    return states
