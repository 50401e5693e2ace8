"""Positioned diagnostics shared by the parser, compiler and engine.

Diagnostics are rendered as ``line:col [CODE] message`` because they are fed
back verbatim into generation prompts; the codes below are therefore part of
the public surface and must not be renamed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class Phase(str, Enum):
    SYNTAX = "syntax"
    SEMANTIC = "semantic"
    RUNTIME = "runtime"


# syntax phase
UNCLOSED_COMMENT = "UNCLOSED_COMMENT"
BAD_PRELUDE = "BAD_PRELUDE"
MISSING_DELIMITER = "MISSING_DELIMITER"
MISSING_SECTION = "MISSING_SECTION"
DUPLICATE_SECTION = "DUPLICATE_SECTION"
BAD_OBJECT = "BAD_OBJECT"
BAD_COLOR = "BAD_COLOR"
BAD_SPRITE = "BAD_SPRITE"
BAD_LEGEND = "BAD_LEGEND"
BAD_LAYER = "BAD_LAYER"
BAD_RULE = "BAD_RULE"
BAD_ELLIPSIS = "BAD_ELLIPSIS"
BAD_WINCONDITION = "BAD_WINCONDITION"
BAD_LEVEL = "BAD_LEVEL"
RAGGED_LEVEL = "RAGGED_LEVEL"
UNEXPECTED_CONTENT = "UNEXPECTED_CONTENT"

# semantic phase (also RULE_ARITY_MISMATCH from the parser)
UNDEFINED_OBJECT = "UNDEFINED_OBJECT"
DUPLICATE_DEFINITION = "DUPLICATE_DEFINITION"
OBJECT_IN_NO_LAYER = "OBJECT_IN_NO_LAYER"
OBJECT_IN_MANY_LAYERS = "OBJECT_IN_MANY_LAYERS"
NO_PLAYER_DEFINED = "NO_PLAYER_DEFINED"
UNKNOWN_GLYPH_IN_LEVEL = "UNKNOWN_GLYPH_IN_LEVEL"
GLYPH_LAYER_CONFLICT = "GLYPH_LAYER_CONFLICT"
RULE_ARITY_MISMATCH = "RULE_ARITY_MISMATCH"
AMBIGUOUS_PROPERTY = "AMBIGUOUS_PROPERTY"
LATE_RULE_MOTION = "LATE_RULE_MOTION"
UNSUPPORTED_FEATURE = "UNSUPPORTED_FEATURE"
EMPTY_LEVELS = "EMPTY_LEVELS"
UNUSED_OBJECT = "UNUSED_OBJECT"
NO_WIN_CONDITION = "NO_WIN_CONDITION"
BACKGROUND_AUTO_LAYER = "BACKGROUND_AUTO_LAYER"

# runtime phase
RULE_LOOP_DETECTED = "RULE_LOOP_DETECTED"
NONDETERMINISTIC_GAME = "NONDETERMINISTIC_GAME"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    phase: Phase
    line: int
    column: int
    code: str
    message: str

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def render(self) -> str:
        text = f"{self.line}:{self.column} [{self.code}] {self.message}"
        if self.severity is Severity.WARNING:
            text += " (warning)"
        return text

    def to_dict(self) -> dict:
        return {
            "severity": self.severity.value,
            "phase": self.phase.value,
            "line": self.line,
            "column": self.column,
            "code": self.code,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(
            Severity(data["severity"]),
            Phase(data["phase"]),
            data["line"],
            data["column"],
            data["code"],
            data["message"],
        )


def error(phase: Phase, line: int, column: int, code: str, message: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, phase, line, column, code, message)


def warning(phase: Phase, line: int, column: int, code: str, message: str) -> Diagnostic:
    return Diagnostic(Severity.WARNING, phase, line, column, code, message)


def sort_key(diag: Diagnostic) -> tuple[int, int]:
    return (diag.line, diag.column)


def render_all(diagnostics) -> str:
    return "\n".join(d.render() for d in diagnostics)


def count_errors(diagnostics, phase: Phase | None = None) -> int:
    return sum(
        1 for d in diagnostics if d.is_error and (phase is None or d.phase is phase)
    )
