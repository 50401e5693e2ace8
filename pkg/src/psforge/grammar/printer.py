"""Canonical source printer; the inverse of :func:`parse_game` up to layout."""

from __future__ import annotations

from psforge.grammar.tree import (
    BracketPattern,
    CellPattern,
    GameSpec,
    LegendKind,
    LevelMessage,
    LoopMarker,
    Motion,
    ObjectDef,
    RuleDef,
    SourceText,
)


def _header(name: str) -> list[str]:
    bar = "=" * max(8, len(name) + 2)
    return [bar, name.upper(), bar, ""]


def _object_lines(obj: ObjectDef) -> list[str]:
    lines = [obj.name + (f" {obj.glyph}" if obj.glyph else ""), " ".join(obj.colors)]
    if obj.sprite is not None:
        for row in obj.sprite.rows:
            lines.append("".join("." if p is None else str(p) for p in row))
    lines.append("")
    return lines


def _cell(cell: CellPattern) -> str:
    if cell.ellipsis:
        return "..."
    parts = []
    for atom in cell.atoms:
        if atom.negated:
            parts.append("no")
        if atom.motion is not Motion.NONE:
            parts.append(atom.motion.value)
        parts.append(atom.entity)
    return " ".join(parts)


def _bracket(b: BracketPattern) -> str:
    return "[ " + " | ".join(_cell(c) for c in b.cells) + " ]"


def format_rule(rule: RuleDef) -> str:
    parts = []
    if rule.group_continuation:
        parts.append("+")
    if rule.late:
        parts.append("late")
    if rule.random:
        parts.append("random")
    if rule.rigid:
        parts.append("rigid")
    if rule.direction:
        parts.append(rule.direction)
    parts.extend(_bracket(b) for b in rule.lhs)
    parts.append("->")
    parts.extend(_bracket(b) for b in rule.rhs)
    for cmd in rule.commands:
        parts.append(f"message {cmd.text}" if cmd.name == "message" else cmd.name)
    return " ".join(parts)


def print_game(spec: GameSpec) -> SourceText:
    out: list[str] = []
    for item in spec.prelude:
        out.append(f"{item.key} {item.value}".rstrip())
    if spec.prelude:
        out.append("")

    out += _header("objects")
    for obj in spec.objects:
        out += _object_lines(obj)

    out += _header("legend")
    for entry in spec.legend:
        joiner = {LegendKind.AGGREGATE: " and ", LegendKind.PROPERTY: " or "}.get(entry.kind, "")
        out.append(f"{entry.glyph} = {joiner.join(entry.members)}")
    out.append("")

    out += _header("sounds")
    out += list(spec.sounds)
    out.append("")

    out += _header("collisionlayers")
    out += [", ".join(layer) for layer in spec.collision_layers]
    out.append("")

    out += _header("rules")
    for rule in spec.rules:
        out.append(rule.kind if isinstance(rule, LoopMarker) else format_rule(rule))
    out.append("")

    out += _header("winconditions")
    for wc in spec.win_conditions:
        text = f"{wc.quantifier} {wc.subject}"
        if wc.target:
            text += f" on {wc.target}"
        out.append(text)
    out.append("")

    out += _header("levels")
    for entry in spec.levels:
        if isinstance(entry, LevelMessage):
            out.append(f"message {entry.text}".rstrip())
        else:
            out += list(entry.rows)
        out.append("")

    return SourceText("\n".join(out), origin="printed")
