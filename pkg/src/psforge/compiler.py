"""Semantic analysis: turn a :class:`GameSpec` into an executable game.

Names are resolved through the legend, objects are assigned to collision
layers, and every rule is expanded into one variant per absolute direction
with relative motions made concrete.  Failures are reported as diagnostics in
the same format the parser uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

from psforge import diagnostics as dg
from psforge.diagnostics import Diagnostic, Phase
from psforge.grammar.tree import (
    DIRECTIONS,
    UNSUPPORTED_MOTIONS,
    Atom,
    CellPattern,
    GameSpec,
    LegendKind,
    LevelGrid,
    LevelMessage,
    LoopMarker,
    Motion,
    RuleDef,
    Sprite,
)

UP, DOWN, LEFT, RIGHT, ACTION = range(5)
DIR_INDEX = {"up": UP, "down": DOWN, "left": LEFT, "right": RIGHT}
DIR_NAMES = ("up", "down", "left", "right", "action")

# (row delta, column delta)
DELTAS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

# matcher motion requirements besides the concrete 0..4 codes
ANY = -1
STATIONARY = -2
MOVING = -3

# rewriter motion actions besides the concrete 0..4 codes
KEEP = -1
CLEAR = -2

_RELATIVE = {
    # rule direction: (>, <, ^, v)
    "up": ("up", "down", "left", "right"),
    "down": ("down", "up", "right", "left"),
    "left": ("left", "right", "down", "up"),
    "right": ("right", "left", "up", "down"),
}

SUPPORTED_PRELUDE = frozenset(
    """title author homepage background_color text_color run_rules_on_level_start
    again_interval norepeat_action""".split()
)
# accepted and ignored: they only affect presentation
COSMETIC_PRELUDE = frozenset(
    """youtube zoomscreen flickscreen color_palette key_repeat_interval noundo
    norestart debug verbose_logging""".split()
)


class CompileError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(d.render() for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class CompiledObject:
    id: int
    name: str
    layer: int
    colors: tuple[str, ...]
    sprite: Optional[Sprite]


@dataclass(frozen=True)
class Entity:
    name: str
    kind: LegendKind  # ALIAS is used for plain objects
    ids: frozenset

    @property
    def single(self) -> Optional[int]:
        return next(iter(self.ids)) if self.kind is LegendKind.ALIAS else None


@dataclass(frozen=True)
class Condition:
    """One LHS atom: some object among ``ids`` present with matching motion."""

    ids: tuple[int, ...]
    motion: int
    negated: bool
    entity: str


@dataclass(frozen=True)
class Placement:
    """One RHS atom: keep the object bound by ``bound`` or create ``object_id``."""

    bound: Optional[int]  # index into the cell's conditions
    object_id: Optional[int]
    motion: int  # concrete code, KEEP or CLEAR


@dataclass(frozen=True)
class CompiledCell:
    ellipsis: bool = False
    conditions: tuple[Condition, ...] = ()
    removals: tuple[int, ...] = ()  # indices of bound conditions to delete
    erase: tuple[int, ...] = ()  # object ids deleted by RHS ``no X``
    placements: tuple[Placement, ...] = ()


@dataclass(frozen=True)
class CompiledRule:
    source_index: int
    direction: int
    late: bool
    random: bool
    brackets: tuple[tuple[CompiledCell, ...], ...]
    commands: tuple[tuple[str, str], ...]
    rewrites: bool
    line: int = 0

    @property
    def direction_name(self) -> str:
        return DIR_NAMES[self.direction]


@dataclass(frozen=True)
class CompiledWin:
    quantifier: str
    subject: frozenset
    target: Optional[frozenset]


@dataclass(frozen=True)
class CompiledLevel:
    width: int
    height: int
    cells: tuple[tuple[int, ...], ...]  # row-major; object ids per cell
    rows: tuple[str, ...]
    line: int = 0


@dataclass(frozen=True)
class CompiledMessage:
    text: str


@dataclass(frozen=True)
class CompiledGame:
    objects: tuple[CompiledObject, ...]
    layers: tuple[tuple[int, ...], ...]
    rules: tuple[CompiledRule, ...]
    win_conditions: tuple[CompiledWin, ...]
    levels: tuple
    flags: Mapping[str, str]
    player_ids: frozenset
    background_id: int
    glyphs: Mapping[str, frozenset] = field(default_factory=dict)
    title: str = ""

    @property
    def has_random_rules(self) -> bool:
        return any(r.random for r in self.rules)

    @property
    def grid_level_indices(self) -> list[int]:
        return [i for i, lv in enumerate(self.levels) if isinstance(lv, CompiledLevel)]

    def flag(self, name: str) -> bool:
        return name in self.flags

    def object_named(self, name: str) -> CompiledObject:
        for obj in self.objects:
            if obj.name.lower() == name.lower():
                return obj
        raise KeyError(name)

    def encode_cell(self, ids) -> Optional[str]:
        """The unique glyph whose expansion is exactly ``ids``, if any."""
        wanted = frozenset(ids)
        hits = [g for g, members in self.glyphs.items() if members == wanted]
        return hits[0] if len(hits) == 1 else None


@dataclass
class CompileResult:
    game: Optional[CompiledGame]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.game is not None


class SymbolTable:
    """Case-insensitive resolution of object and legend names."""

    def __init__(self, spec: GameSpec, diags: list[Diagnostic]):
        self.diags = diags
        self.objects: dict[str, int] = {}
        self.names: list[str] = []
        self.legend: dict[str, tuple] = {}
        self.referenced: set[str] = set()
        for obj in spec.objects:
            if obj.key in self.objects:
                self._dup(obj.line, f"object {obj.name} is defined twice")
                continue
            self.objects[obj.key] = len(self.names)
            self.names.append(obj.name)
        for obj in spec.objects:
            if obj.glyph:
                self._define(obj.glyph, LegendKind.ALIAS, (obj.name,), obj.line)
        for entry in spec.legend:
            self._define(entry.glyph, entry.kind, entry.members, entry.line)
        self._cache: dict[str, Optional[Entity]] = {}

    def _dup(self, line: int, message: str) -> None:
        self.diags.append(dg.error(Phase.SEMANTIC, line, 1, dg.DUPLICATE_DEFINITION, message))

    def _define(self, glyph: str, kind: LegendKind, members, line: int) -> None:
        key = glyph.lower()
        if key in self.objects:
            self._dup(line, f"legend name {glyph} is already an object")
        elif key in self.legend:
            self._dup(line, f"legend name {glyph} is defined twice")
        else:
            self.legend[key] = (glyph, kind, tuple(members), line)

    def resolve(self, name: str, line: int = 0, col: int = 1, _stack=()) -> Optional[Entity]:
        key = name.lower()
        self.referenced.add(key)
        if key in self._cache and not _stack:
            return self._cache[key]
        if key in self.objects:
            ent = Entity(self.names[self.objects[key]], LegendKind.ALIAS,
                         frozenset([self.objects[key]]))
        elif key in self.legend and key not in _stack:
            glyph, kind, members, lline = self.legend[key]
            parts = [self.resolve(m, lline, 1, _stack + (key,)) for m in members]
            if any(p is None for p in parts):
                ent = None
            elif kind is LegendKind.ALIAS:
                ent = Entity(glyph, parts[0].kind, parts[0].ids)
            elif kind is LegendKind.PROPERTY:
                if any(p.kind is LegendKind.AGGREGATE for p in parts):
                    self.diags.append(dg.error(
                        Phase.SEMANTIC, lline, 1, dg.UNSUPPORTED_FEATURE,
                        f"property {glyph} may not contain an 'and' combination"))
                    ent = None
                else:
                    ent = Entity(glyph, LegendKind.PROPERTY,
                                 frozenset().union(*(p.ids for p in parts)))
            else:
                if any(p.kind is LegendKind.PROPERTY for p in parts):
                    self.diags.append(dg.error(
                        Phase.SEMANTIC, lline, 1, dg.UNSUPPORTED_FEATURE,
                        f"aggregate {glyph} may not contain an 'or' property"))
                    ent = None
                else:
                    ent = Entity(glyph, LegendKind.AGGREGATE,
                                 frozenset().union(*(p.ids for p in parts)))
        else:
            self.diags.append(dg.error(Phase.SEMANTIC, line, col, dg.UNDEFINED_OBJECT,
                                       f"{name} is not defined"))
            ent = None
        if not _stack:
            self._cache[key] = ent
        return ent

    def lookup(self, name: str) -> Optional[Entity]:
        """Resolve without reporting; for optional names like Player."""
        key = name.lower()
        if key not in self.objects and key not in self.legend:
            return None
        return self.resolve(name)


def _motion_code(motion: Motion, direction: str, rhs: bool) -> Optional[int]:
    if motion is Motion.NONE:
        return KEEP if rhs else ANY
    if motion is Motion.STATIONARY:
        return CLEAR if rhs else STATIONARY
    if motion is Motion.MOVING:
        return KEEP if rhs else MOVING
    if motion is Motion.ACTION:
        return ACTION
    if motion.value in DIR_INDEX:
        return DIR_INDEX[motion.value]
    rel = {Motion.FORWARD: 0, Motion.BACKWARD: 1, Motion.PERP_UP: 2, Motion.PERP_DOWN: 3}
    if motion in rel:
        return DIR_INDEX[_RELATIVE[direction][rel[motion]]]
    return None


def _rule_directions(rule: RuleDef) -> tuple[str, ...]:
    if rule.direction in DIR_INDEX:
        return (rule.direction,)
    if rule.direction == "horizontal":
        return ("left", "right")
    if rule.direction == "vertical":
        return ("up", "down")
    return DIRECTIONS


def _check_shapes(rule: RuleDef) -> Optional[str]:
    if not rule.rhs:
        return None
    if len(rule.lhs) != len(rule.rhs):
        return f"{len(rule.lhs)} bracket(s) on the left but {len(rule.rhs)} on the right"
    for n, (a, b) in enumerate(zip(rule.lhs, rule.rhs)):
        if len(a.cells) != len(b.cells):
            return f"bracket {n + 1} has {len(a.cells)} cell(s) on the left but {len(b.cells)} on the right"
        if a.ellipsis_positions != b.ellipsis_positions:
            return f"bracket {n + 1} has '...' in different positions"
    return None


def expand_rule(rule: RuleDef, symbols: SymbolTable, source_index: int = 0) -> list[CompiledRule]:
    """Expand one rule into its absolute-direction variants.

    Raises :class:`CompileError` carrying every problem found in the rule.
    """
    diags: list[Diagnostic] = []
    line = rule.line

    def fail(code: str, message: str) -> None:
        diags.append(dg.error(Phase.SEMANTIC, line, 1, code, message))

    shape = _check_shapes(rule)
    if shape:
        raise CompileError([dg.error(Phase.SEMANTIC, line, 1, dg.RULE_ARITY_MISMATCH, shape)])
    if rule.rigid:
        fail(dg.UNSUPPORTED_FEATURE, "'rigid' rules are not supported")

    def entity(atom: Atom) -> Optional[Entity]:
        before = len(symbols.diags)
        ent = symbols.resolve(atom.entity, line)
        # move resolution errors into this rule's report
        diags.extend(symbols.diags[before:])
        del symbols.diags[before:]
        if ent is not None and ent.kind is LegendKind.AGGREGATE:
            fail(dg.UNSUPPORTED_FEATURE,
                 f"{atom.entity} combines objects with 'and' and cannot be used in a rule")
            return None
        if atom.motion in UNSUPPORTED_MOTIONS:
            fail(dg.UNSUPPORTED_FEATURE, f"motion '{atom.motion.value}' is not supported")
        if rule.late and atom.motion not in (Motion.NONE, Motion.STATIONARY):
            fail(dg.LATE_RULE_MOTION, f"late rules cannot use motion '{atom.motion.value}'")
        return ent

    resolved_lhs = [[[(a, entity(a)) for a in c.atoms] for c in b.cells] for b in rule.lhs]
    resolved_rhs = [[[(a, entity(a)) for a in c.atoms] for c in b.cells] for b in rule.rhs]
    for b, bracket in enumerate(resolved_rhs):
        for c, cell in enumerate(bracket):
            lhs_names = {
                a.entity.lower() for a, _ in resolved_lhs[b][c] if not a.negated
            }
            for atom, ent in cell:
                if atom.negated or ent is None:
                    continue
                if ent.kind is LegendKind.PROPERTY and atom.entity.lower() not in lhs_names:
                    fail(dg.AMBIGUOUS_PROPERTY,
                         f"{atom.entity} on the right side is a property that does not "
                         "appear in the same cell on the left, so the object to create "
                         "is ambiguous")
                if atom.motion in (Motion.MOVING,) and atom.entity.lower() not in lhs_names:
                    fail(dg.UNSUPPORTED_FEATURE,
                         f"'moving {atom.entity}' on the right side needs a matching left side")
    if diags:
        raise CompileError(diags)

    commands = tuple((c.name, c.text) for c in rule.commands)
    variants = []
    for dname in _rule_directions(rule):
        brackets = []
        for b, bracket in enumerate(resolved_lhs):
            cells = []
            for c, lcell in enumerate(bracket):
                if rule.lhs[b].cells[c].ellipsis:
                    cells.append(CompiledCell(ellipsis=True))
                    continue
                rcell = resolved_rhs[b][c] if rule.rhs else None
                cells.append(_compile_cell(lcell, rcell, dname))
            brackets.append(tuple(cells))
        variants.append(CompiledRule(
            source_index=source_index,
            direction=DIR_INDEX[dname],
            late=rule.late,
            random=rule.random,
            brackets=tuple(brackets),
            commands=commands,
            rewrites=bool(rule.rhs),
            line=line,
        ))
    return variants


def _compile_cell(lcell, rcell, dname: str) -> CompiledCell:
    conditions = []
    for atom, ent in lcell:
        conditions.append(Condition(
            ids=tuple(sorted(ent.ids)),
            motion=_motion_code(atom.motion, dname, rhs=False),
            negated=atom.negated,
            entity=atom.entity.lower(),
        ))
    if rcell is None:
        return CompiledCell(conditions=tuple(conditions))
    bound = {
        c.entity: i for i, c in enumerate(conditions) if not c.negated
    }
    rhs_names = {a.entity.lower() for a, _ in rcell if not a.negated}
    removals = tuple(i for name, i in bound.items() if name not in rhs_names)
    erase = []
    placements = []
    for atom, ent in rcell:
        if atom.negated:
            erase.extend(sorted(ent.ids))
            continue
        name = atom.entity.lower()
        motion = _motion_code(atom.motion, dname, rhs=True)
        if name in bound:
            if motion == KEEP and conditions[bound[name]].motion not in (ANY, MOVING):
                # `[ > X ] -> [ X ]` stops X
                motion = CLEAR
            placements.append(Placement(bound[name], None, motion))
        else:
            placements.append(Placement(None, ent.single, motion))
    return CompiledCell(
        conditions=tuple(conditions),
        removals=removals,
        erase=tuple(erase),
        placements=tuple(placements),
    )


def compile_game(spec: GameSpec) -> CompileResult:
    diags: list[Diagnostic] = []

    def err(line: int, code: str, message: str, col: int = 1) -> None:
        diags.append(dg.error(Phase.SEMANTIC, line, col, code, message))

    def warn(line: int, code: str, message: str) -> None:
        diags.append(dg.warning(Phase.SEMANTIC, line, 1, code, message))

    flags = {}
    for item in spec.prelude:
        if item.key in SUPPORTED_PRELUDE:
            flags[item.key] = item.value
        elif item.key not in COSMETIC_PRELUDE:
            err(item.line, dg.UNSUPPORTED_FEATURE, f"metadata '{item.key}' is not supported")

    symbols = SymbolTable(spec, diags)
    nobj = len(symbols.names)
    defs = {o.key: o for o in reversed(spec.objects)}

    # collision layers
    layer_of: dict[int, int] = {}
    layers: list[list[int]] = []
    reported_many: set[int] = set()
    for n, names in enumerate(spec.collision_layers):
        line = spec.layer_lines[n] if n < len(spec.layer_lines) else 0
        members: list[int] = []
        for name in names:
            ent = symbols.resolve(name, line)
            if ent is None:
                continue
            for oid in sorted(ent.ids):
                if oid in layer_of and layer_of[oid] != len(layers):
                    if oid not in reported_many:
                        err(line, dg.OBJECT_IN_MANY_LAYERS,
                            f"{symbols.names[oid]} appears in more than one collision layer")
                        reported_many.add(oid)
                    continue
                if oid not in members:
                    members.append(oid)
                    layer_of[oid] = len(layers)
        if members:
            layers.append(members)
    # naming an object in a layer does not count as using it
    symbols.referenced.clear()

    background = symbols.lookup("background")
    background_id = -1
    if background is None:
        err(0, dg.UNDEFINED_OBJECT, "an object named Background is required")
    elif background.kind is not LegendKind.ALIAS:
        err(0, dg.UNSUPPORTED_FEATURE, "Background must name a single object")
    else:
        background_id = background.single
        if background_id not in layer_of:
            warn(defs["background"].line if "background" in defs else 0,
                 dg.BACKGROUND_AUTO_LAYER,
                 "Background is in no collision layer; placing it in the bottom layer")
            layers.insert(0, [background_id])
            layer_of = {o: i for i, lay in enumerate(layers) for o in lay}

    for oid, name in enumerate(symbols.names):
        if oid not in layer_of:
            line = defs[name.lower()].line if name.lower() in defs else 0
            err(line, dg.OBJECT_IN_NO_LAYER, f"{name} is not in any collision layer")

    player = symbols.lookup("player")
    player_ids = frozenset()
    if player is None:
        err(0, dg.NO_PLAYER_DEFINED, "no object or legend entry named Player")
    elif player.kind is LegendKind.AGGREGATE:
        err(0, dg.UNSUPPORTED_FEATURE, "Player cannot be an 'and' combination")
    else:
        player_ids = player.ids

    # rules
    compiled_rules: list[CompiledRule] = []
    for index, item in enumerate(spec.rules):
        if isinstance(item, LoopMarker):
            err(item.line, dg.UNSUPPORTED_FEATURE, f"'{item.kind}' is not supported")
            continue
        try:
            compiled_rules.extend(expand_rule(item, symbols, index))
        except CompileError as exc:
            diags.extend(exc.diagnostics)

    # win conditions
    wins = []
    for wc in spec.win_conditions:
        subject = symbols.resolve(wc.subject, wc.line)
        target = symbols.resolve(wc.target, wc.line) if wc.target else None
        if subject is None or (wc.target and target is None):
            continue
        if LegendKind.AGGREGATE in (subject.kind, target.kind if target else None):
            err(wc.line, dg.UNSUPPORTED_FEATURE,
                "win conditions cannot use 'and' combinations")
            continue
        wins.append(CompiledWin(wc.quantifier, subject.ids, target.ids if target else None))
    if not spec.win_conditions:
        warn(0, dg.NO_WIN_CONDITION, "game has no win conditions")

    # levels
    glyph_table: dict[str, frozenset] = {}
    originals = {k: v[0] for k, v in symbols.legend.items()}
    originals.update({k: symbols.names[i] for k, i in symbols.objects.items()})
    for key, original in originals.items():
        if len(key) == 1:
            ent = symbols.lookup(key)
            if ent is not None:
                glyph_table[original] = ent
    levels = []
    for entry in spec.levels:
        if isinstance(entry, LevelMessage):
            levels.append(CompiledMessage(entry.text))
            continue
        levels.append(_compile_level(entry, glyph_table, layer_of, background_id,
                                     symbols, err))
    if not any(isinstance(lv, CompiledLevel) for lv in levels):
        err(0, dg.EMPTY_LEVELS, "game has no playable levels")

    # unused objects
    used = set(symbols.referenced)
    for entry in spec.levels:
        if isinstance(entry, LevelGrid):
            used.update(ch.lower() for row in entry.rows for ch in row)
    for key, (_glyph, _kind, members, _line) in symbols.legend.items():
        if key in used:
            used.update(m.lower() for m in members)
    for oid, name in enumerate(symbols.names):
        key = name.lower()
        glyph = defs[key].glyph.lower() if key in defs and defs[key].glyph else None
        mentioned = key in used or (glyph in used if glyph else False) or any(
            key in (m.lower() for m in members) for members in
            (e.members for e in spec.legend)
        )
        if not mentioned and oid not in player_ids and oid != background_id:
            warn(defs[key].line if key in defs else 0, dg.UNUSED_OBJECT,
                 f"{name} is defined but never used")

    # a line of 0 means "whole program"; anchor such diagnostics at 1:1
    diags = [
        d if d.line >= 1 else Diagnostic(d.severity, d.phase, 1, 1, d.code, d.message)
        for d in diags
    ]
    diags.sort(key=dg.sort_key)
    if any(d.is_error for d in diags):
        return CompileResult(None, diags)

    objects = tuple(
        CompiledObject(oid, name, layer_of[oid], defs[name.lower()].colors,
                       defs[name.lower()].sprite)
        for oid, name in enumerate(symbols.names)
    )
    assert len(objects) == nobj
    game = CompiledGame(
        objects=objects,
        layers=tuple(tuple(layer) for layer in layers),
        rules=tuple(compiled_rules),
        win_conditions=tuple(wins),
        levels=tuple(levels),
        flags=MappingProxyType(dict(flags)),
        player_ids=player_ids,
        background_id=background_id,
        glyphs=MappingProxyType({
            g: _with_background(e.ids, layer_of, background_id)
            for g, e in glyph_table.items() if e.kind is not LegendKind.PROPERTY
        }),
        title=spec.title,
    )
    return CompileResult(game, diags)


def _with_background(ids, layer_of, background_id) -> frozenset:
    ids = set(ids)
    if background_id >= 0 and not any(layer_of.get(o) == layer_of.get(background_id)
                                      for o in ids):
        ids.add(background_id)
    return frozenset(ids)


def _compile_level(entry: LevelGrid, glyphs, layer_of, background_id, symbols, err):
    cells = []
    reported = set()
    glyphs_folded = {g.lower(): e for g, e in glyphs.items()}
    for r, row in enumerate(entry.rows):
        for ch in row:
            ent = glyphs.get(ch, glyphs_folded.get(ch.lower()))
            if ent is None or ent.kind is LegendKind.PROPERTY:
                if ch not in reported:
                    reported.add(ch)
                    why = "is not defined in the legend" if ent is None else (
                        "maps to an 'or' property, which is ambiguous in a level")
                    err(entry.line + r, dg.UNKNOWN_GLYPH_IN_LEVEL, f"glyph {ch!r} {why}")
                cells.append(())
                continue
            seen_layers: dict[int, int] = {}
            for oid in ent.ids:
                lay = layer_of.get(oid)
                if lay in seen_layers and (ch, lay) not in reported:
                    reported.add((ch, lay))
                    err(entry.line + r, dg.GLYPH_LAYER_CONFLICT,
                        f"glyph {ch!r} puts {symbols.names[seen_layers[lay]]} and "
                        f"{symbols.names[oid]} in the same collision layer")
                seen_layers[lay] = oid
            cells.append(tuple(sorted(_with_background(ent.ids, layer_of, background_id))))
    width = len(entry.rows[0]) if entry.rows else 0
    return CompiledLevel(width, len(entry.rows), tuple(cells), entry.rows, entry.line)


def compile_source(text) -> tuple[Optional[CompiledGame], list[Diagnostic]]:
    """Parse and compile in one go; returns the game (or None) and all diagnostics."""
    from psforge.grammar import parse_game

    parsed = parse_game(text)
    if parsed.spec is None:
        return None, parsed.diagnostics
    result = compile_game(parsed.spec)
    return result.game, parsed.diagnostics + result.diagnostics


# the public operation name
compile = compile_game  # noqa: A001
