"""Turn simulation for compiled games.

A state stores one bitboard per object (bit ``row * width + col`` set where
the object sits).  Collision layers are implicit: the compiler guarantees at
most one object of a layer per cell, and every rewrite preserves that.
Pending movements exist only inside a turn and are stored per layer and
direction as bitboards too.
"""

from __future__ import annotations

import hashlib
import marshal
from dataclasses import dataclass
from enum import Enum
from itertools import compress, product
from typing import Iterator, NamedTuple, Optional

from psforge import diagnostics as dg
from psforge.compiler import (
    ACTION,
    ANY,
    CLEAR,
    DOWN,
    KEEP,
    LEFT,
    MOVING,
    RIGHT,
    STATIONARY,
    UP,
    CompiledGame,
    CompiledLevel,
    DIR_NAMES,
    CompiledRule,
)
from psforge.diagnostics import Diagnostic, Phase

RULE_APPLICATION_CAP = 10_000
AGAIN_CAP = 200

_MASK64 = (1 << 64) - 1
_blake2b = hashlib.blake2b
_marshal_dumps = marshal.dumps


class Action(Enum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    ACT = 4

    @property
    def letter(self) -> str:
        return "UDLRX"[self.value]

    @classmethod
    def from_letter(cls, letter: str) -> "Action":
        return cls("UDLRX".index(letter.upper()))


ACTIONS = tuple(Action)


def parse_actions(text: str) -> list[Action]:
    return [Action.from_letter(ch) for ch in text if not ch.isspace()]


def format_actions(actions) -> str:
    return "".join(a.letter for a in actions)


class Status(str, Enum):
    IN_PROGRESS = "in_progress"
    WON = "won"


class GameState(NamedTuple):
    """One level position between turns (a plain value; cheap to build)."""

    width: int
    height: int
    objects: tuple  # bitboard per object id
    level_index: int = 0
    status: Status = Status.IN_PROGRESS
    checkpoint: Optional[tuple] = None
    rng_seed: int = 0
    # per layer, five bitboards (up, down, left, right, action); empty between turns
    motions: tuple = ()

    def _bit(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError((row, col))
        return 1 << (row * self.width + col)

    def cell_objects(self, row: int, col: int) -> tuple[int, ...]:
        bit = self._bit(row, col)
        return tuple(oid for oid, bb in enumerate(self.objects) if bb & bit)

    def positions(self, object_id: int) -> list[tuple[int, int]]:
        return [divmod(i, self.width) for i in _bits(self.objects[object_id])]

    def slot(self, game: CompiledGame, row: int, col: int, layer: int) -> Optional[int]:
        bit = self._bit(row, col)
        for oid in game.layers[layer]:
            if self.objects[oid] & bit:
                return oid
        return None

    def motion_at(self, row: int, col: int, layer: int) -> Optional[str]:
        if not self.motions:
            return None
        bit = self._bit(row, col)
        for d, bb in enumerate(self.motions[layer]):
            if bb & bit:
                return DIR_NAMES[d]
        return None


@dataclass(frozen=True)
class Event:
    kind: str  # won, cancelled, message, checkpoint_set, restarted, again_ran
    text: str = ""
    count: int = 0


class TurnOutcome(NamedTuple):
    state: GameState
    changed: bool
    events: tuple = ()
    diagnostics: tuple = ()

    @property
    def won(self) -> bool:
        return self.state.status is Status.WON

    @property
    def failed(self) -> bool:
        return bool(self.diagnostics)


class EngineError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(diagnostic.render())
        self.diagnostic = diagnostic


def _bits(bb: int) -> Iterator[int]:
    while bb:
        low = bb & -bb
        yield low.bit_length() - 1
        bb ^= low


def _splitmix(seed: int) -> tuple[int, int]:
    seed = (seed + 0x9E3779B97F4A7C15) & _MASK64
    z = seed
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return seed, z ^ (z >> 31)


class _Geometry:
    """Shift masks and neighbour tables for one grid size."""

    __slots__ = ("width", "height", "full", "keep_right", "keep_left", "nbr", "step",
                 "matchers")

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.full = full = (1 << (width * height)) - 1
        # keep_right[s]: cells whose column survives a shift of s to the right
        self.keep_right = []
        self.keep_left = []
        for s in range(width + 1):
            right = left = 0
            for r in range(height):
                base = r * width
                for c in range(width - s):
                    right |= 1 << (base + c)
                    left |= 1 << (base + c + s)
            self.keep_right.append(right & full)
            self.keep_left.append(left & full)
        cells = range(width * height)
        self.nbr = tuple(
            tuple(self._neighbour(p, d) for p in cells) for d in (UP, DOWN, LEFT, RIGHT)
        )
        self.step = (-width, width, -1, 1)
        self.matchers: dict = {}

    def scanner(self, plans):
        try:
            return self.matchers[plans]
        except KeyError:
            fn = self.matchers[plans] = _generate_scanner(plans, self)
            return fn

    def matcher(self, plan: "_RulePlan"):
        """Specialised anchor function for a single plain bracket, or None."""
        try:
            return self.matchers[plan]
        except KeyError:
            fn = self.matchers[plan] = _generate_matcher(plan, self)
            return fn

    def _neighbour(self, pos: int, direction: int) -> int:
        r, c = divmod(pos, self.width)
        if direction == UP:
            r -= 1
        elif direction == DOWN:
            r += 1
        elif direction == LEFT:
            c -= 1
        else:
            c += 1
        if 0 <= r < self.height and 0 <= c < self.width:
            return r * self.width + c
        return -1

    def shift(self, bb: int, direction: int, steps: int = 1) -> int:
        """Move every set bit ``steps`` cells in ``direction``, dropping off-grid bits."""
        if direction == RIGHT:
            if steps >= self.width:
                return 0
            return (bb & self.keep_right[steps]) << steps
        if direction == LEFT:
            if steps >= self.width:
                return 0
            return (bb & self.keep_left[steps]) >> steps
        if direction == DOWN:
            return (bb << (self.width * steps)) & self.full
        return bb >> (self.width * steps)

    def neighbour(self, pos: int, direction: int) -> int:
        """Index of the adjacent cell, or -1 off-grid."""
        return self.nbr[direction][pos]


_OPPOSITE = (DOWN, UP, RIGHT, LEFT)


class _RulePlan:
    """A compiled rule plus the lookups the matcher needs on every turn.

    ``need_mov`` lists groups of motion-bitboard indices; each group must have
    at least one non-empty board for the rule to possibly match.  ``need_obj``
    does the same for object presence.  Both are cheap pre-filters only.
    """

    __slots__ = ("rule", "direction", "brackets", "need_mov", "need_obj", "single")

    def __init__(self, rule: CompiledRule, layer_of: list[int]):
        self.rule = rule
        self.direction = rule.direction
        brackets = []
        need_mov = set()
        need_obj = set()
        for cells in rule.brackets:
            plans = []
            plain = True
            for cell in cells:
                if cell.ellipsis:
                    plain = False
                    plans.append((cell, ()))
                    continue
                conds = []
                for c in cell.conditions:
                    bases = tuple(5 * layer_of[o] for o in c.ids)
                    conds.append((c.ids, c.motion, c.negated, bases))
                    if c.negated:
                        continue
                    need_obj.add(tuple(sorted(c.ids)))
                    if c.motion >= 0:
                        need_mov.add(tuple(sorted({b + c.motion for b in bases})))
                plans.append((cell, tuple(conds)))
            brackets.append((plain, tuple(plans)))
        self.brackets = tuple(brackets)
        self.need_mov = tuple(sorted(need_mov))
        self.need_obj = tuple(sorted(need_obj))
        self.single = len(brackets) == 1


def _needs_direction(rule) -> bool:
    return any(
        not cond.negated and 0 <= cond.motion <= 3
        for bracket in rule.brackets for cell in bracket for cond in cell.conditions
    )


class _Runtime:
    """Per-game lookup tables, built once and cached on the game object."""

    def __init__(self, game: CompiledGame):
        self.game = game
        self.nobj = len(game.objects)
        self.nlayers = len(game.layers)
        self.layer_of = [o.layer for o in game.objects]
        self.layer_members = [tuple(layer) for layer in game.layers]
        self.early = tuple(_RulePlan(r, self.layer_of) for r in game.rules if not r.late)
        self.late = tuple(_RulePlan(r, self.layer_of) for r in game.rules if r.late)
        self.players = tuple(sorted(game.player_ids))
        self.player_bases = tuple(5 * self.layer_of[o] for o in self.players)
        self.zero_mov = (0,) * (5 * self.nlayers)
        # one entry per motion bitboard, aligned with the board's flat list
        self.move_slots = tuple(
            (5 * L + d, L, d) for L in range(self.nlayers) for d in range(5)
        )
        self.wins = tuple(
            (wc.quantifier, tuple(wc.subject),
             None if wc.target is None else tuple(wc.target))
            for wc in game.win_conditions
        )
        self.geometries: dict[tuple[int, int], _Geometry] = {}
        self.won = self._generate_win_check()
        # When every rule needs a directional mover to match, no rule can fire
        # on an Act turn (movement is cleared between turns), so Act never
        # changes the board and search may skip it.
        self.act_inert = all(_needs_direction(r) for r in game.rules)

    def geometry(self, width: int, height: int) -> _Geometry:
        key = (width, height)
        geo = self.geometries.get(key)
        if geo is None:
            geo = self.geometries[key] = _Geometry(width, height)
        return geo

    def _generate_win_check(self):
        """Build ``won(objects, full)`` as a single generated boolean expression."""
        if not self.wins:
            return lambda objs, full: False

        def union(ids) -> str:
            return "(" + " | ".join(f"o[{oid}]" for oid in ids) + ")" if ids else "0"

        terms = []
        for quantifier, subject_ids, target_ids in self.wins:
            subject = union(subject_ids)
            if target_ids is None:
                if quantifier == "all":
                    terms.append(f"{subject} == full")
                    continue
                witnesses = subject
            else:
                target = union(target_ids)
                if quantifier == "all":
                    terms.append(f"not ({subject} & ~{target})")
                    continue
                witnesses = f"({subject} & {target})"
            terms.append(f"bool({witnesses})" if quantifier == "some" else f"not {witnesses}")
        return _exec(["def won(o, full):", "    return " + " and ".join(terms)], "won")


def _cell_expr(conds, full: str) -> str:
    positive = []
    negative = []
    for ids, motion, negated, bases in conds:
        terms = []
        for oid, base in zip(ids, bases):
            if motion == ANY:
                terms.append(f"o[{oid}]")
            elif motion >= 0:
                terms.append(f"(o[{oid}] & m[{base + motion}])")
            else:
                moving = "|".join(f"m[{base + k}]" for k in range(5))
                if motion == MOVING:
                    terms.append(f"(o[{oid}] & ({moving}))")
                else:
                    terms.append(f"(o[{oid}] & ~({moving}))")
        present = "(" + " | ".join(terms) + ")" if terms else "0"
        (negative if negated else positive).append(present)
    parts = positive or [full]
    parts += [f"~{p}" for p in negative]
    return " & ".join(parts)


def _shift_expr(expr: str, direction: int, steps: int, geo: _Geometry) -> str:
    if direction == RIGHT:
        if steps >= geo.width:
            return "0"
        return f"(({expr}) & {geo.keep_right[steps]}) << {steps}"
    if direction == LEFT:
        if steps >= geo.width:
            return "0"
        return f"(({expr}) & {geo.keep_left[steps]}) >> {steps}"
    if direction == DOWN:
        return f"(({expr}) << {geo.width * steps}) & {geo.full}"
    return f"({expr}) >> {geo.width * steps}"


def _bracket_expr(plan: _RulePlan, geo: _Geometry) -> Optional[str]:
    if not plan.single or not plan.brackets[0][0]:
        return None
    cells = plan.brackets[0][1]
    back = _OPPOSITE[plan.direction]
    full = str(geo.full)
    parts = [f"({_cell_expr(cells[0][1], full)})"]
    for j in range(1, len(cells)):
        parts.append(f"({_shift_expr(_cell_expr(cells[j][1], full), back, j, geo)})")
    return " & ".join(parts)


def _exec(lines: list[str], name: str):
    namespace: dict = {}
    exec(compile("\n".join(lines), "<psforge-generated>", "exec"), namespace)
    return namespace[name]


def _generate_matcher(plan: _RulePlan, geo: _Geometry):
    """Compile the bracket of a single-bracket, ellipsis-free rule to bit operations.

    The returned function maps (objects, motions) to the bitboard of anchor
    cells, which is exactly what the interpreted ``bracket_matches`` computes.
    """
    expr = _bracket_expr(plan, geo)
    if expr is None:
        return None
    return _exec(["def match(o, m):", f"    return {expr}"], "match")


def _generate_scanner(plans, geo: _Geometry):
    """One function answering "which rule, from index i on, might fire?".

    Generated rules are tested exactly; the rest are reported as candidates and
    left to the interpreter.
    """
    lines = ["def scan(o, m, i):"]
    for k, plan in enumerate(plans):
        expr = _bracket_expr(plan, geo)
        if expr is None:
            lines.append(f"    if i <= {k}:")
            lines.append(f"        return {k}")
        else:
            lines.append(f"    if i <= {k} and {expr}:")
            lines.append(f"        return {k}")
    lines.append("    return -1")
    return _exec(lines, "scan")

def runtime(game: CompiledGame) -> _Runtime:
    rt = game.__dict__.get("_runtime")
    if rt is None:
        rt = _Runtime(game)
        object.__setattr__(game, "_runtime", rt)
    return rt


class _Board:
    """Mutable working copy of a state for the duration of one turn."""

    __slots__ = ("rt", "geo", "objs", "mov", "rng")

    def __init__(self, rt: _Runtime, state: GameState):
        self.rt = rt
        self.geo = rt.geometry(state.width, state.height)
        self.objs = list(state.objects)
        if state.motions:
            self.mov = [bb for layer in state.motions for bb in layer]
        else:
            self.mov = [0] * (5 * rt.nlayers)
        self.rng = state.rng_seed

    def motions_tuple(self) -> tuple[tuple[int, ...], ...]:
        if not any(self.mov):
            return ()
        m = self.mov
        return tuple(tuple(m[5 * L:5 * L + 5]) for L in range(self.rt.nlayers))

    def clear_motions(self) -> None:
        self.mov[:] = self.rt.zero_mov

    def random_below(self, n: int) -> int:
        self.rng, value = _splitmix(self.rng)
        return value % n

    # -- matching --------------------------------------------------------
    def motion_ok(self, base: int, req: int) -> int:
        m = self.mov
        if req >= 0:
            return m[base + req]
        moving = m[base] | m[base + 1] | m[base + 2] | m[base + 3] | m[base + 4]
        if req == MOVING:
            return moving
        return self.geo.full & ~moving  # STATIONARY

    def cell_mask(self, conds) -> int:
        mask = self.geo.full
        objs = self.objs
        for ids, motion, negated, bases in conds:
            present = 0
            if motion == ANY:
                for oid in ids:
                    present |= objs[oid]
            else:
                for oid, base in zip(ids, bases):
                    bb = objs[oid]
                    if bb:
                        present |= bb & self.motion_ok(base, motion)
            if negated:
                mask &= ~present
            else:
                mask &= present
            if not mask:
                return 0
        return mask

    def bracket_matches(self, plain: bool, cells, direction: int) -> list:
        """All matches of one bracket as tuples of cell indices (-1 for ellipses)."""
        if not plain:
            return self._ellipsis_matches(cells, direction)
        anchors = self.cell_mask(cells[0][1])
        if not anchors:
            return ()
        n = len(cells)
        if n > 1:
            geo = self.geo
            back = _OPPOSITE[direction]
            for j in range(1, n):
                anchors &= geo.shift(self.cell_mask(cells[j][1]), back, j)
                if not anchors:
                    return ()
            step = geo.step[direction]
            return [tuple(p + k * step for k in range(n)) for p in _bits(anchors)]
        return [(p,) for p in _bits(anchors)]

    def _ellipsis_matches(self, cells, direction: int) -> list[tuple[int, ...]]:
        geo = self.geo
        nbr = geo.nbr[direction]
        segments: list[list[int]] = [[]]
        for i, (cell, _) in enumerate(cells):
            if cell.ellipsis:
                segments.append([])
            else:
                segments[-1].append(i)
        back = _OPPOSITE[direction]
        seg_masks = []
        for seg in segments:
            mask = self.cell_mask(cells[seg[0]][1])
            for j in range(1, len(seg)):
                mask &= geo.shift(self.cell_mask(cells[seg[j]][1]), back, j)
            if not mask:
                return []
            seg_masks.append(mask)
        results: list[tuple[int, ...]] = []

        def place(s: int, first: int, acc: list[int]) -> list[int]:
            placed = list(acc)
            p = first
            for k in range(len(segments[s])):
                placed.append(p)
                if k + 1 < len(segments[s]):
                    p = nbr[p]
            return placed

        def walk(s: int, pos: int, acc: list[int]) -> None:
            # pos: earliest cell where segment s may start
            cur = pos
            while cur >= 0:
                if seg_masks[s] >> cur & 1:
                    placed = place(s, cur, acc)
                    nxt = nbr[placed[-1]]
                    if s + 1 == len(segments):
                        results.append(tuple(placed))
                    elif nxt >= 0:
                        walk(s + 1, nxt, placed + [-1])
                cur = nbr[cur]

        for anchor in _bits(seg_masks[0]):
            acc = place(0, anchor, [])
            nxt = nbr[acc[-1]]
            if nxt >= 0:
                walk(1, nxt, acc + [-1])
        return results

    def bind(self, conds, pos: int) -> list[int]:
        bit = 1 << pos
        bound = []
        objs = self.objs
        for ids, motion, negated, bases in conds:
            chosen = -1
            if not negated:
                for oid, base in zip(ids, bases):
                    if objs[oid] & bit and (
                        motion == ANY or self.motion_ok(base, motion) & bit
                    ):
                        chosen = oid
                        break
            bound.append(chosen)
        return bound

    # -- rewriting -------------------------------------------------------
    def _clear_layer_motion(self, layer: int, bit: int) -> None:
        base = 5 * layer
        m = self.mov
        keep = ~bit
        for d in range(base, base + 5):
            if m[d] & bit:
                m[d] &= keep

    def _remove(self, oid: int, bit: int) -> None:
        if self.objs[oid] & bit:
            self.objs[oid] ^= bit
            self._clear_layer_motion(self.rt.layer_of[oid], bit)

    def rewrite(self, plan: _RulePlan, match) -> bool:
        objs = self.objs
        mov = self.mov
        before_objs = list(objs)
        before_mov = list(mov)
        bindings = []
        for (_, cells), positions in zip(plan.brackets, match):
            for (cell, conds), pos in zip(cells, positions):
                if not cell.ellipsis:
                    bindings.append(self.bind(conds, pos))
        k = 0
        layer_of = self.rt.layer_of
        members = self.rt.layer_members
        for (_, cells), positions in zip(plan.brackets, match):
            for (cell, _), pos in zip(cells, positions):
                if cell.ellipsis:
                    continue
                bound = bindings[k]
                k += 1
                bit = 1 << pos
                for i in cell.removals:
                    self._remove(bound[i], bit)
                for oid in cell.erase:
                    self._remove(oid, bit)
                for pl in cell.placements:
                    oid = bound[pl.bound] if pl.bound is not None else pl.object_id
                    layer = layer_of[oid]
                    if not objs[oid] & bit:
                        for other in members[layer]:
                            if objs[other] & bit:
                                objs[other] ^= bit
                        self._clear_layer_motion(layer, bit)
                        objs[oid] |= bit
                    if pl.motion >= 0:
                        self._clear_layer_motion(layer, bit)
                        mov[5 * layer + pl.motion] |= bit
                    elif pl.motion == CLEAR:
                        self._clear_layer_motion(layer, bit)
        return objs != before_objs or mov != before_mov

    def snapshot(self):
        return list(self.objs), list(self.mov)

    def restore(self, snap) -> None:
        self.objs[:] = snap[0]
        self.mov[:] = snap[1]

    def could_match(self, plan: _RulePlan) -> bool:
        mov = self.mov
        for group in plan.need_mov:
            for k in group:
                if mov[k]:
                    break
            else:
                return False
        objs = self.objs
        for group in plan.need_obj:
            for oid in group:
                if objs[oid]:
                    break
            else:
                return False
        return True

    def rule_matches(self, plan: _RulePlan) -> list:
        direction = plan.direction
        if plan.single:
            plain, cells = plan.brackets[0]
            fn = self.geo.matcher(plan)
            if fn is None:
                return [(m,) for m in self.bracket_matches(plain, cells, direction)]
            anchors = fn(self.objs, self.mov)
            if not anchors:
                return ()
            n = len(cells)
            step = self.geo.step[direction]
            return [(tuple(p + k * step for k in range(n)),) for p in _bits(anchors)]
        per_bracket = []
        for plain, cells in plan.brackets:
            found = self.bracket_matches(plain, cells, direction)
            if not found:
                return []
            per_bracket.append(found)
        return list(product(*per_bracket))

    def apply_rule(self, plan: _RulePlan, commands: list) -> bool:
        """Apply the first state-changing match of the rule; queue its commands."""
        matches = self.rule_matches(plan)
        if not matches:
            return False
        rule = plan.rule
        for cmd in rule.commands:
            if cmd not in commands:
                commands.append(cmd)
        if not rule.rewrites:
            return False
        if rule.random:
            snap = self.snapshot()
            eligible = []
            for match in matches:
                if self.rewrite(plan, match):
                    eligible.append(match)
                self.restore(snap)
            if not eligible:
                return False
            return self.rewrite(plan, eligible[self.random_below(len(eligible))])
        for match in matches:
            if self.rewrite(plan, match):
                return True
        return False

    def run_rules(self, plans, commands: list, scan=None) -> None:
        if not plans:
            return
        if scan is None:
            scan = self.geo.scanner(plans)
        objs = self.objs
        mov = self.mov
        applications = 0
        i = scan(objs, mov, 0)
        while i >= 0:
            plan = plans[i]
            if self.could_match(plan) and self.apply_rule(plan, commands):
                applications += 1
                if applications > RULE_APPLICATION_CAP:
                    raise EngineError(dg.error(
                        Phase.RUNTIME, plan.rule.line or 1, 1, dg.RULE_LOOP_DETECTED,
                        f"rules applied more than {RULE_APPLICATION_CAP} times in one "
                        "phase; the rule at this line keeps firing"))
                i = scan(objs, mov, 0)
            else:
                i = scan(objs, mov, i + 1)

    # -- movement --------------------------------------------------------
    def resolve_movement(self) -> None:
        """Move every pending mover, in row-major then layer order, to a fixpoint."""
        mov = self.mov
        movers = []
        for k, L, d in compress(self.rt.move_slots, mov):
            bb = mov[k]
            if d < 4:
                if bb & (bb - 1):
                    while bb:
                        low = bb & -bb
                        movers.append((low.bit_length() - 1, L, d))
                        bb ^= low
                else:
                    movers.append((bb.bit_length() - 1, L, d))
        if not movers:
            if any(mov):
                self.clear_motions()
            return
        nbr = self.geo.nbr
        objs = self.objs
        members = self.rt.layer_members
        if len(movers) == 1:
            pos, L, d = movers[0]
            dest = nbr[d][pos]
            if dest >= 0:
                dbit = 1 << dest
                layer_objs = members[L]
                for o in layer_objs:
                    if objs[o] & dbit:
                        break
                else:
                    bit = 1 << pos
                    for o in layer_objs:
                        if objs[o] & bit:
                            objs[o] ^= bit | dbit
                            break
            mov[:] = self.rt.zero_mov
            return
        movers.sort()
        occ = {}
        while movers:
            waiting = []
            for mover in movers:
                pos, L, d = mover
                dest = nbr[d][pos]
                if dest < 0:
                    continue  # off the grid: blocked for good
                layer_objs = members[L]
                occupied = occ.get(L)
                if occupied is None:
                    occupied = 0
                    for o in layer_objs:
                        occupied |= objs[o]
                dbit = 1 << dest
                if occupied & dbit:
                    waiting.append(mover)
                    occ[L] = occupied
                    continue
                bit = 1 << pos
                for o in layer_objs:
                    if objs[o] & bit:
                        objs[o] ^= bit | dbit
                        break
                occ[L] = occupied ^ (bit | dbit)
            if len(waiting) == len(movers):
                break
            movers = waiting
        self.mov[:] = self.rt.zero_mov


# -- public operations ----------------------------------------------------

def init_state(game: CompiledGame, level_index: int, rng_seed: int = 0) -> GameState:
    if not 0 <= level_index < len(game.levels):
        raise IndexError(f"level {level_index} out of range (0..{len(game.levels) - 1})")
    level = game.levels[level_index]
    if not isinstance(level, CompiledLevel):
        raise ValueError(f"level {level_index} is a message, not a playable grid")
    objs = [0] * len(game.objects)
    for idx, ids in enumerate(level.cells):
        for oid in ids:
            objs[oid] |= 1 << idx
    state = GameState(level.width, level.height, tuple(objs), level_index, rng_seed=rng_seed)
    if game.flag("run_rules_on_level_start"):
        outcome = _turn(game, state, None, at_level_start=True)
        if outcome.diagnostics:
            raise EngineError(outcome.diagnostics[0])
        state = outcome.state
    return state


def check_win(game: CompiledGame, state: GameState) -> bool:
    full = (1 << (state.width * state.height)) - 1
    return runtime(game).won(state.objects, full)


def _stamp(board: _Board, code: int) -> None:
    objs = board.objs
    mov = board.mov
    for oid, base in zip(board.rt.players, board.rt.player_bases):
        bb = objs[oid]
        if bb:
            mov[base + code] |= bb


def _phases(board: _Board, commands: list) -> None:
    rt = board.rt
    board.run_rules(rt.early, commands)
    board.resolve_movement()
    if rt.late:
        board.run_rules(rt.late, commands)


def _turn(
    game: CompiledGame,
    state: GameState,
    action: Optional[Action],
    at_level_start: bool = False,
) -> TurnOutcome:
    rt = runtime(game)
    board = _Board(rt, state)
    commands: list = []
    try:
        if action is not None:
            _stamp(board, action.value)
        _phases(board, commands)
        if not commands:
            objects = tuple(board.objs)
            won = rt.won(objects, board.geo.full)
            was_won = state.status is Status.WON
            new_state = GameState(
                state.width, state.height, objects, state.level_index,
                Status.WON if won else state.status, state.checkpoint, board.rng, (),
            )
            return TurnOutcome(new_state, objects != state.objects or won != was_won,
                               (Event("won"),) if won else ())
        return _finish_turn(game, state, board, commands, at_level_start)
    except EngineError as exc:
        return TurnOutcome(state, False, (Event("cancelled"),), (exc.diagnostic,))


def _finish_turn(game, state, board, commands, at_level_start) -> TurnOutcome:
    """Slow path: process queued commands and any ``again`` passes."""
    events: list[Event] = []
    checkpoint = state.checkpoint
    won = False
    again_runs = 0
    while True:
        names = [c[0] for c in commands]
        if "cancel" in names:
            return TurnOutcome(state, False, (Event("cancelled"),))
        if "restart" in names and not at_level_start:
            fresh = checkpoint if checkpoint is not None else init_state(
                game, state.level_index, state.rng_seed).objects
            restarted = state._replace(objects=fresh, motions=(), status=Status.IN_PROGRESS)
            return TurnOutcome(restarted, fresh != state.objects, (Event("restarted"),))
        for name, text in commands:
            if name == "message":
                events.append(Event("message", text))
        if "checkpoint" in names:
            checkpoint = tuple(board.objs)
            events.append(Event("checkpoint_set"))
        if "win" in names or board.rt.won(board.objs, board.geo.full):
            won = True
            break
        if "again" not in names:
            break
        if again_runs >= AGAIN_CAP:
            raise EngineError(dg.error(
                Phase.RUNTIME, 1, 1, dg.RULE_LOOP_DETECTED,
                f"'again' repeated more than {AGAIN_CAP} times in one turn"))
        before = list(board.objs)
        commands = []
        _phases(board, commands)
        again_runs += 1
        if board.objs == before and not commands:
            break
        if board.objs == before:
            # an unchanged again-pass only contributes its terminal commands
            commands = [c for c in commands if c[0] != "again"]
    if again_runs:
        events.append(Event("again_ran", count=again_runs))
    objects = tuple(board.objs)
    status = Status.WON if won else state.status
    if won:
        events.append(Event("won"))
    new_state = GameState(
        state.width, state.height, objects, state.level_index, status,
        checkpoint, board.rng, (),
    )
    return TurnOutcome(new_state, objects != state.objects or won != (state.status is Status.WON),
                       tuple(events))


def step(game: CompiledGame, state: GameState, action: Action) -> TurnOutcome:
    """Run one full turn for ``action``; see the module docstring for the phases."""
    if state.status is Status.WON:
        raise ValueError("cannot step a state that is already won")
    return _turn(game, state, action)


def expand(game: CompiledGame, state: GameState) -> list[tuple]:
    """Search-oriented successor list: ``(action code, objects, won, outcome)``.

    Turns that change nothing are skipped.  For plain turns ``outcome`` is None
    and the child is ``state`` with ``objects`` (and WON status if ``won``);
    turns that queued commands or failed carry their full :class:`TurnOutcome`.
    Building full states only when a child is dequeued keeps search loops fast.
    """
    if state.status is Status.WON:
        raise ValueError("cannot step a state that is already won")
    rt = runtime(game)
    board = _Board(rt, state)
    start = state.objects
    objs = board.objs
    mov = board.mov
    geo = board.geo
    full = geo.full
    won_check = rt.won
    start_won = won_check(start, full)
    early = rt.early
    early_scan = geo.scanner(early) if early else None
    late = rt.late
    late_scan = geo.scanner(late) if late else None
    stamps = tuple(zip(rt.players, rt.player_bases))
    zero = rt.zero_mov
    out = []
    for code in (range(4) if rt.act_inert and not start_won else range(5)):
        if code:
            objs[:] = start
            mov[:] = zero
            board.rng = state.rng_seed
        commands: list = []
        try:
            for oid, base in stamps:
                if objs[oid]:
                    mov[base + code] |= objs[oid]
            if early:
                board.run_rules(early, commands, early_scan)
            board.resolve_movement()
            if late:
                board.run_rules(late, commands, late_scan)
        except EngineError as exc:
            out.append((code, start, False, TurnOutcome(
                state, False, (Event("cancelled"),), (exc.diagnostic,))))
            continue
        if commands:
            outcome = _turn(game, state, ACTIONS[code])
            if outcome.changed or outcome.diagnostics:
                out.append((code, outcome.state.objects, outcome.won, outcome))
            continue
        objects = tuple(objs)
        if objects == start:
            if start_won:
                out.append((code, objects, True, None))
            continue
        out.append((code, objects, won_check(objects, full), None))
    return out


def successors(game: CompiledGame, state: GameState) -> list[tuple[Action, TurnOutcome]]:
    """Outcomes of every action from ``state``, skipping turns that change nothing.

    Equivalent to calling :func:`step` once per action, but one working board
    is reused across actions.
    """
    result = []
    for code, objects, won, outcome in expand(game, state):
        if outcome is None:
            child = state._replace(objects=objects,
                                   status=Status.WON if won else state.status)
            outcome = TurnOutcome(child, True, (Event("won"),) if won else ())
        result.append((ACTIONS[code], outcome))
    return result


def resolve_movement(game: CompiledGame, state: GameState) -> GameState:
    board = _Board(runtime(game), state)
    board.resolve_movement()
    return state._replace(objects=tuple(board.objs), motions=())


def with_motion(game: CompiledGame, state: GameState, row: int, col: int,
                layer: int, direction: str) -> GameState:
    """Return ``state`` with a pending movement stamped on one slot."""
    board = _Board(runtime(game), state)
    d = ("up", "down", "left", "right", "action").index(direction)
    bit = 1 << (row * state.width + col)
    board._clear_layer_motion(layer, bit)
    board.mov[5 * layer + d] |= bit
    return state._replace(motions=board.motions_tuple())


def state_bytes(state: GameState) -> bytes:
    nbits = state.width * state.height
    packed = 0
    for bb in state.objects:
        packed = (packed << nbits) | bb
    nbytes = (nbits * len(state.objects) + 7) // 8
    head = b"%d,%d,%d;" % (state.width, state.height, state.status is Status.WON)
    return head + packed.to_bytes(nbytes, "little")


def hash_state(state: GameState) -> bytes:
    """128-bit digest of the grid and status; stable across processes.

    ``marshal`` gives a canonical, C-speed serialisation of the int tuple
    (format version 2, which never emits refcount-dependent back-references)
    and keeps hashing off the solver's profile.
    """
    return digest(state.width, state.height, state.status is Status.WON, state.objects)


def digest(width: int, height: int, won: bool, objects: tuple) -> bytes:
    """:func:`hash_state` from the raw fields, for callers without a GameState."""
    key = (width, height, won, objects)
    return _blake2b(_marshal_dumps(key, 2), digest_size=16).digest()


def render_glyphs(game: CompiledGame, state: GameState) -> list[str]:
    """Re-encode a state as level text where every cell has a unique glyph."""
    rows = []
    for r in range(state.height):
        row = []
        for c in range(state.width):
            glyph = game.encode_cell(state.cell_objects(r, c))
            row.append(glyph if glyph is not None else "?")
        rows.append("".join(row))
    return rows
