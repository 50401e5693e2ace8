"""Bounded, deterministic source repairs.

The catalog is closed; each repair is attempted in order and kept only if it
strictly lowers the syntax-error count.  Passes repeat until none applies, so
repairing already-repaired text is a no-op.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from psforge.diagnostics import Diagnostic, Phase, count_errors
from psforge.grammar.parser import _DELIM, parse_game, strip_comments
from psforge.grammar.tree import SECTION_ORDER, SourceText, normalize_newlines

_FENCE = re.compile(r"^\s*(```+|~~~+)[^\n]*$", re.MULTILINE)
_MAX_PASSES = 20


@dataclass
class RepairResult:
    repaired: SourceText
    repairs: list[str] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.repairs)


def _syntax_errors(text: str) -> int:
    return count_errors(parse_game(SourceText(text)).diagnostics, Phase.SYNTAX)


def extract_fenced_block(text: str) -> Optional[str]:
    """Return the contents of the single fenced block in ``text``, if exactly one."""
    fences = list(_FENCE.finditer(text))
    if len(fences) != 2:
        return None
    start = fences[0].end() + 1
    return text[start:fences[1].start()].rstrip("\n") + "\n"


def _fix_fence(text: str) -> tuple[str, str] | None:
    block = extract_fenced_block(text)
    if block is None:
        return None
    return block, "extracted the fenced code block and dropped surrounding prose"


def _headers(lines: list[str]) -> list[int]:
    return [i for i, t in enumerate(lines) if t.strip().lower() in SECTION_ORDER]


def _fix_delimiters(text: str) -> tuple[str, str] | None:
    lines = text.split("\n")
    stripped, _ = strip_comments(text)
    clean = stripped.split("\n")
    for i in _headers(clean):
        before = next((j for j in range(i - 1, -1, -1) if clean[j].strip()), None)
        after = next((j for j in range(i + 1, len(clean)) if clean[j].strip()), None)
        need_before = before is None or not _DELIM.match(clean[before].strip())
        need_after = after is None or not _DELIM.match(clean[after].strip())
        if not (need_before or need_after):
            continue
        name = clean[i].strip().upper()
        bar = "=" * max(8, len(name) + 2)
        new = lines[:i]
        if need_before:
            new.append(bar)
        new.append(lines[i])
        if need_after:
            new.append(bar)
        new += lines[i + 1:]
        return "\n".join(new), f"inserted '=' delimiter lines around section {name}"
    return None


def _looks_like(section: str, line: str) -> bool:
    text = line.strip()
    low = text.lower()
    words = text.split()
    if section == "legend":
        return "=" in text and len(text.partition("=")[0].split()) == 1
    if section == "rules":
        return "[" in text and "->" in text
    if section == "winconditions":
        return bool(words) and words[0].lower() in ("all", "some", "any", "no") and (
            len(words) == 2 or (len(words) == 4 and words[2].lower() == "on")
        )
    if section == "collisionlayers":
        return bool(words) and not any(c in text for c in "=[]") and (
            "," in text or len(words) == 1
        )
    if section == "levels":
        return low.startswith("message") or (len(words) == 1 and "=" not in text)
    return False


_CLASSIFIED = ("legend", "collisionlayers", "rules", "winconditions", "levels")


def _fix_missing_header(text: str) -> tuple[str, str] | None:
    lines = text.split("\n")
    stripped, _ = strip_comments(text)
    clean = stripped.split("\n")
    headers = _headers(clean)
    present = {clean[i].strip().lower() for i in headers}
    for missing in _CLASSIFIED:
        if missing in present:
            continue
        for n, h in enumerate(headers):
            owner = clean[h].strip().lower()
            if owner not in _CLASSIFIED or owner == missing:
                continue
            if SECTION_ORDER.index(owner) > SECTION_ORDER.index(missing):
                continue
            stop = headers[n + 1] if n + 1 < len(headers) else len(clean)
            body = [
                j for j in range(h + 1, stop)
                if clean[j].strip() and not _DELIM.match(clean[j].strip())
            ]
            # the tail of the body must read as the missing section while the
            # head still reads as the owner; a wholly foreign body is ambiguous
            split = None
            for k in range(1, len(body)):
                tail = body[k:]
                if all(
                    _looks_like(missing, clean[t]) and not _looks_like(owner, clean[t])
                    for t in tail
                ) and _looks_like(owner, clean[body[k - 1]]):
                    split = body[k]
                    break
            if split is None:
                continue
            while split - 1 > h and not clean[split - 1].strip():
                split -= 1
            bar = "=" * max(8, len(missing) + 2)
            new = lines[:split] + ["", bar, missing.upper(), bar, ""] + lines[split:]
            return "\n".join(new), f"inserted missing section header {missing.upper()}"
    return None


def _levels_span(clean: list[str]) -> Optional[tuple[int, int]]:
    headers = _headers(clean)
    for n, h in enumerate(headers):
        if clean[h].strip().lower() == "levels":
            stop = headers[n + 1] if n + 1 < len(headers) else len(clean)
            return h + 1, stop
    return None


def _is_level_line(text: str) -> bool:
    t = text.strip()
    if not t or _DELIM.match(t):
        return True
    if t.split()[0].lower() == "message":
        return True
    return not any(ch.isspace() for ch in t)


def _fix_trailing_prose(text: str) -> tuple[str, str] | None:
    lines = text.split("\n")
    stripped, _ = strip_comments(text)
    clean = stripped.split("\n")
    span = _levels_span(clean)
    if span is None:
        return None
    start, stop = span
    if stop != len(clean):
        return None
    bad = next((i for i in range(start, stop) if not _is_level_line(clean[i])), None)
    if bad is None:
        return None
    kept = lines[:bad]
    while kept and not kept[-1].strip():
        kept.pop()
    return "\n".join(kept) + "\n", "removed trailing prose after the LEVELS section"


def _background_glyphs(clean: list[str]) -> set[str]:
    glyphs = set()
    for line in clean:
        lhs, eq, rhs = line.partition("=")
        if eq and [w.lower() for w in rhs.split()] == ["background"]:
            glyphs.add(lhs.strip())
    return glyphs


def _fix_ragged(text: str) -> tuple[str, str] | None:
    lines = text.split("\n")
    stripped, _ = strip_comments(text)
    clean = stripped.split("\n")
    span = _levels_span(clean)
    if span is None:
        return None
    start, stop = span
    bg = _background_glyphs(clean)
    groups: list[list[int]] = []
    current: list[int] = []
    for i in range(start, stop):
        t = clean[i].strip()
        if not t or _DELIM.match(t) or t.split()[0].lower() == "message" or any(
            ch.isspace() for ch in t
        ):
            if current:
                groups.append(current)
            current = []
        else:
            current.append(i)
    if current:
        groups.append(current)
    for group in groups:
        rows = [clean[i].strip() for i in group]
        width = max(len(r) for r in rows)
        if all(len(r) == width for r in rows):
            continue
        counts = Counter("".join(rows))
        candidates = [g for g in counts if g in bg]
        pool = candidates or list(counts)
        pad = max(pool, key=lambda g: (counts[g], -ord(g[0])))
        new = list(lines)
        for i, row in zip(group, rows):
            if len(row) < width:
                indent = lines[i][: len(lines[i]) - len(lines[i].lstrip())]
                new[i] = indent + row + pad * (width - len(row))
        return "\n".join(new), (
            f"padded ragged level rows at line {group[0] + 1} with {pad!r}"
        )
    return None


CATALOG: tuple[Callable[[str], tuple[str, str] | None], ...] = (
    _fix_fence,
    _fix_delimiters,
    _fix_missing_header,
    _fix_trailing_prose,
    _fix_ragged,
)


def repair_source(
    source: SourceText | str, diagnostics: Optional[list[Diagnostic]] = None
) -> RepairResult:
    """Apply catalog repairs while each one lowers the syntax-error count."""
    if isinstance(source, str):
        source = SourceText(source)
    text = normalize_newlines(source.content)
    if diagnostics is None:
        errors = _syntax_errors(text)
    else:
        errors = count_errors(diagnostics, Phase.SYNTAX)
    repairs: list[str] = []
    for _ in range(_MAX_PASSES):
        if errors == 0:
            break
        applied = False
        for fix in CATALOG:
            proposal = fix(text)
            if proposal is None:
                continue
            new_text, description = proposal
            new_errors = _syntax_errors(new_text)
            if new_errors < errors:
                text, errors = new_text, new_errors
                repairs.append(description)
                applied = True
                break
        if not applied:
            break
    if not repairs:
        return RepairResult(source, [])
    return RepairResult(SourceText(text, origin=source.origin), repairs)
