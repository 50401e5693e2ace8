"""Prompt assembly and code extraction.

Everything here is a pure function of its inputs, so a trial replayed with the
same configuration produces byte-identical prompts.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import NamedTuple, Optional, Sequence

from psforge.compiler import COSMETIC_PRELUDE, SUPPORTED_PRELUDE
from psforge.grammar import SECTION_ORDER, SourceText

DOCS_VERSION = "psforge-digest-1"

TASK_INSTRUCTION = (
    "Write a complete, original PuzzleScript game. It must compile without errors, "
    "include at least two levels, and every level must be solvable, with a shortest "
    "solution longer than ten moves."
)
DIRECT_FORMAT = "Reply with the full game source inside a single fenced code block."
COT_FORMAT = (
    "Think step by step: first describe the mechanics, then plan each level and check "
    "that it can be solved, and only then write the code. End your reply with the full "
    "game source inside a single fenced code block."
)
IDEA_HEADER = "Build the game around this design idea:"
BRAINSTORM_INSTRUCTION = (
    "Propose one idea for a small turn-based grid puzzle game that could be written in "
    "PuzzleScript. Describe its core mechanic and what makes its levels interesting in "
    "two or three sentences. Do not write any code."
)
NO_CODE_FEEDBACK = (
    "Your previous reply did not contain a game. Reply with the complete game source "
    "inside a single fenced code block (``` ... ```)."
)


@lru_cache(maxsize=1)
def docs_digest() -> str:
    """The bundled PuzzleScript documentation digest (versioned text asset)."""
    ref = resources.files("psforge.orchestrator").joinpath("assets/docs_digest.txt")
    return ref.read_text(encoding="utf-8")


class Prompt(NamedTuple):
    system_text: str
    user_text: str


def fewshot_block(examples: Sequence[tuple[str, SourceText]]) -> str:
    parts = ["Here are complete games written by people, for reference."]
    for game_id, source in examples:
        parts.append(f"=== example game: {game_id} ===\n{source.content.rstrip()}\n"
                     f"=== end of {game_id} ===")
    return "\n\n".join(parts)


def build_prompt(
    config,
    examples: Sequence[tuple[str, SourceText]] = (),
    idea: Optional[str] = None,
    prior=None,
) -> Prompt:
    """Assemble the system and user messages for one iteration.

    ``config`` only needs a ``chain_of_thought`` attribute.  ``examples`` are
    ``(id, source)`` pairs in sampling order.  ``prior`` is the previous
    iteration's record; its rendered feedback is included verbatim.
    """
    chain_of_thought = config.chain_of_thought
    feedback = prior.feedback_rendered if prior is not None else None
    system = docs_digest().rstrip()
    if examples:
        system += "\n\n" + fewshot_block(examples)
    user = [TASK_INSTRUCTION + " " + (COT_FORMAT if chain_of_thought else DIRECT_FORMAT)]
    if idea:
        user.append(f"{IDEA_HEADER}\n{idea.strip()}")
    if feedback:
        user.append(feedback)
    return Prompt(system, "\n\n".join(user))


def brainstorm_prompt() -> Prompt:
    return Prompt(docs_digest().rstrip(), BRAINSTORM_INSTRUCTION)


_FENCE = re.compile(r"^[ \t]*(```+|~~~+)", re.MULTILINE)
_PRELUDE_KEYS = SUPPORTED_PRELUDE | COSMETIC_PRELUDE


def _starts_like_game(text: str) -> bool:
    first = text.lstrip().split("\n", 1)[0].strip()
    if not first:
        return False
    if set(first) == {"="}:
        return True
    word = first.split()[0].lower()
    return word in SECTION_ORDER or word in _PRELUDE_KEYS


def extract_code(raw_response: str) -> Optional[SourceText]:
    """Contents of the last fenced block, or the bare reply if it reads as a game."""
    fences = list(_FENCE.finditer(raw_response))
    blocks = []
    i = 0
    while i + 1 < len(fences):
        opening, closing = fences[i], fences[i + 1]
        start = raw_response.find("\n", opening.end())
        if start == -1 or start > closing.start():
            i += 1
            continue
        blocks.append(raw_response[start + 1:closing.start()])
        i += 2
    if blocks:
        return SourceText(blocks[-1].rstrip() + "\n", origin="llm-response")
    if _starts_like_game(raw_response):
        return SourceText(raw_response.strip() + "\n", origin="llm-response")
    return None
