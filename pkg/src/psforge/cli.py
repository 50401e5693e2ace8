"""``psforge`` command-line interface.

Exit codes are uniform across commands: 0 on success, 1 when the input is
understood but the outcome is negative (does not compile, unsolved, no trial
succeeded), and 2 for usage or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from psforge import __version__
from psforge.compiler import CompiledLevel, compile_game
from psforge.diagnostics import Phase, count_errors
from psforge.grammar import SourceText, parse_game, repair_source

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("psforge")


class UsageError(Exception):
    """Raised for bad flags, unreadable files and similar; maps to exit 2."""


def _read_source(path: str) -> SourceText:
    try:
        return SourceText.from_path(Path(path))
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _print_diagnostics(diagnostics, stream) -> None:
    for d in diagnostics:
        print(d.render(), file=stream)


def _compile_file(path: str):
    parsed = parse_game(_read_source(path))
    if parsed.spec is None:
        return None, parsed.diagnostics
    compiled = compile_game(parsed.spec)
    return compiled.game, parsed.diagnostics + compiled.diagnostics


# -- parse / compile -----------------------------------------------------------

def cmd_parse(args) -> int:
    source = _read_source(args.file)
    repairs: list[str] = []
    if args.repair:
        result = repair_source(source)
        source, repairs = result.repaired, result.repairs
    diagnostics = parse_game(source).diagnostics
    ok = count_errors(diagnostics, Phase.SYNTAX) == 0
    if args.json:
        payload: dict[str, Any] = {"ok": ok, "diagnostics": [d.to_dict() for d in diagnostics]}
        if args.repair:
            payload["repairs"] = repairs
            payload["source"] = source.content
        print(json.dumps(payload, indent=2))
    elif args.repair:
        sys.stdout.write(source.content)
        for r in repairs:
            print(f"repair: {r}", file=sys.stderr)
        _print_diagnostics(diagnostics, sys.stderr)
    else:
        _print_diagnostics(diagnostics, sys.stdout)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_compile(args) -> int:
    game, diagnostics = _compile_file(args.file)
    _print_diagnostics(diagnostics, sys.stdout)
    return EXIT_OK if game is not None else EXIT_FAIL


# -- solve / play ------------------------------------------------------------

def _level_indices(game, spec: str) -> list[int]:
    if spec == "all":
        return [i for i, lv in enumerate(game.levels) if isinstance(lv, CompiledLevel)]
    try:
        index = int(spec)
    except ValueError:
        raise UsageError(f"--level expects a number or 'all', got {spec!r}") from None
    if not 0 <= index < len(game.levels):
        raise UsageError(f"level {index} out of range (0..{len(game.levels) - 1})")
    if not isinstance(game.levels[index], CompiledLevel):
        raise UsageError(f"level {index} is a message, not a playable level")
    return [index]


def _require_game(path: str):
    game, diagnostics = _compile_file(path)
    if game is None:
        _print_diagnostics(diagnostics, sys.stderr)
        raise UsageError(f"{path} does not compile")
    return game


def cmd_solve(args) -> int:
    from psforge.engine import format_actions
    from psforge.solver import SolverConfig, bfs_solve

    game = _require_game(args.file)
    if args.budget < 1:
        raise UsageError("--budget must be at least 1")
    config = SolverConfig(node_budget=args.budget)
    all_solved = True
    for index in _level_indices(game, args.level):
        result = bfs_solve(game, index, config)
        print(result.summary_line())
        if result.solved:
            print(f"solution: {format_actions(result.solution)}")
        else:
            all_solved = False
    return EXIT_OK if all_solved else EXIT_FAIL


def cmd_play(args) -> int:
    from psforge.engine import parse_actions
    from psforge.play import play_replay, play_terminal

    game = _require_game(args.file)
    if args.level is None:
        playable = _level_indices(game, "all")
        if not playable:
            raise UsageError("the game has no playable levels")
        index = playable[0]
    else:
        index = _level_indices(game, str(args.level))[0]
    if args.replay:
        try:
            text = Path(args.replay).read_text(encoding="utf-8")
            actions = parse_actions(text)
        except OSError as exc:
            raise UsageError(f"cannot read {args.replay}: {exc}") from None
        except ValueError:
            raise UsageError(f"{args.replay}: replay files hold only the letters U D L R X")
        code = play_replay(game, index, actions, sys.stdout)
        if args.record:
            _write_record(args.record, actions)
        return code
    if not (sys.stdin.isatty() and sys.stdout.isatty()):
        raise UsageError("play needs an interactive terminal (or --replay FILE)")
    record = (lambda moves: _write_record(args.record, moves)) if args.record else None
    return play_terminal(game, index, record=record)


def _write_record(path: str, actions) -> None:
    from psforge.engine import format_actions

    Path(path).write_text(format_actions(actions) + "\n", encoding="utf-8")


# -- generate / report -----------------------------------------------------------

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}

GENERATE_DEFAULTS: dict[str, Any] = {
    "corpus": None, "fewshot": False, "cot": False, "brainstorm": False,
    "context_budget": 30_000, "trials": 1, "backend": "http", "out": "trials",
    "jobs": 1, "seed": 0, "max_iterations": 10, "model": "gpt-4o", "temperature": 1.0,
    "max_output_tokens": 4096, "node_budget": 1_000_000, "endpoint": None, "api_key": None,
}
_CONFIG_ALIASES = {"chain_of_thought": "cot", "rng_seed": "seed"}


def _coerce(key: str, raw: Any) -> Any:
    default = GENERATE_DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        try:
            return _BOOL_WORDS[raw.strip().lower()]
        except KeyError:
            raise UsageError(f"config: {key} expects true/false, got {raw!r}") from None
    if isinstance(default, int):
        try:
            return int(raw.replace("_", "").replace(",", ""))
        except ValueError:
            raise UsageError(f"config: {key} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise UsageError(f"config: {key} expects a number, got {raw!r}") from None
    return raw


def read_config_file(path: str) -> dict[str, Any]:
    """``key = value`` lines (``#`` comments), or a trial's ``config.json``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    values: dict[str, Any] = {}
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise UsageError(f"config {path}: {exc}") from None
        solver = data.pop("solver", None) or {}
        if "node_budget" in solver:
            data["node_budget"] = solver["node_budget"]
        data.pop("eval", None)
        data.pop("include_broken_examples", None)
        items = data.items()
    else:
        items = []
        for number, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{number}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            items.append((key, value))
    for key, value in items:
        key = key.replace("-", "_").lower()
        key = _CONFIG_ALIASES.get(key, key)
        if key not in GENERATE_DEFAULTS:
            raise UsageError(f"config {path}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _generate_settings(args) -> dict[str, Any]:
    settings = dict(GENERATE_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in GENERATE_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def cmd_generate(args) -> int:
    from psforge.corpus import CorpusError, load_corpus
    from psforge.metrics import EvalThresholds, aggregate
    from psforge.orchestrator import BackendFatal, TrialConfig, backend_from_spec, run_trials
    from psforge.orchestrator.backends import DEFAULT_ENDPOINT
    from psforge.solver import SolverConfig

    s = _generate_settings(args)
    if s["trials"] < 1:
        raise UsageError("--trials must be at least 1")
    if s["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        config = TrialConfig(
            max_iterations=s["max_iterations"],
            fewshot=s["fewshot"],
            chain_of_thought=s["cot"],
            context_budget=s["context_budget"],
            brainstorm=s["brainstorm"],
            solver=SolverConfig(node_budget=s["node_budget"]),
            eval=EvalThresholds(),
            rng_seed=s["seed"],
            model=s["model"],
            temperature=s["temperature"],
            max_output_tokens=s["max_output_tokens"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    corpus = None
    if config.fewshot:
        if not s["corpus"]:
            raise UsageError("--fewshot needs --corpus DIR")
        try:
            corpus = load_corpus(s["corpus"])
        except CorpusError as exc:
            raise UsageError(str(exc)) from None
    try:
        factory = backend_from_spec(s["backend"], s["endpoint"] or DEFAULT_ENDPOINT, s["api_key"])
    except BackendFatal as exc:
        raise UsageError(f"backend: {exc}") from None
    out = Path(s["out"])
    records = run_trials(factory, corpus, config, s["trials"], out, s["jobs"])
    for record in records:
        print(f"seed {record.config.rng_seed}: {record.outcome.value}"
              + (f" at iteration {record.success_iteration}" if record.success_iteration else "")
              + (f" ({record.error})" if record.error else ""))
    table = aggregate(records, ["fewshot", "cot"])
    try:
        (out / "summary.csv").write_text(table.to_csv(), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write summary: {exc}") from None
    print(table.to_text(), end="")
    return EXIT_OK if any(r.succeeded for r in records) else EXIT_FAIL


def cmd_report(args) -> int:
    from psforge.metrics import aggregate
    from psforge.orchestrator import load_trials

    trials = []
    for root in args.trials:
        if not Path(root).is_dir():
            raise UsageError(f"not a directory: {root}")
        try:
            trials += load_trials(Path(root))
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load trials from {root}: {exc}") from None
    if not trials:
        raise UsageError("no trial records found")
    group_key = None
    if args.group_by:
        group_key = [k.strip() for k in args.group_by.split(",") if k.strip()]
        known = set(trials[0].config.to_dict()) | {"cot"}
        unknown = [k for k in group_key if k not in known]
        if unknown:
            raise UsageError(f"unknown --group-by key(s): {', '.join(unknown)}")
    table = aggregate(trials, group_key)
    print(table.to_csv() if args.csv else table.to_text(), end="")
    return EXIT_OK


# -- wiring --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeatable)")

    parser = argparse.ArgumentParser(
        prog="psforge", description="PuzzleScript toolchain, playtester and generation loop.")
    parser.add_argument("--version", action="version", version=f"psforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse", parents=[common], help="check syntax")
    p.add_argument("file")
    p.add_argument("--repair", action="store_true", help="apply syntax repairs, print the result")
    p.add_argument("--json", action="store_true", help="structured output")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("compile", parents=[common], help="parse and compile")
    p.add_argument("file")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("solve", parents=[common], help="breadth-first solve levels")
    p.add_argument("file")
    p.add_argument("--level", default="all", help="level index or 'all' (default)")
    p.add_argument("--budget", type=int, default=1_000_000, help="unique-node budget")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("play", parents=[common], help="play in the terminal")
    p.add_argument("file")
    p.add_argument("--level", type=int, default=None)
    p.add_argument("--replay", metavar="FILE", help="play recorded U/D/L/R/X letters")
    p.add_argument("--record", metavar="FILE", help="write the moves played")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("generate", parents=[common], help="run generation trials")
    p.add_argument("--config", help="key = value file (or a trial's config.json)")
    p.add_argument("--corpus")
    flag = argparse.BooleanOptionalAction
    p.add_argument("--fewshot", action=flag, default=None)
    p.add_argument("--cot", action=flag, default=None, help="chain-of-thought prompting")
    p.add_argument("--brainstorm", action=flag, default=None)
    p.add_argument("--context-budget", dest="context_budget", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--backend", help="http, replay:FILE or mock:FILE")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--node-budget", dest="node_budget", type=int)
    p.add_argument("--endpoint")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("report", parents=[common], help="aggregate trial records")
    p.add_argument("--trials", nargs="+", required=True, metavar="DIR")
    p.add_argument("--group-by", dest="group_by", help="comma-separated config keys")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 for --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"psforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
