"""The generate, compile, playtest and feedback loop for one trial."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from psforge.compiler import compile_game
from psforge.corpus import Corpus, FewshotSample, sample_fewshot
from psforge.diagnostics import Diagnostic, Phase
from psforge.grammar import parse_game, repair_source
from psforge.metrics import EvalThresholds, GameEvalReport, report_from_results
from psforge.orchestrator.backends import (
    Backend,
    BackendError,
    LlmRequest,
    complete_with_retry,
)
from psforge.orchestrator.prompts import (
    DOCS_VERSION,
    NO_CODE_FEEDBACK,
    brainstorm_prompt,
    build_prompt,
    extract_code,
)
from psforge.solver import SolveResult, SolverConfig, SolveStatus, solve_all_levels

log = logging.getLogger(__name__)

MAX_ITERATIONS = 10


class TrialOutcome(str, Enum):
    SUCCESS = "success"
    FAILED_MAX_ITERATIONS = "failed_max_iterations"
    BACKEND_ERROR = "backend_error"


@dataclass(frozen=True)
class TrialConfig:
    max_iterations: int = MAX_ITERATIONS
    fewshot: bool = False
    chain_of_thought: bool = False
    context_budget: int = 30_000
    brainstorm: bool = False
    solver: SolverConfig = SolverConfig()
    eval: EvalThresholds = EvalThresholds()
    rng_seed: int = 0
    model: str = "gpt-4o"
    temperature: float = 1.0
    max_output_tokens: int = 4096
    include_broken_examples: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.context_budget < 0:
            raise ValueError("context_budget must be non-negative")

    # aliases used when grouping trials for reports
    @property
    def cot(self) -> bool:
        return self.chain_of_thought

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SolverConfig):
                value = {"node_budget": value.node_budget,
                         "per_level_time_budget": value.per_level_time_budget}
            elif isinstance(value, EvalThresholds):
                value = value.to_dict()
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrialConfig":
        data = dict(data)
        if "solver" in data:
            data["solver"] = SolverConfig(**data["solver"])
        if "eval" in data:
            data["eval"] = EvalThresholds.from_dict(data["eval"])
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class IterationRecord:
    index: int  # 1-based
    system_text: str
    user_text: str
    raw_response: str = ""
    extracted_source: Optional[str] = None
    repairs: list[str] = field(default_factory=list)
    syntax_diagnostics: list[Diagnostic] = field(default_factory=list)
    compile_diagnostics: list[Diagnostic] = field(default_factory=list)
    eval: Optional[GameEvalReport] = None
    feedback_rendered: str = ""

    @property
    def prompt(self) -> str:
        return self.system_text + "\n\n" + self.user_text

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "system_text": self.system_text,
            "user_text": self.user_text,
            "raw_response": self.raw_response,
            "extracted_source": self.extracted_source,
            "repairs": list(self.repairs),
            "syntax_diagnostics": [d.to_dict() for d in self.syntax_diagnostics],
            "compile_diagnostics": [d.to_dict() for d in self.compile_diagnostics],
            "eval": self.eval.to_dict() if self.eval else None,
            "feedback_rendered": self.feedback_rendered,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            index=data["index"],
            system_text=data["system_text"],
            user_text=data["user_text"],
            raw_response=data.get("raw_response", ""),
            extracted_source=data.get("extracted_source"),
            repairs=list(data.get("repairs", [])),
            syntax_diagnostics=[Diagnostic.from_dict(d) for d in data.get("syntax_diagnostics", [])],
            compile_diagnostics=[Diagnostic.from_dict(d) for d in data.get("compile_diagnostics", [])],
            eval=GameEvalReport.from_dict(data["eval"]) if data.get("eval") else None,
            feedback_rendered=data.get("feedback_rendered", ""),
        )


TIMESTAMP_FIELDS = ("started_at", "finished_at")


@dataclass
class TrialRecord:
    config: TrialConfig
    iterations: list[IterationRecord] = field(default_factory=list)
    outcome: TrialOutcome = TrialOutcome.FAILED_MAX_ITERATIONS
    success_iteration: Optional[int] = None
    idea: Optional[str] = None
    fewshot_ids: list[str] = field(default_factory=list)
    fewshot_tokens: int = 0
    error: str = ""
    responses: list[str] = field(default_factory=list)  # every backend reply, in call order
    docs_version: str = DOCS_VERSION
    started_at: str = ""
    finished_at: str = ""

    @property
    def final_eval(self) -> Optional[GameEvalReport]:
        return self.iterations[-1].eval if self.iterations else None

    @property
    def succeeded(self) -> bool:
        return self.outcome is TrialOutcome.SUCCESS

    def to_dict(self, timestamps: bool = True) -> dict:
        out = {
            "config": self.config.to_dict(),
            "outcome": self.outcome.value,
            "success_iteration": self.success_iteration,
            "idea": self.idea,
            "fewshot_ids": list(self.fewshot_ids),
            "fewshot_tokens": self.fewshot_tokens,
            "error": self.error,
            "docs_version": self.docs_version,
            "responses": list(self.responses),
            "iterations": [it.to_dict() for it in self.iterations],
        }
        if timestamps:
            out["started_at"] = self.started_at
            out["finished_at"] = self.finished_at
        return out

    def to_json(self, timestamps: bool = True) -> str:
        return json.dumps(self.to_dict(timestamps), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "TrialRecord":
        return cls(
            config=TrialConfig.from_dict(data["config"]),
            iterations=[IterationRecord.from_dict(d) for d in data.get("iterations", [])],
            outcome=TrialOutcome(data["outcome"]),
            success_iteration=data.get("success_iteration"),
            idea=data.get("idea"),
            fewshot_ids=list(data.get("fewshot_ids", [])),
            fewshot_tokens=data.get("fewshot_tokens", 0),
            error=data.get("error", ""),
            responses=list(data.get("responses", [])),
            docs_version=data.get("docs_version", DOCS_VERSION),
            started_at=data.get("started_at", ""),
            finished_at=data.get("finished_at", ""),
        )


# -- feedback ------------------------------------------------------------------

def _level_ok(result: SolveResult, thresholds: EvalThresholds) -> bool:
    return (result.status is SolveStatus.SOLVED
            and result.solution_length > thresholds.all_solvable_min_length)


def render_solver_feedback(results, thresholds: EvalThresholds) -> list[str]:
    """One ``level N: status, length L, nodes K`` line per level, failing levels first."""
    ordered = sorted(results, key=lambda r: (_level_ok(r, thresholds), r.level_index))
    return [r.summary_line() for r in ordered]


def render_feedback(record: IterationRecord, thresholds: EvalThresholds) -> str:
    if record.extracted_source is None:
        return NO_CODE_FEEDBACK
    parts = ["Your previous attempt:", "```", record.extracted_source.rstrip(), "```"]
    if record.repairs:
        parts.append("Automatic repairs applied before compiling:")
        parts += [f"- {r}" for r in record.repairs]
    parts.append("Syntax diagnostics:")
    parts += [d.render() for d in record.syntax_diagnostics] or ["none"]
    parts.append("Compile diagnostics:")
    if record.syntax_diagnostics and any(d.is_error for d in record.syntax_diagnostics):
        parts.append("not compiled (fix the syntax errors first)")
    else:
        parts += [d.render() for d in record.compile_diagnostics] or ["none"]
    if record.eval is not None and record.eval.compiles:
        parts.append("Solver results:")
        parts += render_solver_feedback(record.eval.per_level, thresholds)
        parts.append(
            f"Every level must be solvable with a shortest solution longer than "
            f"{thresholds.all_solvable_min_length} moves. Fix the levels listed first.")
    else:
        parts.append("Fix every error above and reply with the complete corrected game.")
    return "\n".join(parts)


# -- the loop ------------------------------------------------------------------

def brainstorm(backend: Backend, config: TrialConfig,
               sleep: Callable[[float], None] = time.sleep) -> str:
    prompt = brainstorm_prompt()
    request = LlmRequest(prompt.system_text, prompt.user_text, config.max_output_tokens,
                         config.temperature, config.model)
    return complete_with_retry(backend, request, sleep=sleep).text.strip()


def evaluate_source(record: IterationRecord, config: TrialConfig) -> None:
    """Repair, parse, compile and playtest ``record.extracted_source`` in place."""
    repaired = repair_source(record.extracted_source)
    record.repairs = list(repaired.repairs)
    if repaired.changed:
        record.extracted_source = repaired.repaired.content
    parsed = parse_game(repaired.repaired)
    record.syntax_diagnostics = [d for d in parsed.diagnostics if d.phase is Phase.SYNTAX]
    if parsed.spec is None:
        record.eval = GameEvalReport(compiles=False)
        return
    compiled = compile_game(parsed.spec)
    record.compile_diagnostics = list(compiled.diagnostics)
    if compiled.game is None:
        record.eval = GameEvalReport(compiles=False)
        return
    results = solve_all_levels(compiled.game, config.solver)
    record.eval = report_from_results(results, config.eval)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_trial(
    backend: Backend,
    corpus: Optional[Corpus],
    config: TrialConfig,
    out_dir: Optional[Path] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> TrialRecord:
    """Run up to ``config.max_iterations`` generate/evaluate rounds.

    The loop stops at the first iteration whose game compiles and whose every
    level is solved in more than ``config.eval.all_solvable_min_length`` moves.
    The record is persisted under ``out_dir`` (when given) before returning;
    backend failures end the trial with outcome ``backend_error`` rather than
    raising.
    """
    record = TrialRecord(config=config, started_at=_now())
    examples = []
    if config.fewshot:
        if corpus is None:
            raise ValueError("few-shot prompting needs a corpus")
        sample: FewshotSample = sample_fewshot(corpus, config.context_budget, config.rng_seed,
                                               config.include_broken_examples)
        record.fewshot_ids = list(sample.games)
        record.fewshot_tokens = sample.total_tokens
        examples = [(gid, corpus[gid].source) for gid in sample.games]

    counting = _Recording(backend, record.responses)
    try:
        if config.brainstorm:
            record.idea = brainstorm(counting, config, sleep)
        prior: Optional[IterationRecord] = None
        for k in range(1, config.max_iterations + 1):
            prompt = build_prompt(config, examples, record.idea, prior)
            it = IterationRecord(k, prompt.system_text, prompt.user_text)
            request = LlmRequest(prompt.system_text, prompt.user_text,
                                 config.max_output_tokens, config.temperature, config.model)
            response = complete_with_retry(counting, request, sleep=sleep)
            it.raw_response = response.text
            code = extract_code(response.text)
            if code is not None:
                it.extracted_source = code.content
                evaluate_source(it, config)
            record.iterations.append(it)
            if it.eval is not None and it.eval.compiles and it.eval.all_solvable:
                record.outcome = TrialOutcome.SUCCESS
                record.success_iteration = k
                break
            if k < config.max_iterations:
                it.feedback_rendered = render_feedback(it, config.eval)
            prior = it
        else:
            record.outcome = TrialOutcome.FAILED_MAX_ITERATIONS
    except BackendError as exc:
        record.outcome = TrialOutcome.BACKEND_ERROR
        record.error = str(exc)
        log.error("trial stopped by backend error: %s", exc)
    record.finished_at = _now()
    if out_dir is not None:
        from psforge.orchestrator.persist import write_trial

        write_trial(record, out_dir)
    return record


class _Recording:
    """Backend wrapper that keeps every successful reply for later replay."""

    def __init__(self, inner: Backend, sink: list[str]):
        self.inner = inner
        self.name = getattr(inner, "name", "backend")
        self.sink = sink

    def complete(self, request: LlmRequest):
        response = self.inner.complete(request)
        self.sink.append(response.text)
        return response


def with_seed(config: TrialConfig, seed: int) -> TrialConfig:
    return replace(config, rng_seed=seed)


def run_trials(
    backend_factory: Callable[[], Backend],
    corpus: Optional[Corpus],
    config: TrialConfig,
    count: int,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
    sleep: Callable[[float], None] = time.sleep,
) -> list[TrialRecord]:
    """Run ``count`` independent trials with seeds ``rng_seed, rng_seed+1, ...``.

    Each trial gets its own backend from ``backend_factory``.  Results come
    back in seed order whatever the completion order was.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    configs = [with_seed(config, config.rng_seed + i) for i in range(count)]

    def one(cfg: TrialConfig) -> TrialRecord:
        return run_trial(backend_factory(), corpus, cfg, out_dir, sleep)

    if jobs <= 1:
        return [one(cfg) for cfg in configs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, configs))
