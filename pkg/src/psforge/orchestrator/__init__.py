"""Prompting, language-model backends and the iterative generation loop."""

from psforge.orchestrator.backends import (
    Backend,
    BackendError,
    BackendFatal,
    HttpBackend,
    LlmRequest,
    LlmResponse,
    ReplayBackend,
    ScriptedBackend,
    backend_from_spec,
    complete_with_retry,
)
from psforge.orchestrator.persist import load_trial, load_trials, write_trial
from psforge.orchestrator.prompts import Prompt, brainstorm_prompt, build_prompt, extract_code
from psforge.orchestrator.trial import (
    IterationRecord,
    TrialConfig,
    TrialOutcome,
    TrialRecord,
    brainstorm,
    render_feedback,
    run_trial,
    run_trials,
)

__all__ = [
    "Backend", "BackendError", "BackendFatal", "HttpBackend", "IterationRecord",
    "LlmRequest", "LlmResponse", "Prompt", "ReplayBackend", "ScriptedBackend",
    "TrialConfig", "TrialOutcome", "TrialRecord", "backend_from_spec", "brainstorm",
    "brainstorm_prompt", "build_prompt", "complete_with_retry", "extract_code",
    "load_trial", "load_trials", "render_feedback", "run_trial", "run_trials",
    "write_trial",
]
