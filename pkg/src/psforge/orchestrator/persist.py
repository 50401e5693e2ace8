"""On-disk layout of a trial: one directory per trial, one file per artifact."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from psforge.diagnostics import render_all


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _unique_dir(root: Path, seed: int) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    base = f"{stamp}-{seed}"
    for n in range(1000):
        candidate = root / (base if n == 0 else f"{base}.{n}")
        try:
            candidate.mkdir(parents=True)
            return candidate
        except FileExistsError:
            continue
    raise FileExistsError(f"could not allocate a trial directory under {root}")


def write_trial(record, root: Path) -> Path:
    """Write ``record`` to a fresh ``<root>/<timestamp>-<seed>/`` and return it.

    ``record.json`` is the complete, reloadable record.  The other files are
    the same information split up for people reading the directory.
    """
    directory = _unique_dir(Path(root), record.config.rng_seed)
    _dump(directory / "config.json", record.config.to_dict())
    for it in record.iterations:
        k = it.index
        (directory / f"prompt-{k}.txt").write_text(
            f"=== system ===\n{it.system_text}\n\n=== user ===\n{it.user_text}\n",
            encoding="utf-8")
        (directory / f"response-{k}.txt").write_text(it.raw_response, encoding="utf-8")
        if it.extracted_source is not None:
            (directory / f"game-{k}.txt").write_text(it.extracted_source, encoding="utf-8")
        lines = [f"repair: {r}" for r in it.repairs]
        diagnostics = render_all(it.syntax_diagnostics + it.compile_diagnostics)
        if diagnostics:
            lines.append(diagnostics.rstrip("\n"))
        (directory / f"diagnostics-{k}.txt").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        _dump(directory / f"eval-{k}.json", it.eval.to_dict() if it.eval else None)
    final = record.final_eval
    _dump(directory / "summary.json", {
        "outcome": record.outcome.value,
        "success_iteration": record.success_iteration,
        "iterations": len(record.iterations),
        "idea": record.idea,
        "fewshot_ids": record.fewshot_ids,
        "error": record.error,
        "final_eval": final.to_dict() if final else None,
        "started_at": record.started_at,
        "finished_at": record.finished_at,
    })
    _dump(directory / "session.json", {"responses": record.responses})
    (directory / "record.json").write_text(record.to_json(), encoding="utf-8")
    return directory


def load_trial(directory: Path):
    from psforge.orchestrator.trial import TrialRecord

    data = json.loads((Path(directory) / "record.json").read_text(encoding="utf-8"))
    return TrialRecord.from_dict(data)


def iter_trial_dirs(root: Path) -> Iterator[Path]:
    """Trial directories under ``root`` (or ``root`` itself if it is one), sorted."""
    root = Path(root)
    if (root / "record.json").is_file():
        yield root
        return
    for path in sorted(root.rglob("record.json")):
        yield path.parent


def load_trials(root: Path) -> list:
    return [load_trial(d) for d in iter_trial_dirs(root)]
