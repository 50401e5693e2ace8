from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from conftest import CORPUS, GAMES, MINIMAL, REPAIR, game_text
from psforge.cli import main, read_config_file


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_valid_is_silent(capsys):
    assert run(capsys, "parse", GAMES / "corridor.txt") == (0, "", "")


def test_parse_ragged(tmp_path, capsys):
    path = tmp_path / "ragged.txt"
    path.write_text(MINIMAL.replace("P.\n", "P.\nP..\n"))
    code, out, _ = run(capsys, "parse", path)
    assert code == 1
    assert len(out.splitlines()) == 1 and "[RAGGED_LEVEL]" in out


def test_parse_repair_prints_source(capsys):
    code, out, err = run(capsys, "parse", "--repair", REPAIR / "fenced_prose.txt")
    assert code == 0
    assert out == game_text("sokoban_4")
    assert "extracted the fenced code block" in err


def test_parse_json(capsys):
    code, out, _ = run(capsys, "parse", "--json", "--repair", REPAIR / "missing_delimiters.txt")
    data = json.loads(out)
    assert code == 0 and data["ok"] and data["repairs"]


def test_parse_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "parse", tmp_path / "absent.txt")
    assert code == 2 and "cannot read" in err


def test_compile_ok_and_warning(tmp_path, capsys):
    path = tmp_path / "minimal.txt"
    path.write_text(MINIMAL)
    code, out, _ = run(capsys, "compile", path)
    assert code == 0 and "NO_WIN_CONDITION" in out and "(warning)" in out


def test_compile_missing_layer(tmp_path, capsys):
    path = tmp_path / "nolayer.txt"
    path.write_text(MINIMAL.replace("Background\nPlayer\n\n======", "Background\n\n======"))
    code, out, _ = run(capsys, "compile", path)
    assert code == 1 and "OBJECT_IN_NO_LAYER" in out


def test_solve_corridor(capsys):
    code, out, _ = run(capsys, "solve", GAMES / "corridor.txt")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("level 0: solved, length 4, nodes ")
    assert lines[1] == "solution: RRRR"


def test_solve_small_budget(capsys):
    code, out, _ = run(capsys, "solve", GAMES / "sprawl.txt", "--budget", 10)
    assert code == 1 and "budget_exceeded" in out and "nodes 10" in out


def test_solve_message_level(capsys):
    code, _, err = run(capsys, "solve", GAMES / "sokoban_micro.txt", "--level", 1)
    assert code == 2 and "message" in err


def test_solve_uncompilable(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("nothing here")
    assert run(capsys, "solve", path)[0] == 2


def test_play_replay_win(tmp_path, capsys):
    moves = tmp_path / "moves.txt"
    moves.write_text("R R\nR R\n")
    record = tmp_path / "record.txt"
    code, out, _ = run(capsys, "play", GAMES / "corridor.txt", "--replay", moves,
                       "--record", record)
    assert code == 0
    assert "complete in 4 moves" in out
    assert record.read_text() == "RRRR\n"


def test_play_replay_not_won(tmp_path, capsys):
    moves = tmp_path / "moves.txt"
    moves.write_text("RR")
    code, out, _ = run(capsys, "play", GAMES / "corridor.txt", "--replay", moves)
    assert code == 1 and "Not solved" in out


def test_play_bad_replay_letters(tmp_path, capsys):
    moves = tmp_path / "moves.txt"
    moves.write_text("RRQ")
    assert run(capsys, "play", GAMES / "corridor.txt", "--replay", moves)[0] == 2


def test_play_needs_terminal():
    proc = subprocess.run([sys.executable, "-m", "psforge", "play", str(GAMES / "corridor.txt")],
                          stdin=subprocess.DEVNULL, capture_output=True, text=True)
    assert proc.returncode == 2
    assert "interactive terminal" in proc.stderr


def test_generate_zero_trials(capsys):
    assert run(capsys, "generate", "--trials", 0)[0] == 2


def test_generate_bad_backend(capsys):
    code, _, err = run(capsys, "generate", "--backend", "smoke-signals")
    assert code == 2 and "backend" in err


def test_generate_http_without_key(monkeypatch, capsys):
    monkeypatch.delenv("PSFORGE_API_KEY", raising=False)
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    assert run(capsys, "generate", "--backend", "http")[0] == 2


def test_generate_fewshot_needs_corpus(tmp_path, capsys):
    script = tmp_path / "s.json"
    script.write_text(json.dumps(["x"]))
    assert run(capsys, "generate", "--fewshot", "--backend", f"mock:{script}")[0] == 2


def _mock_session(tmp_path, *replies):
    path = tmp_path / f"mock-{len(list(tmp_path.glob('mock-*.json')))}.json"
    path.write_text(json.dumps(list(replies)))
    return path


def test_generate_mock_success_and_failure(tmp_path, capsys):
    good = _mock_session(tmp_path, "```\n" + game_text("sokoban_13") + "```")
    code, out, _ = run(capsys, "generate", "--backend", f"mock:{good}", "--trials", 2,
                       "--out", tmp_path / "ok")
    assert code == 0
    assert out.count("success at iteration 1") == 2
    assert (tmp_path / "ok" / "summary.csv").is_file()
    bad = _mock_session(tmp_path, "prose")
    code, out, _ = run(capsys, "generate", "--backend", f"mock:{bad}", "--max-iterations", 2,
                       "--out", tmp_path / "bad")
    assert code == 1 and "failed_max_iterations" in out


def test_config_file_and_flag_precedence(tmp_path, capsys):
    session = _mock_session(tmp_path, "prose")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# sweep cell\nbackend = mock:{session}\nfewshot = true\n"
                   f"corpus = {CORPUS}\ncontext-budget = 1,000\nmax_iterations = 1\n"
                   f"out = {tmp_path / 'cfg'}\nseed = 3\n")
    code, _, _ = run(capsys, "generate", "--config", cfg, "--seed", 5)
    assert code == 1
    (trial_dir,) = list((tmp_path / "cfg").glob("*-5"))
    config = json.loads((trial_dir / "config.json").read_text())
    assert config["fewshot"] is True
    assert config["context_budget"] == 1000
    assert config["rng_seed"] == 5


def test_config_file_errors(tmp_path):
    from psforge.cli import UsageError

    path = tmp_path / "c.cfg"
    path.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config_file(str(path))
    path.write_text("fewshot = maybe\n")
    with pytest.raises(UsageError):
        read_config_file(str(path))
    path.write_text("just words\n")
    with pytest.raises(UsageError):
        read_config_file(str(path))


def test_report_tables(tmp_path, capsys):
    good = _mock_session(tmp_path, "```\n" + game_text("sokoban_13") + "```")
    bad = _mock_session(tmp_path, "prose")
    run(capsys, "generate", "--backend", f"mock:{good}", "--trials", 3, "--cot",
        "--out", tmp_path / "runs")
    run(capsys, "generate", "--backend", f"mock:{bad}", "--trials", 2, "--max-iterations", 1,
        "--out", tmp_path / "runs")
    code, out, _ = run(capsys, "report", "--trials", tmp_path / "runs", "--group-by", "fewshot,cot")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["fewshot/cot", "Trials", "Compiles", "Any", "Solvable", "All",
                                "Solvable", "Sol.", "Complexity"]
    assert lines[2].split()[:5] == ["F/T", "3", "100%", "100%", "100%"]
    assert lines[3].split()[:5] == ["F/F", "2", "0%", "0%", "0%"]
    code, out, _ = run(capsys, "report", "--trials", tmp_path / "runs", "--csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][2:] == ["Compiles", "Any Solvable", "All Solvable", "Sol. Complexity"]
    assert rows[1][:3] == ["all", "5", "60%"]


def test_report_without_records(tmp_path, capsys):
    assert run(capsys, "report", "--trials", tmp_path)[0] == 2


def test_report_unknown_group_key(tmp_path, capsys):
    good = _mock_session(tmp_path, "```\n" + game_text("sokoban_13") + "```")
    run(capsys, "generate", "--backend", f"mock:{good}", "--out", tmp_path / "runs")
    assert run(capsys, "report", "--trials", tmp_path / "runs", "--group-by", "flavour")[0] == 2


def test_usage_error_exit_code(capsys):
    assert main(["solve"]) == 2
    assert main(["frobnicate"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "psforge", "solve",
                           str(GAMES / "corridor.txt")], capture_output=True, text=True)
    assert proc.returncode == 0 and "solution: RRRR" in proc.stdout
