from __future__ import annotations

import json
from pathlib import Path

from gabm.cli import main
from gabm.kernel import canonical_json

from test_trace import CONFIG, SCRIPT, write_scenario


def run_trace(tmp_path: Path) -> tuple[Path, Path]:
    config_path = write_scenario(tmp_path)
    out = tmp_path / "trace.jsonl"
    assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
    return config_path, out


def test_run_prints_summary_and_trace_path(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    printed = capsys.readouterr().out
    assert "records: 6" in printed
    assert "termination: max-steps" in printed
    assert f"trace: {out} (6 records)" in printed
    assert out.exists()


def test_run_honors_seed_and_step_overrides(tmp_path, capsys):
    config_path = write_scenario(tmp_path)
    out = tmp_path / "short.jsonl"
    code = main(
        ["run", "--config", str(config_path), "--out", str(out),
         "--seed", "9", "--max-steps", "1"]
    )
    assert code == 0
    header = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert header["seed"] == 9
    assert header["max_steps"] == 1
    assert "records: 4" in capsys.readouterr().out  # 1 round + 2 questionnaires


def test_run_rejects_invalid_config(tmp_path, capsys):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"seed": "seven", "agents": []}), encoding="utf-8")
    assert main(["run", "--config", str(config_path)]) == 1
    err = capsys.readouterr().err
    assert "seed" in err


def test_run_reports_missing_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_run_exits_two_on_aborted_episode(tmp_path, capsys):
    (tmp_path / "script.json").write_text(json.dumps({"default": ""}), encoding="utf-8")
    config_path = tmp_path / "scenario.json"
    config_path.write_text(json.dumps(CONFIG), encoding="utf-8")
    assert main(["run", "--config", str(config_path)]) == 2
    assert "episode aborted:" in capsys.readouterr().err


def test_validate_config_ok(tmp_path, capsys):
    config_path = write_scenario(tmp_path)
    assert main(["validate-config", "--config", str(config_path)]) == 0
    assert capsys.readouterr().out.strip() == "ok: seed=5 max_steps=2 agents=[Alice, Bob]"


def test_validate_config_lists_every_issue(tmp_path, capsys):
    raw = json.loads(json.dumps(CONFIG))
    raw["agents"][0]["name"] = ""
    raw["max_steps"] = 0
    config_path = tmp_path / "scenario.json"
    config_path.write_text(json.dumps(raw), encoding="utf-8")
    (tmp_path / "script.json").write_text(json.dumps(SCRIPT), encoding="utf-8")
    assert main(["validate-config", "--config", str(config_path)]) == 1
    err = capsys.readouterr().err
    assert "agents[0].name" in err
    assert "max_steps" in err
    assert "gm.components[0].endowments.Alice" in err  # orphaned by the blank name


def test_audit_renders_filtered_records(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    capsys.readouterr()
    code = main(["audit", "--trace", str(out), "--agent", "Bob", "--steps", "0:1",
                 "--search", "sells a bean"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "action: sells a bean" in printed
    assert "2 record(s) shown, 0 corrupt line(s) skipped" in printed
    assert "Alice" not in printed.replace("observed by Alice", "")


def test_audit_reports_corrupt_lines(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    lines = out.read_text(encoding="utf-8").splitlines()
    lines[4] = "garbage"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    capsys.readouterr()
    assert main(["audit", "--trace", str(out)]) == 0
    captured = capsys.readouterr()
    assert "line 5: corrupt record" in captured.err
    assert "5 record(s) shown, 1 corrupt line(s) skipped" in captured.out


def test_audit_extract_pairs_writes_jsonl(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    pairs_path = tmp_path / "pairs.jsonl"
    capsys.readouterr()
    code = main(["audit", "--trace", str(out), "--agent", "Alice",
                 "--extract-pairs", str(pairs_path)])
    assert code == 0
    assert f"wrote 3 record(s) worth of pairs to {pairs_path}" in capsys.readouterr().out
    rows = [json.loads(line) for line in pairs_path.read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 3
    assert rows[0]["actor"] == "Alice"


def test_audit_missing_trace(tmp_path, capsys):
    assert main(["audit", "--trace", str(tmp_path / "absent.jsonl")]) == 1
    assert "cannot read trace" in capsys.readouterr().err


def test_replay_ok(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    capsys.readouterr()
    assert main(["replay", "--trace", str(out)]) == 0
    assert "replay OK (6 records byte-identical)" in capsys.readouterr().out


def test_replay_divergence_exit_code(tmp_path, capsys):
    _, out = run_trace(tmp_path)
    lines = out.read_text(encoding="utf-8").splitlines()
    record = json.loads(lines[2])
    record["action"]["text"] = "did something else entirely"
    lines[2] = canonical_json(record)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    capsys.readouterr()
    assert main(["replay", "--trace", str(out)]) == 3
    assert "replay DIVERGED at step 0" in capsys.readouterr().err


def test_replay_unreadable_trace(tmp_path, capsys):
    assert main(["replay", "--trace", str(tmp_path / "absent.jsonl")]) == 1
    assert "cannot replay" in capsys.readouterr().err
