import json

import pytest

from tablecrew.cli import main
from tablecrew.fixtures import (
    CONCERT_SCHEMA,
    build_concert_fixture,
    build_training_fixture,
    concert_gold_table,
)
from tablecrew.skills.bank import SkillBank, append_skill, new_skill
from tablecrew.tables import Table, parse_table, render_table


def write_schema(path, schema):
    path.write_text(json.dumps({
        "columns": [{"name": n, "kind": k} for n, k in schema.columns],
    }), encoding="utf-8")


def test_score_success_exit_zero(tmp_path, capsys):
    gold = concert_gold_table()
    (tmp_path / "gold.md").write_text(render_table(gold), encoding="utf-8")
    (tmp_path / "pred.md").write_text(render_table(gold), encoding="utf-8")
    write_schema(tmp_path / "schema.json", CONCERT_SCHEMA)
    code = main(["score", "--pred", str(tmp_path / "pred.md"),
                 "--gold", str(tmp_path / "gold.md"),
                 "--schema", str(tmp_path / "schema.json")])
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert out["success"] is True
    assert out["item_f1"] == 1.0


def test_score_failure_exit_one(tmp_path, capsys):
    gold = concert_gold_table()
    rows = [list(gold.row_values(i)) for i in range(gold.row_count)]
    rows[0][1] = "Wrong Name"
    pred = Table.from_values(CONCERT_SCHEMA, rows)
    (tmp_path / "gold.md").write_text(render_table(gold), encoding="utf-8")
    (tmp_path / "pred.md").write_text(render_table(pred), encoding="utf-8")
    write_schema(tmp_path / "schema.json", CONCERT_SCHEMA)
    code = main(["score", "--pred", str(tmp_path / "pred.md"),
                 "--gold", str(tmp_path / "gold.md"),
                 "--schema", str(tmp_path / "schema.json")])
    out = json.loads(capsys.readouterr().out)
    assert code == 1
    assert out["success"] is False


def test_score_missing_file_exit_two(tmp_path, capsys):
    write_schema(tmp_path / "schema.json", CONCERT_SCHEMA)
    code = main(["score", "--pred", str(tmp_path / "nope.md"),
                 "--gold", str(tmp_path / "nope.md"),
                 "--schema", str(tmp_path / "schema.json")])
    assert code == 2
    assert "error" in json.loads(capsys.readouterr().out)


def test_infer_on_concert_fixture(tmp_path, capsys):
    fx = build_concert_fixture(tmp_path / "fx")
    run_dir = tmp_path / "run"
    code = main(["infer", "--config", str(fx.config_path),
                 "--query-file", str(_write_query(tmp_path, fx)),
                 "--schema", str(fx.schema_path),
                 "--out", str(run_dir)])
    out = capsys.readouterr().out
    assert code == 0
    table = parse_table(out, CONCERT_SCHEMA)
    assert table.row_count == 40
    # run directory is self-contained
    assert (run_dir / "board.md").exists()
    assert (run_dir / "output.md").exists()
    assert (run_dir / "query.txt").exists()
    assert list((run_dir / "traj").glob("*.jsonl"))


def _write_query(tmp_path, fx):
    qfile = tmp_path / "query.txt"
    qfile.write_text(fx.query.text, encoding="utf-8")
    return qfile


def test_infer_missing_corpus_is_config_error(tmp_path, capsys):
    fx = build_concert_fixture(tmp_path / "fx")
    bad = fx.config_path.read_text().replace('corpus = "corpus"', 'corpus = "absent"')
    fx.config_path.write_text(bad, encoding="utf-8")
    code = main(["infer", "--config", str(fx.config_path), "--query", "anything",
                 "--out", str(tmp_path / "run")])
    assert code == 2
    assert json.loads(capsys.readouterr().out)["error"]["kind"] == "config"


def test_infer_cold_start_with_fallback_router(tmp_path, capsys):
    root = tmp_path / "cold"
    root.mkdir()
    (root / "corpus").mkdir()
    (root / "orch.json").write_text(json.dumps({"entries": [{
        "pattern": "revenue per quarter",
        "responses": [json.dumps([{"instruction": "tabulate revenue per quarter",
                                   "partition": "all", "target_volume": [1, 3]}])],
    }]}), encoding="utf-8")
    table_text = "| Quarter | Revenue |\n| --- | --- |\n| Q1 | 10 |\n| Q2 | 20 |"
    (root / "worker.json").write_text(json.dumps({"entries": [{
        "pattern": r"Subtask t\d+: tabulate revenue",
        "responses": [json.dumps({"respond": table_text})],
    }]}), encoding="utf-8")
    (root / "config.toml").write_text(
        'seed = 1\n[banks]\norchestrator = "banks/o"\nworker = "banks/w"\n'
        '[environment]\nmode = "fixture"\ncorpus = "corpus"\n'
        '[backends.orchestrator]\nkind = "scripted"\nplaybook = "orch.json"\n'
        '[backends.worker]\nkind = "scripted"\nplaybook = "worker.json"\n',
        encoding="utf-8",
    )
    schema_file = root / "schema.json"
    schema_file.write_text(json.dumps({"columns": [
        {"name": "Quarter", "kind": "categorical"},
        {"name": "Revenue", "kind": "numeric"},
    ]}), encoding="utf-8")
    code = main(["infer", "--config", str(root / "config.toml"),
                 "--query", "tabulate revenue per quarter",
                 "--schema", str(schema_file),
                 "--out", str(tmp_path / "run")])
    assert code == 0
    assert "| Q1 | 10 |" in capsys.readouterr().out


def test_train_cli_writes_metrics_and_freezes(tmp_path, capsys):
    fx = build_training_fixture(tmp_path / "fx")
    out_dir = tmp_path / "out"
    code = main(["train", "--config", str(fx.config_path),
                 "--dataset", str(fx.dataset_path),
                 "--episodes", "2",
                 "--out", str(out_dir)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["episodes"] == 2
    records = [json.loads(line) for line in (out_dir / "metrics.jsonl").read_text().splitlines()]
    assert len(records) == 2
    assert SkillBank(tmp_path / "fx" / "banks" / "orchestrator").frozen


def test_train_cli_same_seed_reproduces(tmp_path):
    results = []
    for run in ("a", "b"):
        fx = build_training_fixture(tmp_path / run / "fx")
        out_dir = tmp_path / run / "out"
        code = main(["train", "--config", str(fx.config_path),
                     "--dataset", str(fx.dataset_path),
                     "--seed", "3",
                     "--out", str(out_dir)])
        assert code == 0
        orch = SkillBank(tmp_path / run / "fx" / "banks" / "orchestrator")
        results.append(((out_dir / "metrics.jsonl").read_bytes(), orch.content_hash()))
    assert results[0] == results[1]


def test_train_cli_malformed_gold_logged_and_continues(tmp_path, capsys):
    fx = build_training_fixture(tmp_path / "fx")
    data = json.loads(fx.dataset_path.read_text())
    data["tasks"][0]["gold"] = "not_a_table.md"
    (tmp_path / "fx" / "not_a_table.md").write_text("no pipes here", encoding="utf-8")
    fx.dataset_path.write_text(json.dumps(data), encoding="utf-8")
    out_dir = tmp_path / "out"
    code = main(["train", "--config", str(fx.config_path),
                 "--dataset", str(fx.dataset_path),
                 "--episodes", "2",
                 "--out", str(out_dir)])
    assert code == 0
    records = [json.loads(line) for line in (out_dir / "metrics.jsonl").read_text().splitlines()]
    assert records[0]["utility"] == 0.0
    assert records[0]["error"]
    assert records[1]["utility"] > 0.0


def test_skills_list_show_diff(tmp_path, capsys):
    bank_dir = tmp_path / "bank"
    bank = SkillBank(bank_dir)
    for name in ("alpha-skill", "beta-skill", "gamma-skill"):
        append_skill(bank, new_skill(name=name, kind="knowledge",
                                     description=f"{name} does things",
                                     body=f"body of {name}", created_by="t"))
    code = main(["skills", "list", "--banks", str(bank_dir)])
    out = capsys.readouterr().out
    assert code == 0
    assert len(out.strip().splitlines()) == 3

    code = main(["skills", "show", "alpha-skill", "--banks", str(bank_dir)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "body of alpha-skill"

    other_dir = tmp_path / "other"
    other = SkillBank(other_dir)
    append_skill(other, new_skill(name="alpha-skill", kind="knowledge",
                                  description="alpha-skill does things",
                                  body="body of alpha-skill", created_by="t"))
    code = main(["skills", "diff", "--banks", str(bank_dir), "--against", str(other_dir)])
    out = capsys.readouterr().out
    assert code == 0
    added = [line for line in out.splitlines() if line.startswith("+")]
    assert len(added) == 2  # beta + gamma


def test_skills_show_unknown_exit_one(tmp_path, capsys):
    bank_dir = tmp_path / "bank"
    SkillBank(bank_dir)
    code = main(["skills", "show", "ghost", "--banks", str(bank_dir)])
    assert code == 1


def test_replay_prints_trajectory(tmp_path, capsys):
    fx = build_concert_fixture(tmp_path / "fx")
    run_dir = tmp_path / "run"
    main(["infer", "--config", str(fx.config_path),
          "--query-file", str(_write_query(tmp_path, fx)),
          "--schema", str(fx.schema_path),
          "--out", str(run_dir)])
    capsys.readouterr()
    code = main(["replay", "--run", str(run_dir), "--worker", "t1",
                 "--corpus", str(fx.corpus_dir)])
    out = capsys.readouterr().out
    assert code == 0
    assert "tool_call search" in out
    assert "response" in out


def test_replay_missing_trajectory_exit_two(tmp_path, capsys):
    code = main(["replay", "--run", str(tmp_path), "--worker", "t1"])
    assert code == 2
