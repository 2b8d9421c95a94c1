"""End-to-end CLI coverage for all five subcommands and exit codes."""

from __future__ import annotations

import json

import pytest
import synth

from xbench.cli import EXIT_DATA, EXIT_OK, EXIT_SERVICE, EXIT_USAGE, main


@pytest.fixture
def workspace(tmp_path):
    schema_path = tmp_path / "credit.json"
    schema_path.write_text(synth.schema_text("credit"))
    node = synth.parsed("credit")
    gold = synth.synth_gold(node, seed=6)
    gold_path = tmp_path / "gold.json"
    gold_path.write_text(json.dumps(gold))
    pred_path = tmp_path / "pred.json"
    wrong = json.loads(json.dumps(gold))
    wrong["secured"] = not wrong["secured"]
    pred_path.write_text(json.dumps(wrong))
    return tmp_path, schema_path, gold_path, pred_path, gold


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidate:
    def test_lists_positions_and_profile(self, workspace, capsys):
        _, schema_path, *_ = workspace
        code, out, _ = run_cli(capsys, "validate", str(schema_path))
        assert code == EXIT_OK
        payload = json.loads(out)
        assert len(payload["positions"]) == 13
        assert payload["profile"] == {"breadth": 13, "depth": 3, "array_count": 2}
        paths = [p["path"] for p in payload["positions"]]
        assert "interest.base_rate" in paths and "lenders" in paths

    def test_missing_file_is_usage_error(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "validate", str(tmp_path / "ghost.json"))
        assert code == EXIT_USAGE and "ghost.json" in err

    def test_bad_schema_is_data_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"type": "object", "properties": {"x": {"type": "string", "pattern": "x"}}}')
        code, _, err = run_cli(capsys, "validate", str(bad))
        assert code == EXIT_DATA and "pattern" in err


class TestEvaluate:
    def test_report_to_stdout(self, workspace, capsys):
        _, schema_path, gold_path, pred_path, _ = workspace
        code, out, _ = run_cli(
            capsys, "evaluate",
            "--schema", str(schema_path), "--gold", str(gold_path), "--pred", str(pred_path),
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["counts"]["positions"] == 13
        assert report["counts"]["mismatches"] == 1
        assert report["valid"] is True

    def test_config_file_honored(self, workspace, capsys, tmp_path):
        _, schema_path, gold_path, _, gold = workspace
        # gold omits one key; skip policy must lift the pass rate to 1.0
        partial_gold = {k: v for k, v in gold.items() if k != "secured"}
        partial_path = tmp_path / "partial_gold.json"
        partial_path.write_text(json.dumps(partial_gold))
        pred_path = tmp_path / "full_pred.json"
        pred_path.write_text(json.dumps(gold))
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"gold_missing_policy": "skip"}))
        code, out, _ = run_cli(
            capsys, "evaluate",
            "--schema", str(schema_path), "--gold", str(partial_path),
            "--pred", str(pred_path), "--config", str(config_path),
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["counts"]["skipped"] == 1
        assert report["pass_rate"] == 1.0

    def test_unknown_config_key_is_data_error(self, workspace, capsys, tmp_path):
        _, schema_path, gold_path, pred_path, _ = workspace
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"passthreshold": 0.5}))
        code, _, err = run_cli(
            capsys, "evaluate",
            "--schema", str(schema_path), "--gold", str(gold_path),
            "--pred", str(pred_path), "--config", str(config_path),
        )
        assert code == EXIT_DATA

    def test_invalid_gold_is_data_error(self, workspace, capsys, tmp_path):
        _, schema_path, _, pred_path, _ = workspace
        bad_gold = tmp_path / "bad_gold.json"
        bad_gold.write_text(json.dumps({"borrower": 7, "facility_amount": "x"}))
        code, _, err = run_cli(
            capsys, "evaluate",
            "--schema", str(schema_path), "--gold", str(bad_gold), "--pred", str(pred_path),
        )
        assert code == EXIT_DATA and "gold" in err.lower()

    def test_missing_required_flag_is_usage_error(self, workspace, capsys):
        _, schema_path, *_ = workspace
        code, _, _ = run_cli(capsys, "evaluate", "--schema", str(schema_path))
        assert code == EXIT_USAGE


@pytest.fixture
def run_workspace(workspace, tmp_path):
    base, schema_path, gold_path, _, gold = workspace
    responses = {"doc0": json.dumps(gold), "doc1": '{"broken'}
    rows = [
        {"document": str(base / f"doc{i}.pdf"), "schema": str(schema_path),
         "gold": str(gold_path), "provider": "mock", "model": "m1"}
        for i in range(2)
    ]
    manifest_path = base / "manifest.json"
    manifest_path.write_text(json.dumps(rows))
    config_path = base / "config.json"
    config_path.write_text(json.dumps({
        "pass_threshold": 0.7,
        "providers": {"mock": {"kind": "mock", "responses": responses}},
    }))
    return base, manifest_path, config_path


class TestRunAndScore:
    def test_run_writes_records(self, run_workspace, capsys):
        base, manifest_path, config_path = run_workspace
        out_dir = base / "run"
        code, out, _ = run_cli(
            capsys, "run",
            "--manifest", str(manifest_path), "--out", str(out_dir), "--config", str(config_path),
        )
        assert code == EXIT_OK
        assert "2 outcome records" in out
        assert len(list(out_dir.glob("*.json"))) == 2

    def test_run_without_providers_is_data_error(self, run_workspace, capsys):
        base, manifest_path, _ = run_workspace
        code, _, err = run_cli(capsys, "run", "--manifest", str(manifest_path), "--out", str(base / "r2"))
        assert code == EXIT_DATA and "provider" in err

    def test_score_markdown_to_stdout(self, run_workspace, capsys):
        base, manifest_path, config_path = run_workspace
        out_dir = base / "run"
        run_cli(capsys, "run", "--manifest", str(manifest_path), "--out", str(out_dir),
                "--config", str(config_path))
        code, out, _ = run_cli(capsys, "score", "--run", str(out_dir))
        assert code == EXIT_OK
        assert out.startswith("| Model |")
        assert "| m1 | 1/2 |" in out
        assert "TruncatedJson" in out

    def test_score_format_inferred_from_extension(self, run_workspace, capsys):
        base, manifest_path, config_path = run_workspace
        out_dir = base / "run"
        run_cli(capsys, "run", "--manifest", str(manifest_path), "--out", str(out_dir),
                "--config", str(config_path))
        report_path = base / "report.csv"
        code, out, _ = run_cli(capsys, "score", "--run", str(out_dir), "--out", str(report_path))
        assert code == EXIT_OK
        assert report_path.read_text().startswith("Model,Valid JSON,credit")
        json_path = base / "report.json"
        run_cli(capsys, "score", "--run", str(out_dir), "--out", str(json_path))
        parsed = json.loads(json_path.read_text())
        assert parsed["models"] == ["m1"]

    def test_score_manifest_cross_check(self, run_workspace, capsys):
        base, manifest_path, config_path = run_workspace
        out_dir = base / "run"
        run_cli(capsys, "run", "--manifest", str(manifest_path), "--out", str(out_dir),
                "--config", str(config_path))
        code, _, _ = run_cli(capsys, "score", "--run", str(out_dir), "--manifest", str(manifest_path))
        assert code == EXIT_OK
        rows = json.loads(manifest_path.read_text())
        rows.append(dict(rows[0], document=str(base / "doc9.pdf")))
        bigger = base / "bigger.json"
        bigger.write_text(json.dumps(rows))
        code, _, err = run_cli(capsys, "score", "--run", str(out_dir), "--manifest", str(bigger))
        assert code == EXIT_DATA and "manifest" in err.lower()

    def test_run_resume_is_idempotent(self, run_workspace, capsys):
        base, manifest_path, config_path = run_workspace
        out_dir = base / "run"
        args = ("run", "--manifest", str(manifest_path), "--out", str(out_dir),
                "--config", str(config_path))
        run_cli(capsys, *args)
        before = {p.name: p.read_text() for p in out_dir.glob("*.json")}
        run_cli(capsys, *args)
        after = {p.name: p.read_text() for p in out_dir.glob("*.json")}
        assert before == after


class TestAnalyze:
    def test_schema_profile_only(self, workspace, capsys):
        _, schema_path, *_ = workspace
        code, out, _ = run_cli(capsys, "analyze", "--schema", str(schema_path))
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["schema_profile"]["breadth"] == 13
        assert "instance_profile" not in payload

    def test_gold_profile(self, workspace, capsys):
        _, schema_path, gold_path, *_ = workspace
        code, out, _ = run_cli(capsys, "analyze", "--schema", str(schema_path), "--gold", str(gold_path))
        payload = json.loads(out)
        assert payload["instance_profile"]["populated_fields"] == 11
        assert payload["instance_profile"]["output_tokens"] > 0

    def test_tokens_csv(self, workspace, capsys, tmp_path):
        _, schema_path, *_ = workspace
        tokens = tmp_path / "tokens.csv"
        tokens.write_text('Document,Input,Output\nd1,"1,000",100\nd2,2000,100\n')
        code, out, _ = run_cli(capsys, "analyze", "--schema", str(schema_path), "--tokens", str(tokens))
        payload = json.loads(out)
        assert payload["compression"]["ratios"] == [10.0, 20.0]
        assert payload["compression"]["mean"] == 15.0

    def test_tokens_json(self, workspace, capsys, tmp_path):
        _, schema_path, *_ = workspace
        tokens = tmp_path / "tokens.json"
        tokens.write_text(json.dumps([[1000, 100], {"Input": 2000, "Output": 100}]))
        code, out, _ = run_cli(capsys, "analyze", "--schema", str(schema_path), "--tokens", str(tokens))
        assert json.loads(out)["compression"]["mean"] == 15.0

    def test_zero_output_tokens_is_data_error(self, workspace, capsys, tmp_path):
        _, schema_path, *_ = workspace
        tokens = tmp_path / "tokens.csv"
        tokens.write_text("Input,Output\n100,0\n")
        code, _, err = run_cli(capsys, "analyze", "--schema", str(schema_path), "--tokens", str(tokens))
        assert code == EXIT_DATA


class TestExitCodes:
    def test_no_command_is_usage(self, capsys):
        assert run_cli(capsys)[0] == EXIT_USAGE

    def test_unknown_command_is_usage(self, capsys):
        assert run_cli(capsys, "frobnicate")[0] == EXIT_USAGE

    def test_unknown_flag_is_usage(self, workspace, capsys):
        _, schema_path, *_ = workspace
        code, _, _ = run_cli(capsys, "validate", str(schema_path), "--frobnicate")
        assert code == EXIT_USAGE

    def test_service_failure_maps_to_three(self, workspace, capsys, tmp_path, monkeypatch):
        _, schema_path, gold_path, pred_path, gold = workspace
        # force the semantic metric through an http judge pointed at a dead port
        config_path = tmp_path / "judge_config.json"
        config_path.write_text(json.dumps({
            "judge": {"kind": "http", "endpoint": "http://127.0.0.1:1/x", "timeout": 0.2,
                      "max_retries": 0},
        }))
        wrong = json.loads(json.dumps(gold))
        wrong["governing_law"] = "somewhere else entirely"
        pred2 = tmp_path / "pred2.json"
        pred2.write_text(json.dumps(wrong))
        code, _, err = run_cli(
            capsys, "evaluate",
            "--schema", str(schema_path), "--gold", str(gold_path),
            "--pred", str(pred2), "--config", str(config_path),
        )
        assert code == EXIT_SERVICE
        assert "external service" in err
