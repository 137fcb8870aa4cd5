"""CLI tests: each command runs against the in-process service."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from ego3d.cli import main
from ego3d.qagen import scene_to_dict

from conftest import demo_scene
from test_service import rig_fixture


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene_to_dict(demo_scene())), encoding="utf-8")
    return path


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.stderr or result.output
    return result


def gen_qa_file(runner, scene_file, tmp_path, seed="0"):
    out = tmp_path / "qa.jsonl"
    run_ok(runner, ["gen-qa", "--scenes", str(scene_file), "--out", str(out), "--seed", seed])
    return out


class TestGenQA:
    def test_writes_jsonl_and_manifest(self, runner, scene_file, tmp_path):
        out = gen_qa_file(runner, scene_file, tmp_path)
        lines = out.read_text().strip().split("\n")
        assert len(lines) > 50
        assert all(json.loads(line)["id"] for line in lines)

        manifest = json.loads(Path(f"{out}.manifest.json").read_text())
        assert manifest["command"] == "gen-qa"
        assert manifest["seed"] == 0
        assert str(scene_file) in manifest["input_hashes"]
        assert manifest["versions"]["ego3d"]

    def test_reruns_are_byte_identical(self, runner, scene_file, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        first = gen_qa_file(runner, scene_file, tmp_path / "a", seed="9")
        second = gen_qa_file(runner, scene_file, tmp_path / "b", seed="9")
        assert first.read_bytes() == second.read_bytes()

    def test_stdout_when_no_out(self, runner, scene_file):
        result = run_ok(
            runner,
            ["gen-qa", "--scenes", str(scene_file), "--categories", "Localization"],
        )
        rows = [json.loads(line) for line in result.stdout.strip().split("\n")]
        assert rows and all(r["category"] == "Localization" for r in rows)

    def test_seed_from_config_file(self, runner, scene_file, tmp_path):
        config = tmp_path / "ego3d.toml"
        config.write_text("[generation]\nseed = 31\n", encoding="utf-8")
        out = tmp_path / "qa.jsonl"
        run_ok(
            runner,
            ["--config", str(config), "gen-qa", "--scenes", str(scene_file),
             "--out", str(out)],
        )
        manifest = json.loads(Path(f"{out}.manifest.json").read_text())
        assert manifest["seed"] == 31

    def test_missing_scene_file_is_usage_error(self, runner):
        result = runner.invoke(main, ["gen-qa", "--scenes", "/no/such.json"])
        assert result.exit_code == 2


class TestCogmap:
    def test_from_located_file(self, runner, tmp_path):
        located = tmp_path / "located.json"
        located.write_text(
            json.dumps(
                [{"expression": "red sedan", "view": "Front", "position": [0, 0, 12]}]
            )
        )
        result = run_ok(runner, ["cogmap", "--located", str(located)])
        assert result.stdout.startswith("ego at origin")
        assert "'red sedan' at (0.0, 0.0, 12.0)" in result.stdout

    def test_from_images_with_fixture_backend(self, runner, tmp_path):
        spec = rig_fixture(tmp_path)
        images_dir = Path(next(iter(spec["images"].values()))).parent
        out = tmp_path / "map.svg"
        run_ok(
            runner,
            ["cogmap", "--images", str(images_dir),
             "--expr", "red sedan", "--expr", "person",
             "--estimate-calib", "90", "--width", "1600", "--height", "900",
             "--rec-url", spec["rec"]["base_url"],
             "--depth-url", spec["depth"]["base_url"],
             "--format", "svg", "--out", str(out)],
        )
        assert out.read_text().startswith("<svg")

    def test_expressions_pulled_from_qa_file(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        spec = rig_fixture(tmp_path)
        images_dir = Path(next(iter(spec["images"].values()))).parent
        result = run_ok(
            runner,
            ["cogmap", "--images", str(images_dir), "--from-qa", str(qa),
             "--estimate-calib", "90",
             "--rec-url", spec["rec"]["base_url"],
             "--depth-url", spec["depth"]["base_url"]],
        )
        # the demo scene's sedan is also in the backend fixture
        assert "red sedan" in result.stdout

    def test_needs_exactly_one_source(self, runner, tmp_path):
        result = runner.invoke(main, ["cogmap"])
        assert result.exit_code == 2
        assert "exactly one" in result.stderr


def evaluate_oracle(runner, scene_file, qa, out, extra=()):
    return run_ok(
        runner,
        ["evaluate", "--qa", str(qa), "--mode", "blind-cogmap", "--mock", "oracle",
         "--scenes", str(scene_file), "--out", str(out), *extra],
    )


class TestEvaluate:
    def test_oracle_end_to_end(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        preds = tmp_path / "preds.jsonl"
        evaluate_oracle(runner, scene_file, qa, preds)
        rows = [json.loads(line) for line in preds.read_text().strip().split("\n")]
        assert len(rows) == len(qa.read_text().strip().split("\n"))
        ids = [r["qa_id"] for r in rows]
        assert ids == sorted(ids)

    def test_resume_skips_done_items(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        preds = tmp_path / "preds.jsonl"
        evaluate_oracle(runner, scene_file, qa, preds)
        before = preds.read_bytes()
        result = evaluate_oracle(runner, scene_file, qa, preds, extra=["--resume"])
        assert "(0 new" in result.stderr
        assert preds.read_bytes() == before

    def test_partial_failure_exits_4(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        first_id = json.loads(qa.read_text().split("\n", 1)[0])["id"]
        replies = tmp_path / "replies.json"
        replies.write_text(json.dumps({first_id: "<answer>B</answer>"}))
        preds = tmp_path / "preds.jsonl"
        result = runner.invoke(
            main,
            ["evaluate", "--qa", str(qa), "--mode", "blind", "--mock", "scripted",
             "--replies", str(replies), "--out", str(preds)],
        )
        assert result.exit_code == 4
        assert "failed" in result.stderr
        rows = preds.read_text().strip().split("\n")
        assert len(rows) == 1

    def test_needs_backend_or_mock(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        result = runner.invoke(main, ["evaluate", "--qa", str(qa), "--mode", "blind"])
        assert result.exit_code == 2
        assert "--vlm-url or --mock" in result.stderr


class TestReportAndChance:
    def test_report_summarizes_oracle_run(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        preds = tmp_path / "preds.jsonl"
        evaluate_oracle(runner, scene_file, qa, preds)
        report = tmp_path / "report.json"
        csv_path = tmp_path / "report.csv"
        result = run_ok(
            runner,
            ["report", "--preds", str(preds), "--qa", str(qa),
             "--mode", "blind-cogmap", "--model", "oracle",
             "--out", str(report), "--csv", str(csv_path)],
        )
        assert "avg accuracy 100.0%" in result.stderr
        body = json.loads(report.read_text())
        assert body["averages"]["accuracy_pct"] == pytest.approx(100.0)
        assert csv_path.read_text().startswith("mode,model,")

    def test_chance_prints_buckets(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        result = run_ok(runner, ["chance", "--qa", str(qa), "--trials", "50"])
        buckets = json.loads(result.stdout)
        assert "localization" in buckets
        assert 0.0 <= buckets["localization"] <= 100.0

    def test_unreachable_server_exits_3(self, runner, scene_file, tmp_path):
        qa = gen_qa_file(runner, scene_file, tmp_path)
        result = runner.invoke(
            main,
            ["--server", "http://127.0.0.1:1", "chance", "--qa", str(qa)],
        )
        assert result.exit_code == 3
        assert "cannot reach server" in result.stderr

    def test_server_url_from_config(self, runner, scene_file, tmp_path):
        config = tmp_path / "ego3d.toml"
        config.write_text('[server]\nurl = "http://127.0.0.1:1"\n', encoding="utf-8")
        qa = gen_qa_file(runner, scene_file, tmp_path)
        result = runner.invoke(
            main, ["--config", str(config), "chance", "--qa", str(qa)]
        )
        assert result.exit_code == 3
