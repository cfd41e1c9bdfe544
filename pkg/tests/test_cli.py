"""End-to-end tests of the command-line pipeline."""

import hashlib
import json
from pathlib import Path

import pandas as pd
import pytest

from forexpulse.main import main


def _digests(directory: Path) -> dict[str, str]:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.iterdir())
        if p.is_file()
    }


def _inputs(directory: Path) -> list[str]:
    return [
        "--tweets", str(directory / "tweets.jsonl"),
        "--audit", str(directory / "audit.jsonl"),
        "--rates", str(directory / "rates.csv"),
        "--events", str(directory / "events.csv"),
    ]


def _show_config(capsys, argv) -> dict:
    assert main([*argv, "--show-config"]) == 0
    return json.loads(capsys.readouterr().out)


class TestConfiguration:
    def test_show_config_defaults(self, capsys):
        payload = _show_config(capsys, [])
        assert payload["config"]["dim"] == 2**18
        assert payload["config"]["groups"] == ["robot", "spammer", "company", "individual"]
        assert payload["group_rules"]["bot_rate"] == 0.75

    def test_precedence(self, capsys, monkeypatch, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"theta": 0.5, "folds": 5}))
        monkeypatch.setenv("FOREXPULSE_THETA", "0.3")
        monkeypatch.setenv("FOREXPULSE_EPOCHS", "7")

        assert _show_config(capsys, [])["config"]["theta"] == 0.3
        from_file = _show_config(capsys, ["--config", str(config)])["config"]
        assert (from_file["theta"], from_file["folds"], from_file["epochs"]) == (0.5, 5, 7)
        assert _show_config(capsys, ["--config", str(config), "--theta", "1.0"])["config"]["theta"] == 1.0

        monkeypatch.setenv("FOREXPULSE_CONFIG", str(config))
        assert _show_config(capsys, [])["config"]["theta"] == 0.5

    def test_groups_flag(self, capsys):
        payload = _show_config(capsys, ["--groups", "company,individual,company"])
        assert payload["config"]["groups"] == ["company", "individual"]

    @pytest.mark.parametrize(
        "argv",
        [
            ["--dim", "1000", "--show-config"],
            ["--folds", "1", "--show-config"],
            ["--lambda", "0", "--show-config"],
            ["--groups", "robots", "--show-config"],
            ["--bogus"],
            [],
            ["--config", "missing.json", "ingest"],
        ],
    )
    def test_invalid_configuration_exits_1(self, argv, capsys):
        assert main(argv) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_json_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text("{theta: 1")
        assert main(["--config", str(config), "ingest"]) == 1


class TestErrors:
    def test_missing_input_names_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.jsonl"
        assert main(["classify", "--tweets", str(missing), "--out", str(tmp_path / "out")]) == 1
        assert "nope.jsonl" in capsys.readouterr().err

    def test_required_input(self, tmp_path):
        assert main(["event-study", "--out", str(tmp_path)]) == 1

    def test_bad_rates_exit_2(self, synthetic_dir, tmp_path, capsys):
        rates = tmp_path / "rates.csv"
        rates.write_text("timestamp,price\n2014-01-02T10:01:00Z,1.1\n2014-01-02T10:00:00Z,1.1\n")
        argv = _inputs(synthetic_dir)
        argv[argv.index("--rates") + 1] = str(rates)
        assert main(["event-study", *argv, "--out", str(tmp_path / "out")]) == 2
        assert "non-monotonic at row 3" in capsys.readouterr().err

    def test_extra_csv_field_exit_2(self, synthetic_dir, tmp_path, capsys):
        events = tmp_path / "events.csv"
        events.write_text(
            "timestamp,source,description\n"
            "2014-01-15T19:00:00Z,FED,FOMC\n"
            "2014-02-01T12:45:00Z,ECB,Rate decision, February\n"
        )
        argv = _inputs(synthetic_dir)
        argv[argv.index("--events") + 1] = str(events)
        assert main(["event-study", *argv, "--out", str(tmp_path / "out")]) == 2
        assert "malformed CSV at row 3" in capsys.readouterr().err

    def test_unknown_author(self, synthetic_dir, tmp_path):
        argv = ["deletions", *_inputs(synthetic_dir), "--out", str(tmp_path), "--dim", "4096", "--author", "nobody"]
        assert main(argv) == 1


class TestSubcommands:
    @pytest.fixture(scope="class")
    def outputs(self, synthetic_dir, tmp_path_factory) -> Path:
        out = tmp_path_factory.mktemp("run")
        common = [*_inputs(synthetic_dir), "--out", str(out), "--dim", "4096", "--horizon", "240"]
        for command in ("ingest", "train", "eval", "classify", "report"):
            assert main([command, *common]) == 0, command
        assert main(["deletions", *common, "--author", "u0003"]) == 0
        return out

    def test_expected_files(self, outputs):
        names = {p.name for p in outputs.iterdir()}
        assert names == {
            "ingest_summary.json", "stance_model.txt", "eval_report.json", "tweet_stances.csv",
            "user_groups.csv", "group_report.csv", "car_curves.csv", "events_detail.csv",
            "deletion_histogram.csv", "deletion_profile.csv", "deletion_breakdown.csv",
            "deleted_stance.csv", "repost_clusters.csv", "car_comparison.csv", "author_breakdown.csv",
        }

    def test_ingest_summary(self, outputs, small_corpus):
        summary = json.loads((outputs / "ingest_summary.json").read_text())
        assert summary["tweets"] == len(small_corpus.tweets)
        assert summary["audit"]["deleted"] == small_corpus.ground_truth.deleted_total
        assert summary["events"] == len(small_corpus.events)

    def test_group_assignments(self, outputs, small_corpus):
        groups = pd.read_csv(outputs / "user_groups.csv", dtype={"author_id": str})
        assert dict(zip(groups["author_id"], groups["group"])) == {
            a: g.value for a, g in small_corpus.ground_truth.user_groups.items()
        }

    def test_eval_report(self, outputs):
        report = json.loads((outputs / "eval_report.json").read_text())
        assert len(report["folds"]) == 10
        assert report["params"]["dimension"] == 4096

    def test_breakdown_counts(self, outputs, small_corpus):
        breakdown = pd.read_csv(outputs / "deletion_breakdown.csv").set_index("category")["count"]
        truth = small_corpus.ground_truth
        assert breakdown["total"] == truth.deleted_total
        assert breakdown["typo"] == len(truth.typo_deletions)
        assert breakdown["unexplained"] == len(truth.unexplained_ids)

    def test_curves(self, outputs):
        curves = pd.read_csv(outputs / "car_curves.csv")
        assert list(curves.columns) == ["group", "class", "lag_min", "mean_car", "stderr", "n_events"]
        assert set(curves["group"]) <= {"robot", "spammer", "company", "individual"}


class TestDeterminism:
    def _full_run(self, root: Path, config: Path) -> dict[str, str]:
        root.mkdir()
        assert main(["synth", "--config", str(config), "--out", str(root)]) == 0
        common = [
            "--config", str(config), *_inputs(root), "--out", str(root), "--dim", "4096", "--horizon", "240",
        ]
        for command in ("ingest", "train", "eval", "classify", "report"):
            assert main([command, *common]) == 0, command
        return _digests(root)

    def test_two_runs_are_byte_identical(self, tmp_path, small_spec):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"synth": small_spec.model_dump(mode="json")}))
        first = self._full_run(tmp_path / "a", config)
        second = self._full_run(tmp_path / "b", config)
        assert len(first) == 19
        assert first == second

    def test_report_leaves_inputs_untouched(self, synthetic_dir, tmp_path):
        before = _digests(synthetic_dir)
        argv = ["report", *_inputs(synthetic_dir), "--out", str(tmp_path), "--dim", "4096"]
        assert main(argv) == 0
        assert _digests(synthetic_dir) == before
