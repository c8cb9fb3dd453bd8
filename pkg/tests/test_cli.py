"""Tests for the command-line front end: flag parsing, config files, seed
resolution, output formats, exit codes, and the reproduction presets."""

import csv
import io
import json
import subprocess
import sys

import pytest

from simlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from simlab.engine import CSV_COLUMNS

from conftest import make_scenario


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(make_scenario(n=40).to_dict()))
    return str(path)


@pytest.fixture(autouse=True)
def clean_seed_env(monkeypatch):
    monkeypatch.delenv("SIMLAB_SEED", raising=False)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestRunCommand:
    def test_csv_to_stdout(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "4", "--seed", "3", "--quiet",
        ])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert captured.err == ""
        lines = captured.out.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        rows = _rows(captured.out)
        assert len(rows) == 1
        assert rows[0]["procedure"] == "crd"
        assert rows[0]["reps"] == "4"
        assert rows[0]["seed"] == "3"

    def test_progress_goes_to_stderr_not_stdout(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "4", "--seed", "3",
        ])
        captured = capsys.readouterr()
        assert code == EXIT_OK
        assert "replications" in captured.err
        assert captured.out.splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_json_format(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "4", "--seed", "3", "--format", "json", "--quiet",
        ])
        assert code == EXIT_OK
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 1
        assert list(rows[0].keys()) == list(CSV_COLUMNS)
        assert rows[0]["seed"] == 3

    def test_output_file(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "result.csv"
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "4", "--seed", "3", "--out", str(out), "--quiet",
        ])
        assert code == EXIT_OK
        assert capsys.readouterr().out == ""
        assert out.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_same_seed_is_byte_identical(self, scenario_file, capsys):
        args = [
            "run", "--scenario", scenario_file, "--procedure", "efron",
            "--reps", "5", "--seed", "5", "--quiet",
        ]
        main(args)
        first = capsys.readouterr().out
        main(args)
        second = capsys.readouterr().out
        assert first == second

    def test_different_seed_changes_results(self, scenario_file, capsys):
        base = [
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "5", "--quiet",
        ]
        main(base + ["--seed", "5"])
        first = capsys.readouterr().out
        main(base + ["--seed", "6"])
        second = capsys.readouterr().out
        assert first != second

    def test_bundled_scenario_by_name(self, capsys):
        code = main([
            "run", "--scenario", "model1", "--procedure", "crd",
            "--reps", "2", "--seed", "1", "--quiet",
        ])
        assert code == EXIT_OK
        rows = _rows(capsys.readouterr().out)
        assert rows[0]["n"] == "200"


class TestSeedResolution:
    def test_env_seed_used_when_flag_absent(self, scenario_file, capsys, monkeypatch):
        monkeypatch.setenv("SIMLAB_SEED", "9")
        main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--quiet",
        ])
        assert _rows(capsys.readouterr().out)[0]["seed"] == "9"

    def test_flag_beats_env(self, scenario_file, capsys, monkeypatch):
        monkeypatch.setenv("SIMLAB_SEED", "9")
        main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--seed", "4", "--quiet",
        ])
        assert _rows(capsys.readouterr().out)[0]["seed"] == "4"

    def test_scenario_seed_is_the_fallback(self, scenario_file, capsys):
        main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--quiet",
        ])
        assert _rows(capsys.readouterr().out)[0]["seed"] == "1"

    def test_bad_env_seed_is_config_error(self, scenario_file, capsys, monkeypatch):
        monkeypatch.setenv("SIMLAB_SEED", "lots")
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--quiet",
        ])
        assert code == EXIT_CONFIG


class TestErrorHandling:
    def test_missing_scenario_file(self, capsys):
        code = main([
            "run", "--scenario", "no-such-file.json", "--procedure", "crd",
            "--reps", "2", "--quiet",
        ])
        assert code == EXIT_CONFIG
        record = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert record["error"] == "config"

    def test_unknown_procedure(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "mystery",
            "--reps", "2", "--quiet",
        ])
        assert code == EXIT_CONFIG
        assert "mystery" in capsys.readouterr().err

    def test_bad_param_value(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "efron",
            "--param", "p=oops", "--reps", "2", "--quiet",
        ])
        assert code == EXIT_CONFIG

    def test_malformed_param(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "efron",
            "--param", "p0.75", "--reps", "2", "--quiet",
        ])
        assert code == EXIT_CONFIG

    def test_scenario_flag_required(self, capsys):
        code = main(["run", "--procedure", "crd", "--quiet"])
        assert code == EXIT_CONFIG

    def test_unwritable_output_is_runtime_error(self, scenario_file, capsys):
        code = main([
            "run", "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--out", "/no/such/directory/x.csv", "--quiet",
        ])
        assert code == EXIT_RUNTIME
        record = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert record["error"] == "runtime"


class TestConfigFile:
    def _config(self, tmp_path, scenario_file, **extra):
        doc = {
            "scenario": scenario_file,
            "procedure": "efron",
            "reps": 3,
            "seed": 11,
            **extra,
        }
        path = tmp_path / "study.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_config_supplies_flags(self, tmp_path, scenario_file, capsys):
        config = self._config(tmp_path, scenario_file)
        code = main(["run", "--config", config, "--quiet"])
        assert code == EXIT_OK
        row = _rows(capsys.readouterr().out)[0]
        assert row["procedure"] == "efron"
        assert row["seed"] == "11"
        assert row["reps"] == "3"

    def test_flags_override_config(self, tmp_path, scenario_file, capsys):
        config = self._config(tmp_path, scenario_file)
        code = main(["run", "--config", config, "--procedure", "crd", "--quiet"])
        assert code == EXIT_OK
        assert _rows(capsys.readouterr().out)[0]["procedure"] == "crd"

    def test_param_flag_overrides_config_params(self, tmp_path, scenario_file, capsys):
        # the config carries an out-of-range coin bias; the flag fixes it,
        # so success proves the flag won the merge
        config = self._config(tmp_path, scenario_file, params={"p": "0.3"})
        assert main(["run", "--config", config, "--quiet"]) == EXIT_CONFIG
        capsys.readouterr()
        code = main(["run", "--config", config, "--param", "p=0.75", "--quiet"])
        assert code == EXIT_OK

    def test_unknown_config_key(self, tmp_path, scenario_file, capsys):
        config = self._config(tmp_path, scenario_file, typo=1)
        assert main(["run", "--config", config, "--quiet"]) == EXIT_CONFIG

    def test_malformed_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("not json")
        assert main(["run", "--config", str(path), "--quiet"]) == EXIT_CONFIG


class TestReproduce:
    def test_rules_report(self, capsys):
        code = main(["reproduce", "s7-rules"])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert abs(report["balanced_expected_failures"] - 35.0) <= 1e-9
        assert [rule["target"] for rule in report["rules"]] == [
            "balanced", "neyman-logor", "failure-optimal-logor",
        ]

    def test_preset_runs_all_procedures(self, capsys):
        code = main(["reproduce", "t7-1", "--reps", "1", "--seed", "2", "--quiet"])
        assert code == EXIT_OK
        rows = _rows(capsys.readouterr().out)
        assert [row["procedure"] for row in rows] == [
            "crd", "spbd", "pocock-simon",
            "cara1", "cara2", "cara3", "cara4", "cara5",
        ]
        assert all(row["n"] == "200" for row in rows)

    def test_unknown_table_rejected(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["reproduce", "t9-9"])
        assert err.value.code == 2


def test_module_entrypoint_runs(scenario_file):
    proc = subprocess.run(
        [
            sys.executable, "-m", "simlab", "run",
            "--scenario", scenario_file, "--procedure", "crd",
            "--reps", "2", "--seed", "1", "--quiet",
        ],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == ",".join(CSV_COLUMNS)
