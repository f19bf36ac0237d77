import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from app.cli import cli

from conftest import scenario_toml


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "demo.toml"
    path.write_text(scenario_toml("demo", "flush-demo"), encoding="utf-8")
    return path


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "ERROR", *map(str, args)])


def test_calibrate_prints_profile(runner, config_file):
    result = invoke(runner, "calibrate", "--config", config_file)
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output[result.output.index("{"):])
    assert summary["K"] >= 2
    assert summary["flushing_passed"] is True


def test_run_then_verify(runner, config_file, tmp_path):
    out = tmp_path / "runs"
    result = invoke(runner, "run", "--config", config_file, "--out", out, "--threads", 2)
    assert result.exit_code == 0, result.output
    line = [row for row in result.output.splitlines() if row.startswith('{"path"')][-1]
    payload = json.loads(line)
    bundle = Path(payload["path"])
    assert payload["passed"] is True
    assert bundle.parent == out
    assert (bundle / "manifest.json").is_file()

    checked = invoke(runner, "verify", bundle)
    assert checked.exit_code in (0, 1)
    assert "flushing_profile" in checked.output
    assert "determinism" in checked.output
    assert (bundle / "verdict.json").is_file()


def test_bad_config_exits_with_2(runner, tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text('bogus = 1\n', encoding="utf-8")
    result = invoke(runner, "run", "--config", path)
    assert result.exit_code == 2
    assert "bogus" in result.output


def test_verify_without_manifest_exits_with_2(runner, tmp_path):
    result = invoke(runner, "verify", tmp_path)
    assert result.exit_code == 2
