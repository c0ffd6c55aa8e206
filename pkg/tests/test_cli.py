import json

import pandas as pd
import pytest

from src import __version__
from src.cli.config import DEFAULT_GRID, EXPERIMENT_KINDS, ExperimentConfig, GridSpec, parse_config
from src.cli.runner import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main
from src.core.errors import ConfigError

VASICEK_ARGS = ["dir-yields", "--market", "vasicek", "--r0", "1", "--b", "1.5", "--s", "1", "--t", "2",
                "--paths", "300", "--step", "0.25", "--seed", "42"]


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("DIRLAB_SEED", raising=False)


def read_manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


# ── Config ───────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("argv", [
    VASICEK_ARGS,
    ["dir-forwards", "--market", "exp-t2", "--s", "1", "--s-prime", "3", "--t", "1.5", "--t-prime", "2",
     "--grid", "10x1.5x8", "--delta", "0.1"],
    ["tail-bound", "--market", "vasicek", "--s", "1", "--t", "2", "--T", "10", "--ells", "0,0.5,3"],
    ["arbitrage", "--market", "flat", "--rate", "0.1", "--t", "0", "--T", "2", "--format", "json"],
])
def test_config_round_trip(argv):
    config = parse_config(argv)
    assert parse_config(config.to_argv()) == config
    assert ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config


def test_grid_spec():
    grid = GridSpec.parse("25x2x6")
    assert grid == DEFAULT_GRID and str(grid) == "25x2x6"
    assert grid.maturities() == [25.0, 50.0, 100.0, 200.0, 400.0, 800.0]
    assert str(GridSpec.parse("0.5x1.25x7")) == "0.5x1.25x7"
    for bad in ("25x2", "axbxc", "25x1x6", "25x2x5", "-1x2x6"):
        with pytest.raises(ConfigError):
            GridSpec.parse(bad)


@pytest.mark.parametrize("argv, field", [
    (["dir-yields", "--market", "vasicek", "--s", "1"], "t:"),
    (["dir-yields", "--market", "vasicek", "--s", "3", "--t", "2"], "s:"),
    (["dir-yields", "--market", "vasicek", "--s", "1", "--t", "30"], "grid:"),
    (["deflator-check", "--market", "vasicek", "--s", "2", "--t", "2", "--T", "5"], "s:"),
    (["arbitrage", "--market", "min-exp", "--t", "0", "--T", "1"], "T:"),
    (["equivalence", "--market", "flat", "--t", "1", "--t-prime", "1"], "t_prime:"),
    (["tail-bound", "--market", "vasicek", "--s", "0", "--t", "1", "--T", "2", "--paths", "0"], "paths:"),
    (["dir-yields", "--market", "flat", "--s", "0", "--t", "1", "--delta", "1.5"], "delta:"),
])
def test_validation_names_the_field(argv, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(argv)


# ── Runs and exit codes ──────────────────────────────────────────────────────

def test_run_writes_report_tables_and_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["dir-yields", "--market", "exp-t2", "--s", "1", "--t", "3", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["verdict"]["verdict"] == "bounded"
    assert report["manifest"] == "manifest.json"

    manifest = read_manifest(out)
    assert manifest["version"] == __version__
    assert manifest["violations"] == []
    assert set(manifest["artifacts"]) == {"quantiles.csv"}
    assert manifest["config"]["grid"] == "25x2x6"

    raw = (out / "quantiles.csv").read_bytes()
    assert raw.startswith(b"T,q_low,q_high,mean,se\r\n")
    assert len(pd.read_csv(out / "quantiles.csv")) == 6


def test_violation_exits_two(tmp_path):
    out = tmp_path / "flat"
    code = main(["arbitrage", "--market", "flat", "--rate", "0.03", "--t", "0", "--T", "3", "--out", str(out)])
    assert code == EXIT_VIOLATION
    assert read_manifest(out)["violations"]


def test_arbitrage_reproduction_exits_zero(tmp_path):
    out = tmp_path / "min-exp"
    assert main(["arbitrage", "--market", "min-exp", "--t", "1", "--T", "4", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["certificate"]["payoff_at_t_plus_1"] == pytest.approx(1.718281828459045, rel=1e-12)


def test_arbitrage_beyond_double_range_exits_with_a_code(tmp_path):
    out = tmp_path / "huge"
    code = main(["arbitrage", "--market", "exp-neg-t2", "--t", "0", "--T", "30", "--out", str(out)])
    assert code == EXIT_VIOLATION
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["certificate"]["entry_cost"] is None
    assert report["certificate"]["payoff_at_t_plus_1"] is None


@pytest.mark.parametrize("s, t", [("0", "1"), ("1", "4")])
def test_min_exp_yields_exit_zero(tmp_path, s, t):
    out = tmp_path / "min-exp"
    assert main(["dir-yields", "--market", "min-exp", "--s", s, "--t", t, "--out", str(out)]) == EXIT_OK
    assert read_manifest(out)["violations"] == []


@pytest.mark.parametrize("argv", [
    [],
    ["dir-yields", "--market", "nope", "--s", "0", "--t", "1"],
    ["dir-yields", "--market", "flat", "--s", "0", "--t", "1", "--paths", "many"],
    ["arbitrage", "--market", "min-exp", "--t", "0", "--T", "1"],
])
def test_usage_errors_exit_one(argv):
    assert main(argv) == EXIT_USAGE


def test_precondition_error_leaves_no_output(tmp_path):
    out = tmp_path / "nothing"
    code = main(["arbitrage", "--market", "vasicek", "--t", "0", "--T", "3", "--paths", "10", "--out", str(out)])
    assert code == EXIT_USAGE
    assert not out.exists()


def test_json_format_skips_tables(tmp_path):
    out = tmp_path / "json"
    assert main(["equivalence", "--market", "flat", "--t", "0", "--t-prime", "1", "--format", "json",
                 "--out", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "report.json"]
    assert read_manifest(out)["artifacts"] == {}


def test_environment_seed_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("DIRLAB_SEED", "7")
    out = tmp_path / "seeded"
    assert main(VASICEK_ARGS + ["--out", str(out)]) == EXIT_OK
    assert read_manifest(out)["config"]["seed"] == 7

    monkeypatch.setenv("DIRLAB_SEED", "seven")
    assert main(VASICEK_ARGS + ["--out", str(tmp_path / "bad")]) == EXIT_USAGE


# ── Replay ───────────────────────────────────────────────────────────────────

def test_replay_reproduces_tables(tmp_path, monkeypatch):
    out = tmp_path / "vasicek"
    assert main(VASICEK_ARGS + ["--out", str(out)]) == EXIT_OK
    # the manifest's seed wins over the environment on replay
    monkeypatch.setenv("DIRLAB_SEED", "99")
    assert main(["replay", str(out / "manifest.json")]) == EXIT_OK


def test_replay_detects_tampered_seed(tmp_path):
    out = tmp_path / "vasicek"
    assert main(VASICEK_ARGS + ["--out", str(out)]) == EXIT_OK
    manifest = read_manifest(out)
    manifest["config"]["seed"] = 43
    (out / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    assert main(["replay", str(out / "manifest.json")]) == EXIT_VIOLATION


def test_replay_rejects_bad_manifests(tmp_path):
    assert main(["replay", str(tmp_path / "missing.json")]) == EXIT_USAGE

    out = tmp_path / "flat"
    assert main(["equivalence", "--market", "flat", "--t", "0", "--t-prime", "1", "--out", str(out)]) == EXIT_OK
    manifest = read_manifest(out)
    manifest["version"] = "0.0.0"
    (out / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    assert main(["replay", str(out / "manifest.json")]) == EXIT_USAGE

    manifest["version"] = __version__
    manifest["config"]["colour"] = "blue"
    (out / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    assert main(["replay", str(out / "manifest.json")]) == EXIT_USAGE


def test_replay_refuses_manifest_without_tables(tmp_path):
    out = tmp_path / "json-only"
    assert main(VASICEK_ARGS + ["--format", "json", "--out", str(out)]) == EXIT_OK
    assert read_manifest(out)["artifacts"] == {}
    assert main(["replay", str(out / "manifest.json")]) == EXIT_USAGE

    manifest = read_manifest(out)
    manifest["config"]["seed"] = 43
    (out / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    assert main(["replay", str(out / "manifest.json")]) == EXIT_USAGE


# ── Batch ────────────────────────────────────────────────────────────────────

def test_batch_worst_exit_wins(tmp_path):
    configs = tmp_path / "configs.json"
    configs.write_text(json.dumps([
        {"name": "ok", "args": ["arbitrage", "--market", "min-exp", "--t", "0", "--T", "3"]},
        {"name": "costly", "args": ["arbitrage", "--market", "flat", "--rate", "0.03", "--t", "0", "--T", "3"]},
    ]), encoding="utf-8")
    out = tmp_path / "runs"
    assert main(["batch", str(configs), "--out", str(out), "--jobs", "2"]) == EXIT_VIOLATION
    assert (out / "ok" / "manifest.json").exists()
    assert read_manifest(out / "costly")["violations"]


def test_batch_rejects_malformed_files(tmp_path):
    assert main(["batch", str(tmp_path / "missing.json")]) == EXIT_USAGE
    empty = tmp_path / "empty.json"
    empty.write_text("[]", encoding="utf-8")
    assert main(["batch", str(empty)]) == EXIT_USAGE
    nameless = tmp_path / "nameless.json"
    nameless.write_text(json.dumps([{"args": ["arbitrage"]}]), encoding="utf-8")
    assert main(["batch", str(nameless), "--out", str(tmp_path / "runs")]) == EXIT_USAGE


# ── Listing ──────────────────────────────────────────────────────────────────

def test_list_prints_experiments(capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == list(EXPERIMENT_KINDS)

    assert main(["list", "--json"]) == EXIT_OK
    schemas = json.loads(capsys.readouterr().out)
    assert {entry["name"] for entry in schemas} == set(EXPERIMENT_KINDS)
    assert all(entry["input_schema"]["type"] == "object" for entry in schemas)
