"""Config validation, resumable execution, budgets, and sweeps."""

import json
from pathlib import Path

import pytest

from audiottc.runner import (
    ConfigError,
    load_records,
    resume,
    run_experiment,
    run_sweep,
    validate_config,
)
from audiottc.trials import TaskKind, save_trial
from conftest import make_trial

BASE_CONFIG = """
seed = 7
output_dir = "{out}"
trial_dir = "{trials}"
max_concurrency = {concurrency}
{budget}

[[backends]]
id = "oracle"
kind = "simulated"
model = "sim-1"
seed = 3
accuracy = {{ task1_event = 0.9, task2_speech = 0.7, task3_overlap = 0.5 }}
verbosity = 0.3

[[backends]]
id = "judge"
kind = "simulated-verifier"
seed = 4

{strategies}
{sweep}
"""

ALL_STRATEGIES = """
[[strategies]]
kind = "no-ttc"

[[strategies]]
kind = "cot"

[[strategies]]
kind = "majority"

[[strategies]]
kind = "bs-w"
beam_width = 4

[[strategies]]
kind = "llm-top1"
beam_width = 4
verifier = "judge"

[[strategies]]
kind = "llm-w"
beam_width = 4
verifier = "judge"
"""


def write_trials(trial_dir: Path, n=6):
    trial_dir.mkdir(parents=True, exist_ok=True)
    kinds = [TaskKind.TASK1_EVENT, TaskKind.TASK2_SPEECH, TaskKind.TASK3_OVERLAP]
    for i in range(n):
        trial = make_trial(
            trial_id=f"trial-{i:03d}",
            task_kind=kinds[i % 3],
            question=f"Which digit was spoken in trial {i}?",
            options=("A", "B", "C", "D"),
            ground_truth=i % 4,
            metadata={"template": "synthetic"},
        )
        save_trial(trial, trial_dir)


def write_config(tmp_path: Path, strategies=ALL_STRATEGIES, sweep="", budget="", concurrency=2, n_trials=6):
    write_trials(tmp_path / "trials", n=n_trials)
    config_path = tmp_path / "config.toml"
    config_path.write_text(
        BASE_CONFIG.format(
            out="run", trials="trials", strategies=strategies, sweep=sweep,
            budget=budget, concurrency=concurrency,
        )
    )
    return config_path


def test_validate_good_config(tmp_path):
    config = validate_config(write_config(tmp_path))
    assert len(config.backends) == 2
    assert len(config.strategies) == 6


def test_bsw_rejected_on_sample_only_backend(tmp_path):
    config_path = write_config(tmp_path, strategies='[[strategies]]\nkind = "bs-w"\n')
    text = config_path.read_text().replace(
        'verbosity = 0.3', 'verbosity = 0.3\ncapabilities = ["sample"]'
    )
    # simulated backends ignore declared capabilities, so use an http stub instead
    text = text.replace('kind = "simulated"', 'kind = "http"\nbase_url = "http://x"')
    config_path.write_text(text)
    with pytest.raises(ConfigError, match="bs-w"):
        validate_config(config_path)


def test_temperature_grid_outside_backend_range(tmp_path):
    config_path = write_config(
        tmp_path,
        strategies='[[strategies]]\nkind = "majority"\n',
    )
    text = config_path.read_text().replace(
        'verbosity = 0.3', 'verbosity = 0.3\ntemperature_range = [0.0, 1.9]'
    )
    config_path.write_text(text)
    with pytest.raises(ConfigError, match="2.0"):
        validate_config(config_path)


def test_missing_verifier_for_llm_strategy(tmp_path):
    config_path = write_config(tmp_path, strategies='[[strategies]]\nkind = "llm-top1"\n')
    with pytest.raises(ConfigError, match="verifier"):
        validate_config(config_path)


def test_unknown_strategy_kind_names_field(tmp_path):
    config_path = write_config(tmp_path, strategies='[[strategies]]\nkind = "wat"\n')
    with pytest.raises(ConfigError, match=r"strategies\[0\].kind"):
        validate_config(config_path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        validate_config(tmp_path / "none.toml")


def test_full_run_produces_all_records(tmp_path):
    config = validate_config(write_config(tmp_path))
    summary = run_experiment(config)
    assert summary.completed == 36  # 6 trials x 6 strategies
    assert not summary.failed
    records = load_records(Path(summary.records_path))
    assert len(records) == 36
    keys = {(r["trial_id"], r["strategy"]) for r in records}
    assert len(keys) == 36


def test_rerun_is_noop_with_zero_calls(tmp_path):
    config = validate_config(write_config(tmp_path))
    first = run_experiment(config)
    assert first.completed == 36
    second = run_experiment(validate_config(tmp_path / "config.toml"))
    assert second.completed == 0
    assert second.skipped_existing == 36
    assert second.backend_calls == 0


def test_interrupted_run_resumes_exactly(tmp_path):
    config = validate_config(write_config(tmp_path, concurrency=1))
    run_experiment(config)
    records_path = tmp_path / "run" / "records.jsonl"
    lines = records_path.read_text().splitlines()
    records_path.write_text("\n".join(lines[:20]) + "\n")  # simulate a crash at 20/36
    summary = run_experiment(validate_config(tmp_path / "config.toml"))
    assert summary.completed == 16
    assert summary.skipped_existing == 20
    assert len(load_records(records_path)) == 36


def test_resume_entry_point(tmp_path):
    config = validate_config(write_config(tmp_path))
    run_experiment(config)
    records_path = tmp_path / "run" / "records.jsonl"
    lines = records_path.read_text().splitlines()
    records_path.write_text("\n".join(lines[:10]) + "\n")
    summary = resume(tmp_path / "run")
    assert summary.completed == 26
    assert len(load_records(records_path)) == 36


def test_budget_blocks_majority_cells(tmp_path):
    config = validate_config(
        write_config(
            tmp_path,
            strategies='[[strategies]]\nkind = "majority"\n',
            budget="budget_max_calls = 10",
        )
    )
    summary = run_experiment(config)
    assert summary.completed == 0
    assert summary.budget_stopped
    assert summary.skipped_budget == 6
    assert load_records(Path(summary.records_path)) == []


def test_budget_allows_partial_progress(tmp_path):
    config = validate_config(
        write_config(
            tmp_path,
            strategies='[[strategies]]\nkind = "no-ttc"\n',
            budget="budget_max_calls = 4",
        )
    )
    summary = run_experiment(config)
    assert summary.completed == 4
    assert summary.skipped_budget == 2
    assert summary.budget_stopped


def test_beam_sweep_tags_records(tmp_path):
    config = validate_config(
        write_config(
            tmp_path,
            strategies='[[strategies]]\nkind = "bs-w"\n',
            sweep='[sweep]\naxis = "beam"\nbeam_range = [2, 7]\n',
        )
    )
    summary = run_sweep(config)
    assert summary.completed == 36  # 6 trials x B in 2..7
    records = load_records(Path(summary.records_path))
    points = {r["sweep_point"] for r in records}
    assert points == {2.0, 3.0, 4.0, 5.0, 6.0, 7.0}
    assert all(r["sweep_axis"] == "beam" for r in records)


def test_temperature_sweep_points(tmp_path):
    config = validate_config(
        write_config(
            tmp_path,
            strategies='[[strategies]]\nkind = "no-ttc"\n',
            sweep='[sweep]\naxis = "temperature"\n',
            n_trials=2,
        )
    )
    summary = run_sweep(config)
    assert summary.completed == 22  # 2 trials x 11 grid points
    records = load_records(Path(summary.records_path))
    assert len({r["sweep_point"] for r in records}) == 11


def test_single_point_sweep_matches_fixed_run(tmp_path):
    sweep_cfg = validate_config(
        write_config(
            tmp_path,
            strategies='[[strategies]]\nkind = "bs-w"\nbeam_width = 4\n',
            sweep='[sweep]\naxis = "beam"\nbeam_range = [4, 4]\n',
        )
    )
    run_sweep(sweep_cfg)
    sweep_records = load_records(tmp_path / "run" / "records.jsonl")

    fixed_dir = tmp_path / "fixed"
    fixed_cfg = validate_config(
        write_config(fixed_dir, strategies='[[strategies]]\nkind = "bs-w"\nbeam_width = 4\n')
    )
    run_experiment(fixed_cfg)
    fixed_records = load_records(fixed_dir / "run" / "records.jsonl")

    def outcomes(records):
        return {
            r["trial_id"]: (r["outcome"]["final_option_index"], r["correct"]) for r in records
        }

    assert outcomes(sweep_records) == outcomes(fixed_records)


def test_records_validate_against_schema(tmp_path):
    import jsonschema
    from importlib import resources

    schema = json.loads(
        resources.files("audiottc.assets").joinpath("record_schema.json").read_text()
    )
    config = validate_config(write_config(tmp_path))
    summary = run_experiment(config)
    records = load_records(Path(summary.records_path))
    assert records
    for record in records:
        jsonschema.validate(record, schema)


def test_run_content_deterministic_across_directories(tmp_path):
    a = validate_config(write_config(tmp_path / "a"))
    b = validate_config(write_config(tmp_path / "b"))
    ra = {(r["trial_id"], r["strategy"]): r["outcome"] for r in _run(a)}
    rb = {(r["trial_id"], r["strategy"]): r["outcome"] for r in _run(b)}
    assert ra == rb


def _run(config):
    summary = run_experiment(config)
    return load_records(Path(summary.records_path))
