"""Experiment configs, resumable execution, and sweep driving.

A run directory holds the config copy, the response cache, and an
append-only ``records.jsonl``. Cells are keyed by (trial, backend,
strategy, sweep point); completed keys are skipped on rerun, so
interrupted campaigns resume exactly where they stopped and a finished
directory replays with zero backend calls.
"""

from __future__ import annotations

import json
import shutil
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gateway import Backend, Gateway, HttpBackend, ResponseCache
from .oracle import (
    OracleConfig,
    SimulatedOracleBackend,
    SimulatedVerifierBackend,
    VerifierOracleConfig,
)
from .strategies import (
    DEFAULT_TEMPERATURE_GRID,
    StrategyConfig,
    StrategyKind,
    TieBreak,
    run_strategy,
)
from .trials import TaskKind, Trial, load_trial_dir
from .verify import VerifierClient, VerifierPolicy

RECORD_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Experiment config failed schema or capability validation."""


@dataclass
class BackendSpec:
    backend_id: str
    kind: str  # "simulated" | "simulated-verifier" | "http"
    model: str = ""
    seed: int = 0
    accuracy: dict[TaskKind, float] | float = 0.7
    temperature_slope: float = 0.0
    verbosity: float = 0.0
    mu_correct: float = -1.0
    mu_wrong: float = -4.0
    temperature_range: tuple[float, float] = (0.0, 2.0)
    verbose_prompt: bool = False
    rpm: float | None = None
    base_url: str = ""
    capabilities: tuple[str, ...] = ("sample", "beam", "logprobs")

    def build(self) -> Backend:
        if self.kind == "simulated":
            return SimulatedOracleBackend(
                backend_id=self.backend_id,
                config=OracleConfig(
                    accuracy=self.accuracy,
                    temperature_slope=self.temperature_slope,
                    verbosity=self.verbosity,
                    mu_correct=self.mu_correct,
                    mu_wrong=self.mu_wrong,
                ),
                seed=self.seed,
                model_id=self.model or "oracle-1",
                temperature_range=self.temperature_range,
                verbose=self.verbose_prompt,
            )
        if self.kind == "simulated-verifier":
            return SimulatedVerifierBackend(
                backend_id=self.backend_id,
                config=VerifierOracleConfig(),
                seed=self.seed,
                model_id=self.model or "judge-1",
            )
        if self.kind == "http":
            return HttpBackend(
                backend_id=self.backend_id,
                base_url=self.base_url,
                model_id=self.model,
                capabilities=frozenset(self.capabilities),
                temperature_range=self.temperature_range,
                verbose=self.verbose_prompt,
            )
        raise ConfigError(f"backends[{self.backend_id}].kind: unknown kind {self.kind!r}")


@dataclass
class StrategyEntry:
    config: StrategyConfig
    verifier_id: str | None = None

    @property
    def label(self) -> str:
        return self.config.label


@dataclass
class SweepSpec:
    axis: str  # "beam" | "temperature"
    beam_range: tuple[int, int] = (2, 7)
    temperature_grid: tuple[float, ...] = DEFAULT_TEMPERATURE_GRID


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: Path
    trial_dir: Path
    backends: list[BackendSpec]
    strategies: list[StrategyEntry]
    sweep: SweepSpec | None = None
    max_concurrency: int = 4
    budget_max_calls: int | None = None
    config_path: Path | None = None


def _field(doc: dict, key: str, kind, where: str, default=None, required: bool = False):
    if key not in doc:
        if required:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind}, got {type(value).__name__}")
    return value


def _parse_accuracy(value, where: str):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict):
        try:
            return {TaskKind(k): float(v) for k, v in value.items()}
        except ValueError as e:
            raise ConfigError(f"{where}.accuracy: {e}")
    raise ConfigError(f"{where}.accuracy: expected number or per-task table")


def _parse_backend(doc: dict, i: int) -> BackendSpec:
    where = f"backends[{i}]"
    spec = BackendSpec(
        backend_id=_field(doc, "id", str, where, required=True),
        kind=_field(doc, "kind", str, where, required=True),
        model=_field(doc, "model", str, where, default=""),
        seed=_field(doc, "seed", int, where, default=0),
        temperature_slope=_field(doc, "temperature_slope", float, where, default=0.0),
        verbosity=_field(doc, "verbosity", float, where, default=0.0),
        mu_correct=_field(doc, "mu_correct", float, where, default=-1.0),
        mu_wrong=_field(doc, "mu_wrong", float, where, default=-4.0),
        verbose_prompt=_field(doc, "verbose_prompt", bool, where, default=False),
        base_url=_field(doc, "base_url", str, where, default=""),
    )
    if spec.kind not in ("simulated", "simulated-verifier", "http"):
        raise ConfigError(f"{where}.kind: unknown kind {spec.kind!r}")
    if spec.kind == "http" and not spec.base_url:
        raise ConfigError(f"{where}.base_url: required for http backends")
    if "accuracy" in doc:
        spec.accuracy = _parse_accuracy(doc["accuracy"], where)
    if "temperature_range" in doc:
        rng = doc["temperature_range"]
        if not (isinstance(rng, list) and len(rng) == 2):
            raise ConfigError(f"{where}.temperature_range: expected [lo, hi]")
        spec.temperature_range = (float(rng[0]), float(rng[1]))
    if "capabilities" in doc:
        caps = doc["capabilities"]
        unknown = set(caps) - {"sample", "beam", "logprobs"}
        if unknown:
            raise ConfigError(f"{where}.capabilities: unknown {sorted(unknown)}")
        spec.capabilities = tuple(caps)
    if "rpm" in doc:
        spec.rpm = float(doc["rpm"]) or None
    return spec


def _parse_strategy(doc: dict, i: int) -> StrategyEntry:
    where = f"strategies[{i}]"
    kind_str = _field(doc, "kind", str, where, required=True)
    try:
        kind = StrategyKind(kind_str)
    except ValueError:
        valid = ", ".join(k.value for k in StrategyKind)
        raise ConfigError(f"{where}.kind: unknown strategy {kind_str!r} (valid: {valid})")
    config = StrategyConfig(kind=kind)
    if "temperature_grid" in doc:
        grid = doc["temperature_grid"]
        if not isinstance(grid, list) or not all(isinstance(t, (int, float)) for t in grid):
            raise ConfigError(f"{where}.temperature_grid: expected list of numbers")
        config.temperature_grid = tuple(float(t) for t in grid)
    config.beam_width = _field(doc, "beam_width", int, where, default=config.beam_width)
    config.raw_loglik_weights = _field(doc, "raw_loglik_weights", bool, where, default=False)
    config.length_normalize = _field(doc, "length_normalize", bool, where, default=False)
    config.use_verifier_answer = _field(doc, "use_verifier_answer", bool, where, default=False)
    if "tie_break" in doc:
        try:
            config.tie_break = TieBreak(doc["tie_break"])
        except ValueError:
            raise ConfigError(f"{where}.tie_break: unknown value {doc['tie_break']!r}")
    verifier_id = _field(doc, "verifier", str, where, default=None)
    config.verifier_backend = verifier_id
    return StrategyEntry(config=config, verifier_id=verifier_id)


def validate_config(path: str | Path) -> ExperimentConfig:
    """Parse and fully validate a TOML experiment config.

    Capability conflicts (e.g. BS-W on a sample-only backend, temperature
    grid outside a backend's declared range) are rejected here, before any
    network call.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}")

    backends = [_parse_backend(b, i) for i, b in enumerate(doc.get("backends", []))]
    if not backends:
        raise ConfigError("backends: at least one backend is required")
    strategies = [_parse_strategy(s, i) for i, s in enumerate(doc.get("strategies", []))]
    if not strategies:
        raise ConfigError("strategies: at least one strategy is required")

    sweep = None
    if "sweep" in doc:
        axis = _field(doc["sweep"], "axis", str, "sweep", required=True)
        if axis not in ("beam", "temperature"):
            raise ConfigError(f"sweep.axis: expected 'beam' or 'temperature', got {axis!r}")
        sweep = SweepSpec(axis=axis)
        if "beam_range" in doc["sweep"]:
            lo, hi = doc["sweep"]["beam_range"]
            if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
                raise ConfigError("sweep.beam_range: expected [lo, hi] with 1 <= lo <= hi")
            sweep.beam_range = (lo, hi)
        if "temperature_grid" in doc["sweep"]:
            sweep.temperature_grid = tuple(float(t) for t in doc["sweep"]["temperature_grid"])

    config = ExperimentConfig(
        seed=_field(doc, "seed", int, "root", default=0),
        output_dir=path.parent / _field(doc, "output_dir", str, "root", required=True),
        trial_dir=path.parent / _field(doc, "trial_dir", str, "root", required=True),
        backends=backends,
        strategies=strategies,
        sweep=sweep,
        max_concurrency=_field(doc, "max_concurrency", int, "root", default=4),
        budget_max_calls=_field(doc, "budget_max_calls", int, "root", default=None),
        config_path=path,
    )
    _check_compatibility(config)
    return config


def _check_compatibility(config: ExperimentConfig) -> None:
    by_id = {b.backend_id: b for b in config.backends}
    built = {bid: spec.build() for bid, spec in by_id.items()}
    answer_backends = [b for b in config.backends if b.kind != "simulated-verifier"]
    for i, entry in enumerate(config.strategies):
        verifier = None
        if entry.config.kind in (StrategyKind.LLM_TOP1, StrategyKind.LLM_W):
            if not entry.verifier_id:
                raise ConfigError(f"strategies[{i}].verifier: required for {entry.label}")
            if entry.verifier_id not in by_id:
                raise ConfigError(
                    f"strategies[{i}].verifier: unknown backend {entry.verifier_id!r}"
                )
            verifier = built[entry.verifier_id]
        for spec in answer_backends:
            try:
                entry.config.validate_against(built[spec.backend_id], verifier)
            except Exception as e:
                raise ConfigError(
                    f"strategies[{i}] ({entry.label}) incompatible with backend "
                    f"{spec.backend_id!r}: {e}"
                )
    if config.sweep and config.sweep.axis == "temperature":
        for spec in answer_backends:
            lo, hi = spec.temperature_range
            bad = [t for t in config.sweep.temperature_grid if not lo <= t <= hi]
            if bad:
                raise ConfigError(
                    f"sweep.temperature_grid: values {bad} outside backend "
                    f"{spec.backend_id!r} range [{lo}, {hi}]"
                )


# -- cells and records ---------------------------------------------------------


@dataclass(frozen=True)
class CellKey:
    trial_id: str
    backend: str
    strategy: str
    sweep_axis: str | None
    sweep_point: float | None

    def as_tuple(self):
        return (self.trial_id, self.backend, self.strategy, self.sweep_axis, self.sweep_point)


@dataclass
class Cell:
    key: CellKey
    trial: Trial
    backend_id: str
    entry: StrategyEntry
    strategy: StrategyConfig  # sweep-adjusted copy


@dataclass
class RunSummary:
    completed: int = 0
    skipped_existing: int = 0
    skipped_budget: int = 0
    failed: list[dict[str, str]] = field(default_factory=list)
    budget_stopped: bool = False
    backend_calls: int = 0
    cache_hits: int = 0
    records_path: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "completed": self.completed,
            "skipped_existing": self.skipped_existing,
            "skipped_budget": self.skipped_budget,
            "failed": self.failed,
            "budget_stopped": self.budget_stopped,
            "backend_calls": self.backend_calls,
            "cache_hits": self.cache_hits,
            "records_path": self.records_path,
        }

    @property
    def exit_code(self) -> int:
        return 2 if self.failed else 0


def planned_calls(entry: StrategyEntry, strategy: StrategyConfig, backend: Backend) -> int:
    kind = strategy.kind
    if kind in (StrategyKind.DIRECT, StrategyKind.COT, StrategyKind.BSW):
        return 1
    if kind is StrategyKind.MAJORITY:
        return len(strategy.temperature_grid)
    # LLM strategies: candidate generation plus one verifier call per candidate
    if "beam" in backend.capabilities:
        return 1 + strategy.beam_width
    return 2 * len(strategy.temperature_grid)


def _record_key(doc: dict) -> CellKey:
    return CellKey(
        trial_id=doc["trial_id"],
        backend=doc["backend"],
        strategy=doc["strategy"],
        sweep_axis=doc.get("sweep_axis"),
        sweep_point=doc.get("sweep_point"),
    )


def load_records(records_path: Path) -> list[dict]:
    if not records_path.exists():
        return []
    records = []
    for line in records_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def _candidate_doc(c) -> dict:
    return {
        "text": c.text,
        "tokens": c.tokens,
        "token_logprobs": c.token_logprobs,
        "cum_logprob": c.cum_logprob,
        "temperature": c.temperature,
        "canonical_index": c.canonical.option_index if c.canonical else None,
        "canonical_rule": (
            c.canonical.match_rule.value if c.canonical and c.canonical.match_rule else None
        ),
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def build_record(cell: Cell, outcome, correct: bool, started_at: str) -> dict:
    return {
        "schema_version": RECORD_SCHEMA_VERSION,
        "trial_id": cell.trial.id,
        "task_kind": cell.trial.task_kind.value,
        "backend": cell.backend_id,
        "strategy": cell.key.strategy,
        "sweep_axis": cell.key.sweep_axis,
        "sweep_point": cell.key.sweep_point,
        "candidates": [_candidate_doc(c) for c in outcome.candidates],
        "verifier_ratings": outcome.verifier_ratings,
        "outcome": {
            "final_option_index": outcome.final_option,
            "final_option": (
                cell.trial.options[outcome.final_option]
                if outcome.final_option is not None
                else None
            ),
            "option_scores": {str(k): v for k, v in outcome.option_scores.items()},
            "weights": (
                {
                    "source": outcome.weights.source.value,
                    "values": {str(k): v for k, v in outcome.weights.values.items()},
                }
                if outcome.weights
                else None
            ),
            "decision_rule": outcome.decision_rule,
        },
        "correct": correct,
        "backend_calls": outcome.extras.get("backend_calls", 0),
        "cache_hits": outcome.extras.get("cache_hits", 0),
        "extras": {
            k: v for k, v in outcome.extras.items() if k not in ("backend_calls", "cache_hits")
        },
        "started_at": started_at,
        "finished_at": _now(),
    }


def _build_cells(config: ExperimentConfig, trials: list[Trial], axis: str | None) -> list[Cell]:
    cells = []
    answer_ids = [b.backend_id for b in config.backends if b.kind != "simulated-verifier"]
    for trial in trials:
        for backend_id in answer_ids:
            if axis is None:
                for entry in config.strategies:
                    key = CellKey(trial.id, backend_id, entry.label, None, None)
                    cells.append(Cell(key, trial, backend_id, entry, entry.config))
            elif axis == "beam":
                entry = _sweep_entry(config, StrategyKind.BSW)
                lo, hi = config.sweep.beam_range
                for b in range(lo, hi + 1):
                    strategy = replace(entry.config, beam_width=b)
                    key = CellKey(trial.id, backend_id, entry.label, "beam", float(b))
                    cells.append(Cell(key, trial, backend_id, entry, strategy))
            elif axis == "temperature":
                entry = _sweep_entry(config, StrategyKind.DIRECT)
                for tau in config.sweep.temperature_grid:
                    strategy = replace(entry.config, direct_temperature=float(tau))
                    key = CellKey(trial.id, backend_id, entry.label, "temperature", float(tau))
                    cells.append(Cell(key, trial, backend_id, entry, strategy))
    return cells


def _sweep_entry(config: ExperimentConfig, kind: StrategyKind) -> StrategyEntry:
    for entry in config.strategies:
        if entry.config.kind is kind:
            return entry
    return StrategyEntry(config=StrategyConfig(kind=kind))


class _Writer:
    def __init__(self, path: Path):
        self.path = path
        self.lock = threading.Lock()

    def append(self, doc: dict) -> None:
        with self.lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(doc) + "\n")
                f.flush()


def _update_run_meta(run_dir: Path, config: ExperimentConfig, axis: str | None) -> None:
    meta_path = run_dir / "run_meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    meta["trial_dir"] = str(Path(config.trial_dir).resolve())
    modes = meta.setdefault("modes", [])
    mode = {"axis": axis}
    if mode not in modes:
        modes.append(mode)
    meta_path.write_text(json.dumps(meta, indent=2), encoding="utf-8")


def _execute(config: ExperimentConfig, axis: str | None) -> RunSummary:
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if config.config_path and config.config_path.exists():
        stored = run_dir / "config.toml"
        if stored.resolve() != config.config_path.resolve():
            shutil.copyfile(config.config_path, stored)
    _update_run_meta(run_dir, config, axis)

    backends = {spec.backend_id: spec.build() for spec in config.backends}
    needs_audio = any(spec.kind == "http" for spec in config.backends)
    trials = load_trial_dir(config.trial_dir, load_audio=needs_audio)

    gateway = Gateway(cache=ResponseCache(run_dir / "cache"), rng_seed=config.seed)
    for spec in config.backends:
        gateway.register(backends[spec.backend_id], rpm=spec.rpm)

    records_path = run_dir / "records.jsonl"
    completed = {_record_key(doc).as_tuple() for doc in load_records(records_path)}
    writer = _Writer(records_path)
    summary = RunSummary(records_path=str(records_path))

    cells = _build_cells(config, trials, axis)
    todo: list[Cell] = []
    budget_left = config.budget_max_calls
    for cell in cells:
        if cell.key.as_tuple() in completed:
            summary.skipped_existing += 1
            continue
        if budget_left is not None:
            cost = planned_calls(cell.entry, cell.strategy, backends[cell.backend_id])
            if cost > budget_left:
                summary.skipped_budget += 1
                summary.budget_stopped = True
                continue
            budget_left -= cost
        todo.append(cell)

    calls_before = gateway.query_count
    hits_before = gateway.cache_hits

    def run_cell(cell: Cell) -> None:
        started = _now()
        verifier = None
        if cell.entry.verifier_id:
            verifier = VerifierClient(gateway, cell.entry.verifier_id, VerifierPolicy())
        try:
            outcome = run_strategy(cell.strategy, cell.trial, gateway, cell.backend_id, verifier)
            correct = (
                outcome.final_option is not None
                and outcome.final_option == cell.trial.ground_truth
            )
            writer.append(build_record(cell, outcome, correct, started))
            summary.completed += 1
        except Exception as e:  # cell-level isolation: one failure never aborts the run
            summary.failed.append({"cell": str(cell.key.as_tuple()), "error": str(e)})

    if config.max_concurrency > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
            list(pool.map(run_cell, todo))
    else:
        for cell in todo:
            run_cell(cell)

    summary.backend_calls = gateway.query_count - calls_before
    summary.cache_hits = gateway.cache_hits - hits_before
    (run_dir / "summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2), encoding="utf-8"
    )
    return summary


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Execute all incomplete (trial, backend, strategy) cells."""
    return _execute(config, axis=None)


def run_sweep(config: ExperimentConfig, axis: str | None = None) -> RunSummary:
    """Repeat BS-W cells per beam width, or direct cells per temperature."""
    axis = axis or (config.sweep.axis if config.sweep else None)
    if axis not in ("beam", "temperature"):
        raise ConfigError("sweep axis must be 'beam' or 'temperature'")
    if config.sweep is None:
        config.sweep = SweepSpec(axis=axis)
    if config.sweep.axis != axis:
        raise ConfigError(f"config sweep axis {config.sweep.axis!r} does not match {axis!r}")
    return _execute(config, axis=axis)


def resume(run_dir: str | Path) -> RunSummary:
    """Replay every mode recorded in a run directory; completed cells are no-ops."""
    run_dir = Path(run_dir)
    stored = run_dir / "config.toml"
    if not stored.exists():
        raise ConfigError(f"no config.toml stored under {run_dir}")
    config = validate_config(stored)
    config.output_dir = run_dir
    meta_path = run_dir / "run_meta.json"
    modes = [{"axis": None}]
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        config.trial_dir = Path(meta.get("trial_dir", config.trial_dir))
        modes = meta.get("modes", modes)
    summary = RunSummary(records_path=str(run_dir / "records.jsonl"))
    for mode in modes:
        part = _execute(config, axis=mode.get("axis"))
        summary.completed += part.completed
        summary.skipped_existing += part.skipped_existing
        summary.skipped_budget += part.skipped_budget
        summary.failed.extend(part.failed)
        summary.budget_stopped = summary.budget_stopped or part.budget_stopped
        summary.backend_calls += part.backend_calls
        summary.cache_hits += part.cache_hits
    return summary
