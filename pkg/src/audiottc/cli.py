"""Command-line entry points: gen / run / sweep / resume / report / demo-corpus."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .report import ReportError, accuracy_by_task, comparison_csv, render_comparison, write_report_files
from .runner import ConfigError, load_records, resume, run_experiment, run_sweep, validate_config
from .synth import (
    DEFAULT_TEMPLATES,
    QuestionTemplate,
    SynthParams,
    load_corpus,
    make_demo_corpus,
    synthesize_trial,
)
from .trials import TaskKind, save_trial

_TASK_BY_NUMBER = {
    1: TaskKind.TASK1_EVENT,
    2: TaskKind.TASK2_SPEECH,
    3: TaskKind.TASK3_OVERLAP,
}


def _cmd_gen(args) -> int:
    params = SynthParams(
        sequence_length=args.seq_len,
        gap_ms=args.gap_ms,
        snr_db=args.snr_db,
        session_rate=args.rate,
    )
    corpus = load_corpus(args.manifest, session_rate=args.rate)
    tasks = [_TASK_BY_NUMBER[int(t)] for t in args.tasks.split(",")]
    if any(t in (TaskKind.TASK2_SPEECH, TaskKind.TASK3_OVERLAP) for t in tasks):
        corpus.check_digit_coverage()
    out = Path(args.out)
    written = 0
    for t_idx, task in enumerate(tasks):
        kinds = DEFAULT_TEMPLATES[task]
        for i in range(args.n_per_task):
            template = QuestionTemplate(kinds[i % len(kinds)])
            seed = args.seed * 1_000_003 + t_idx * 10_007 + i
            trial = synthesize_trial(
                corpus, task, template, params, seed,
                trial_id=f"task{t_idx + 1}-{i:04d}",
            )
            save_trial(trial, out)
            written += 1
    print(f"wrote {written} trials to {out}")
    return 0


def _cmd_demo_corpus(args) -> int:
    manifest = make_demo_corpus(args.out, seed=args.seed, sample_rate=args.rate)
    print(f"wrote demo corpus manifest to {manifest}")
    return 0


def _print_summary(summary) -> None:
    print(json.dumps(summary.to_dict(), indent=2))


def _cmd_run(args) -> int:
    config = validate_config(args.config)
    summary = run_experiment(config)
    _print_summary(summary)
    return summary.exit_code


def _cmd_sweep(args) -> int:
    config = validate_config(args.config)
    summary = run_sweep(config, axis=args.axis)
    _print_summary(summary)
    return summary.exit_code


def _cmd_resume(args) -> int:
    summary = resume(args.run_dir)
    _print_summary(summary)
    return summary.exit_code


def _cmd_report(args) -> int:
    records = load_records(Path(args.run_dir) / "records.jsonl")
    if not records:
        print(f"no records under {args.run_dir}", file=sys.stderr)
        return 3
    axes = sorted({r["sweep_axis"] for r in records if r.get("sweep_axis")})
    plain = [r for r in records if r.get("sweep_axis") is None]
    table = accuracy_by_task(plain) if plain else None
    if args.format == "table":
        if table is None:
            print("no non-sweep records; use --format csv for sweep output", file=sys.stderr)
            return 3
        print(render_comparison(table, args.baseline), end="")
    else:
        if table is not None:
            print(comparison_csv(table, args.baseline), end="")
    write_report_files(records, Path(args.run_dir) / "report", args.baseline, sweep_axes=axes)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="audiottc")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="synthesize trials from a labelled corpus")
    gen.add_argument("--manifest", required=True)
    gen.add_argument("--tasks", default="1,2,3", help="comma list of task numbers")
    gen.add_argument("--n-per-task", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--snr-db", type=float, default=5.0)
    gen.add_argument("--rate", type=int, default=16000)
    gen.add_argument("--seq-len", type=int, default=6)
    gen.add_argument("--gap-ms", type=float, default=300.0)
    gen.set_defaults(func=_cmd_gen)

    demo = sub.add_parser("demo-corpus", help="write a synthetic demo corpus")
    demo.add_argument("--out", required=True)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--rate", type=int, default=16000)
    demo.set_defaults(func=_cmd_demo_corpus)

    run = sub.add_parser("run", help="run all incomplete experiment cells")
    run.add_argument("--config", required=True)
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a beam-size or temperature sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", choices=["beam", "temperature"], required=True)
    sweep.set_defaults(func=_cmd_sweep)

    res = sub.add_parser("resume", help="resume an interrupted run directory")
    res.add_argument("--run-dir", required=True)
    res.set_defaults(func=_cmd_resume)

    rep = sub.add_parser("report", help="accuracy tables and sweep CSVs")
    rep.add_argument("--run-dir", required=True)
    rep.add_argument("--baseline", default="no-ttc")
    rep.add_argument("--format", choices=["table", "csv"], default="table")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except ReportError as e:
        print(f"report error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
