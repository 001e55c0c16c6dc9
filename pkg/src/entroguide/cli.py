"""Command-line entry points.

Exit codes: 0 on completion, 2 on configuration errors, 3 on dataset
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import (BenchReport, MetricCell, StratumError, compute_metrics,
                    render_report, run_batch, stratified_sample)
from .config import AppConfig, ConfigError, load_config
from .engine import SessionConfig, SessionMode, run_session
from .entropy import TaskKind, understanding_entropy
from .routing import generate_instance
from .store import ExperienceStore, StoreFormatError
from .tasks import (DatasetError, TaskInstance, ingest_gsm8k, ingest_mbpp,
                    load_dataset, save_dataset)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _session_config(app: AppConfig, strong_name: str, weak_name: str,
                    mode: SessionMode, seed: int,
                    kind: TaskKind | None = None) -> SessionConfig:
    policy = app.policy_for(kind) if kind is not None else app.policy
    return SessionConfig(
        strong_profile=app.profile(strong_name),
        weak_profile=app.profile(weak_name),
        mode=mode, t_max=app.t_max, k=app.k, s_min=app.s_min,
        policy=policy, seed=seed, sandbox=app.sandbox,
        lexicon=app.lexicon_for(kind) if kind is not None else None,
        weights=app.weights_for(kind) if kind is not None else None,
        markers=app.markers_for(kind) if kind is not None else None,
        template_dir=app.template_dir)


def _default_profile(app: AppConfig, strength: str) -> str:
    """Sole configured profile of a strength; ambiguity is a config error."""
    matches = [name for name, profile in app.profiles.items()
               if profile.strength.value == strength]
    if len(matches) != 1:
        raise ConfigError(
            f"--{strength} required: config has {len(matches)} {strength} "
            f"profiles")
    return matches[0]


def cmd_entropy(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    kind = TaskKind.parse(args.task)
    problem = _read_text(args.problem)
    response = _read_text(args.response)
    report = understanding_entropy(problem, response, kind,
                                   weights=app.weights_for(kind),
                                   lexicon=app.lexicon_for(kind))
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_repo_stats(args: argparse.Namespace) -> int:
    store = ExperienceStore.load(args.path)
    state = store.vectorizer_state()
    stats = {
        "records": state.record_count,
        "vocabulary_size": len(state.vocabulary),
        "df_histogram": {str(k): v for k, v in store.df_histogram().items()},
    }
    print(json.dumps(stats, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_repo_query(args: argparse.Namespace) -> int:
    store = ExperienceStore.load(args.path)
    problem = _read_text(args.problem)
    hits = store.retrieve_top_k(problem, k=args.k, s_min=args.s_min)
    for hit in hits:
        print(json.dumps({
            "id": hit.record.id,
            "similarity": round(hit.similarity, 6),
            "injected": hit.injected,
            "problem_text": hit.record.problem_text,
        }, sort_keys=True))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    tasks = load_dataset(args.task)
    if not tasks:
        raise DatasetError(f"no tasks in {args.task}")
    task = tasks[0]
    mode = SessionMode.parse(args.mode)
    strong_name = args.strong or _default_profile(app, "strong")
    weak_name = args.weak or _default_profile(app, "weak")

    repo = None
    if mode is SessionMode.GUIDED_RAG:
        repo_path = args.repo or app.repo_path
        if repo_path is None:
            raise ConfigError("guided_rag mode needs --repo or store.path")
        repo = (ExperienceStore.load(repo_path)
                if Path(repo_path).exists() else ExperienceStore())

    config = _session_config(app, strong_name, weak_name, mode, args.seed,
                             kind=task.kind)
    transcript = run_session(task, config, repo)
    path = transcript.write(args.out_dir)
    if repo is not None:
        repo.save(args.repo or app.repo_path)
    print(f"wrote {path}")
    print(f"success={transcript.success} rounds={transcript.rounds_used} "
          f"rag_used={transcript.rag_used}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    tasks = load_dataset(args.dataset)
    if not tasks:
        raise DatasetError(f"no tasks in {args.dataset}")
    if args.n is not None:
        tasks = stratified_sample(tasks, None, args.n, args.seed)

    modes = [SessionMode.parse(m) for m in args.modes.split(",") if m]
    if not modes:
        raise ConfigError("no modes requested")

    repo = None
    if SessionMode.GUIDED_RAG in modes:
        repo_path = args.repo or app.repo_path
        repo = (ExperienceStore.load(repo_path)
                if repo_path and Path(repo_path).exists() else ExperienceStore())

    dataset_name = Path(args.dataset).stem
    pair = f"{args.strong}+{args.weak}"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    by_kind: dict[TaskKind, list[TaskInstance]] = {}
    for task in tasks:
        by_kind.setdefault(task.kind, []).append(task)

    cells: dict[tuple[str, str, str], MetricCell] = {}
    for mode in modes:
        transcripts = []
        for kind, kind_tasks in by_kind.items():
            config = _session_config(app, args.strong, args.weak, mode,
                                     args.seed, kind=kind)
            mode_repo = repo if mode is SessionMode.GUIDED_RAG else None
            transcripts.extend(run_batch(kind_tasks, config, mode_repo,
                                         workers=args.workers))
        for transcript in transcripts:
            transcript.write(out_dir)
        cells[(dataset_name, pair, mode.value)] = compute_metrics(transcripts)

    report = BenchReport(cells=cells)
    (out_dir / "summary.csv").write_text(render_report(report, "csv"),
                                         encoding="utf-8")
    (out_dir / "summary.md").write_text(render_report(report, "markdown"),
                                        encoding="utf-8")
    if repo is not None and (args.repo or app.repo_path):
        repo.save(args.repo or app.repo_path)
    print(render_report(report, "markdown"))
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    if args.source == "gsm8k":
        count = ingest_gsm8k(args.input, args.output)
    else:
        count = ingest_mbpp(args.input, args.output)
    print(f"wrote {count} tasks to {args.output}")
    return EXIT_OK


def cmd_gen_cvrp(args: argparse.Namespace) -> int:
    if args.customers < 1:
        raise DatasetError("need at least one customer")
    if args.customers > 8:
        raise DatasetError(
            "gen-cvrp computes exact optima and is limited to 8 customers; "
            "provide larger instances with a known optimal_distance instead")
    tasks = []
    for i in range(args.count):
        instance = generate_instance(args.customers, args.seed + i,
                                     capacity=args.capacity)
        problem = _describe_cvrp(instance, i)
        tasks.append(TaskInstance(id=f"cvrp-{args.seed}-{i}",
                                  kind=TaskKind.ROUTING, problem=problem,
                                  reference=instance))
    save_dataset(tasks, args.output)
    print(f"wrote {len(tasks)} tasks to {args.output}")
    return EXIT_OK


def _describe_cvrp(instance, index: int) -> str:
    lines = [
        f"Vehicle routing problem {index}: vehicles start and end at the "
        f"depot at ({instance.depot[0]:.1f}, {instance.depot[1]:.1f}) and "
        f"each carries at most {instance.vehicle_capacity:.1f} units.",
        "Serve every customer exactly once:",
    ]
    for i, c in enumerate(instance.customers, start=1):
        lines.append(f"  c{i}: location ({c.x:.1f}, {c.y:.1f}), "
                     f"demand {c.demand:.1f}")
    lines.append("Minimise total travel distance. Answer with one line per "
                 "vehicle like 'Route 1: depot -> c2 -> c1 -> depot'.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroguide",
        description="Entropy-guided strong/weak agent collaboration harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_entropy = sub.add_parser("entropy", help="score one response")
    p_entropy.add_argument("--task", required=True,
                           help="task kind: math, code, or routing")
    p_entropy.add_argument("--problem", required=True, help="problem text file")
    p_entropy.add_argument("--response", required=True, help="response text file")
    p_entropy.add_argument("--config", default=None)
    p_entropy.set_defaults(func=cmd_entropy)

    p_repo = sub.add_parser("repo", help="inspect an experience repository")
    repo_sub = p_repo.add_subparsers(dest="repo_command", required=True)
    p_stats = repo_sub.add_parser("stats")
    p_stats.add_argument("path")
    p_stats.set_defaults(func=cmd_repo_stats)
    p_query = repo_sub.add_parser("query")
    p_query.add_argument("path")
    p_query.add_argument("--problem", required=True)
    p_query.add_argument("-k", type=int, default=3)
    p_query.add_argument("--s-min", type=float, default=0.1)
    p_query.set_defaults(func=cmd_repo_query)

    p_run = sub.add_parser("run", help="run a single collaboration session")
    p_run.add_argument("--task", required=True, help="task file (JSONL)")
    p_run.add_argument("--mode", default="guided")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--repo", default=None)
    p_run.add_argument("--out-dir", required=True)
    p_run.add_argument("--strong", default=None,
                       help="strong profile name (default: the config's "
                            "sole strong profile)")
    p_run.add_argument("--weak", default=None,
                       help="weak profile name (default: the config's sole "
                            "weak profile)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a benchmark batch")
    p_bench.add_argument("--dataset", required=True)
    p_bench.add_argument("--modes",
                         default="no_guidance,cot,guided,guided_rag")
    p_bench.add_argument("--strong", required=True)
    p_bench.add_argument("--weak", required=True)
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--repo", default=None)
    p_bench.add_argument("--n", type=int, default=None,
                         help="stratified sample size (30/50/20 split)")
    p_bench.add_argument("--seed", type=int, default=7)
    p_bench.add_argument("--out-dir", required=True)
    p_bench.add_argument("--workers", type=int,
                         default=max(1, os.cpu_count() or 1))
    p_bench.set_defaults(func=cmd_bench)

    p_ingest = sub.add_parser("ingest", help="convert public dataset layouts")
    p_ingest.add_argument("source", choices=("gsm8k", "mbpp"))
    p_ingest.add_argument("input")
    p_ingest.add_argument("output")
    p_ingest.set_defaults(func=cmd_ingest)

    p_gen = sub.add_parser("gen-cvrp", help="generate routing tasks")
    p_gen.add_argument("--customers", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--count", type=int, default=10)
    p_gen.add_argument("--capacity", type=float, default=30.0)
    p_gen.add_argument("--output", required=True)
    p_gen.set_defaults(func=cmd_gen_cvrp)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, StoreFormatError, StratumError, OSError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET


if __name__ == "__main__":
    sys.exit(main())
