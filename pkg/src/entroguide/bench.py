"""Batch execution, metric aggregation, and table rendering.

Reports are keyed by (dataset, agent pair, mode).  Accuracy and pass
rate share one definition (successes over non-skipped sessions); the
routing mean accuracy averages each session's distance ratio.
"""

from __future__ import annotations

import csv
import io
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .agents import Verdict
from .engine import (SessionConfig, SessionMode, SessionTranscript,
                     run_session)
from .entropy import TaskKind
from .store import ExperienceStore, classify_difficulty
from .tasks import Difficulty, TaskInstance

DEFAULT_FRACTIONS: dict[Difficulty, float] = {
    Difficulty.EASY: 0.30,
    Difficulty.MEDIUM: 0.50,
    Difficulty.HARD: 0.20,
}

_STRATUM_ORDER = (Difficulty.EASY, Difficulty.MEDIUM, Difficulty.HARD)


class StratumError(Exception):
    def __init__(self, stratum: Difficulty, wanted: int, available: int):
        super().__init__(f"stratum {stratum.value} exhausted: need {wanted}, "
                         f"have {available}")
        self.stratum = stratum


def stratum_counts(fractions: dict[Difficulty, float], n: int) -> dict[Difficulty, int]:
    """Largest-remainder apportionment of n across the strata.

    Floors of fraction*n are assigned first; leftover slots go to the
    largest fractional remainders, ties broken by the fixed stratum
    order Easy < Medium < Hard.  Fractions are rationalised so binary
    rounding noise cannot perturb the remainders.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    exact = {s: Fraction(f).limit_denominator(10 ** 6) * n
             for s, f in fractions.items()}
    counts = {s: int(v) for s, v in exact.items()}
    leftover = n - sum(counts.values())
    order = sorted(_STRATUM_ORDER,
                   key=lambda s: (-(exact[s] - counts[s]),
                                  _STRATUM_ORDER.index(s)))
    for s in order[:leftover]:
        counts[s] += 1
    return counts


def stratified_sample(instances: Sequence[TaskInstance],
                      fractions: dict[Difficulty, float] | None,
                      n: int, seed: int) -> list[TaskInstance]:
    """Seeded, without-replacement sample honouring the difficulty split."""
    if fractions is None:
        fractions = DEFAULT_FRACTIONS
    counts = stratum_counts(fractions, n)
    pools: dict[Difficulty, list[TaskInstance]] = {s: [] for s in _STRATUM_ORDER}
    for instance in instances:
        pools[classify_difficulty(instance)].append(instance)
    rng = random.Random(seed)
    sample: list[TaskInstance] = []
    for stratum in _STRATUM_ORDER:
        wanted = counts[stratum]
        pool = pools[stratum]
        if wanted > len(pool):
            raise StratumError(stratum, wanted, len(pool))
        sample.extend(rng.sample(pool, wanted))
    return sample


@dataclass(frozen=True)
class MetricCell:
    """Aggregated metrics for one (dataset, pair, mode) cell."""

    n: int
    accuracy_pct: float
    pass_rate_pct: float
    improvement_rate_pct: float
    mean_accuracy_pct: float | None
    avg_rounds: float
    rag_usage_pct: float
    skipped: int = 0


def compute_metrics(transcripts: Sequence[SessionTranscript]) -> MetricCell:
    """Hand-checkable aggregation over one cell's transcripts."""
    if not transcripts:
        raise ValueError("cannot compute metrics over zero transcripts")
    n = len(transcripts)
    skipped = sum(1 for t in transcripts if t.checker_skipped)
    scored = n - skipped
    successes = sum(1 for t in transcripts if t.success)
    accuracy = 100.0 * successes / scored if scored else 0.0

    initially_wrong = [t for t in transcripts
                       if t.rounds and t.rounds[0].verdict is Verdict.INCORRECT]
    recovered = sum(1 for t in initially_wrong if t.success)
    improvement = (100.0 * recovered / len(initially_wrong)
                   if initially_wrong else 0.0)

    routing_scores = [t.accuracy_pct for t in transcripts
                      if t.accuracy_pct is not None]
    mean_accuracy = (sum(routing_scores) / len(routing_scores)
                     if routing_scores else None)

    avg_rounds = sum(t.rounds_used for t in transcripts) / n
    rag_usage = 100.0 * sum(1 for t in transcripts if t.rag_used) / n
    return MetricCell(n=n, accuracy_pct=accuracy, pass_rate_pct=accuracy,
                      improvement_rate_pct=improvement,
                      mean_accuracy_pct=mean_accuracy, avg_rounds=avg_rounds,
                      rag_usage_pct=rag_usage, skipped=skipped)


CellKey = tuple[str, str, str]  # (dataset, pair, mode)


@dataclass
class BenchReport:
    cells: dict[CellKey, MetricCell]

    def datasets(self) -> list[str]:
        return sorted({key[0] for key in self.cells})

    def pairs(self) -> list[str]:
        return sorted({key[1] for key in self.cells})

    def modes(self) -> list[str]:
        order = [m.value for m in SessionMode]
        present = {key[2] for key in self.cells}
        return [m for m in order if m in present] + sorted(
            m for m in present if m not in order)


_CSV_COLUMNS = ("dataset", "pair", "mode", "n", "accuracy_pct",
                "pass_rate_pct", "improvement_rate_pct", "mean_accuracy_pct",
                "avg_rounds", "rag_usage_pct", "skipped")


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def render_report(report: BenchReport, format: str = "markdown") -> str:
    if format == "csv":
        return _render_csv(report)
    if format == "markdown":
        return _render_markdown(report)
    raise ValueError(f"unknown report format: {format!r}")


def _render_csv(report: BenchReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for dataset in report.datasets():
        for mode in report.modes():
            for pair in report.pairs():
                cell = report.cells.get((dataset, pair, mode))
                if cell is None:
                    continue
                writer.writerow([
                    dataset, pair, mode, cell.n, _fmt(cell.accuracy_pct),
                    _fmt(cell.pass_rate_pct), _fmt(cell.improvement_rate_pct),
                    _fmt(cell.mean_accuracy_pct), _fmt(cell.avg_rounds),
                    _fmt(cell.rag_usage_pct), cell.skipped,
                ])
    return buffer.getvalue()


def _headline(cell: MetricCell) -> float:
    if cell.mean_accuracy_pct is not None:
        return cell.mean_accuracy_pct
    return cell.accuracy_pct


def _render_markdown(report: BenchReport) -> str:
    lines: list[str] = []
    pairs = report.pairs()
    for dataset in report.datasets():
        lines.append(f"## {dataset}")
        lines.append("")
        lines.append("| Method | " + " | ".join(pairs) + " |")
        lines.append("|" + "---|" * (len(pairs) + 1))
        for mode in report.modes():
            row = [mode]
            any_cell = False
            for pair in pairs:
                cell = report.cells.get((dataset, pair, mode))
                if cell is None:
                    row.append("")
                else:
                    any_cell = True
                    row.append(_fmt(_headline(cell)))
            if any_cell:
                lines.append("| " + " | ".join(row) + " |")
        lines.append("")
        lines.append("| Pair | Mode | n | Improvement % | Avg rounds | RAG usage % | Skipped |")
        lines.append("|" + "---|" * 7)
        for mode in report.modes():
            for pair in pairs:
                cell = report.cells.get((dataset, pair, mode))
                if cell is None:
                    continue
                lines.append("| " + " | ".join([
                    pair, mode, str(cell.n),
                    _fmt(cell.improvement_rate_pct), _fmt(cell.avg_rounds),
                    _fmt(cell.rag_usage_pct), str(cell.skipped)]) + " |")
        lines.append("")
    return "\n".join(lines)


def run_batch(tasks: Sequence[TaskInstance], config: SessionConfig,
              repo: ExperienceStore | None = None,
              workers: int = 1) -> list[SessionTranscript]:
    """Run one session per task; results come back in task order.

    Sessions are independent except for the shared repository, whose
    writes are serialised by the store's own lock.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        return [run_session(task, config, repo) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_session, task, config, repo)
                   for task in tasks]
        return [f.result() for f in futures]


def run_modes(tasks: Sequence[TaskInstance], base_config: SessionConfig,
              modes: Sequence[SessionMode],
              repo: ExperienceStore | None = None, workers: int = 1,
              dataset: str = "dataset") -> tuple[BenchReport, dict[SessionMode, list[SessionTranscript]]]:
    """Run every mode over the task list and aggregate one report."""
    pair = f"{base_config.strong_profile.name}+{base_config.weak_profile.name}"
    cells: dict[CellKey, MetricCell] = {}
    by_mode: dict[SessionMode, list[SessionTranscript]] = {}
    for mode in modes:
        config = replace(base_config, mode=mode)
        mode_repo = repo if mode is SessionMode.GUIDED_RAG else None
        transcripts = run_batch(tasks, config, mode_repo, workers=workers)
        by_mode[mode] = transcripts
        cells[(dataset, pair, mode.value)] = compute_metrics(transcripts)
    return BenchReport(cells=cells), by_mode


def split_by_kind(tasks: Sequence[TaskInstance]) -> dict[TaskKind, list[TaskInstance]]:
    out: dict[TaskKind, list[TaskInstance]] = {}
    for task in tasks:
        out.setdefault(task.kind, []).append(task)
    return out
