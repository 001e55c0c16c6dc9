"""Benchmark task instances, answer checkers, and dataset ingestion.

Dataset files are JSONL with a ``kind`` discriminator per line.  Code
checking never executes candidate code in-process: it either delegates
to a configured sandbox command or reports the instance as skipped.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .entropy import TaskKind
from .routing import (MAX_EXACT_CUSTOMERS, RouteEvaluation, RoutingInstance,
                      evaluate_route, parse_route)


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @classmethod
    def parse(cls, value: str) -> "Difficulty":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown difficulty: {value!r}") from None


class DatasetError(Exception):
    """Raised for unreadable, malformed, or invariant-violating datasets."""


@dataclass(frozen=True)
class MathReference:
    answer: float


@dataclass(frozen=True)
class CodeReference:
    entry_point: str
    tests: tuple[str, ...]


@dataclass(frozen=True)
class TaskInstance:
    """One benchmark problem; a None reference means label-free."""

    id: str
    kind: TaskKind
    problem: str
    reference: MathReference | CodeReference | RoutingInstance | None
    difficulty: Difficulty | None = None

    def __post_init__(self) -> None:
        if self.reference is None:
            return
        expected = {TaskKind.MATH: MathReference,
                    TaskKind.CODE: CodeReference,
                    TaskKind.ROUTING: RoutingInstance}[self.kind]
        if not isinstance(self.reference, expected):
            raise DatasetError(
                f"task {self.id}: reference type {type(self.reference).__name__} "
                f"does not match kind {self.kind.value}")

    def to_dict(self) -> dict:
        ref: dict | None
        if self.reference is None:
            ref = None
        elif isinstance(self.reference, MathReference):
            ref = {"answer": self.reference.answer}
        elif isinstance(self.reference, CodeReference):
            ref = {"entry_point": self.reference.entry_point,
                   "tests": list(self.reference.tests)}
        else:
            ref = self.reference.to_dict()
        out = {"id": self.id, "kind": self.kind.value, "problem": self.problem,
               "reference": ref}
        if self.difficulty is not None:
            out["difficulty"] = self.difficulty.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TaskInstance":
        kind = TaskKind.parse(data["kind"])
        ref_data = data.get("reference")
        reference: MathReference | CodeReference | RoutingInstance | None
        if ref_data is None:
            reference = None
        elif kind is TaskKind.MATH:
            reference = MathReference(answer=float(ref_data["answer"]))
        elif kind is TaskKind.CODE:
            reference = CodeReference(entry_point=str(ref_data["entry_point"]),
                                      tests=tuple(ref_data["tests"]))
        else:
            reference = RoutingInstance.from_dict(ref_data)
        difficulty = (Difficulty.parse(data["difficulty"])
                      if data.get("difficulty") else None)
        return cls(id=str(data["id"]), kind=kind, problem=str(data["problem"]),
                   reference=reference, difficulty=difficulty)


def load_dataset(path: str | Path) -> list[TaskInstance]:
    """Read a JSONL dataset, validating each line and routing solvability."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    instances = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            instance = TaskInstance.from_dict(data)
        except DatasetError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed task line: {exc}") from exc
        if instance.kind is TaskKind.ROUTING:
            routing = instance.reference
            assert isinstance(routing, RoutingInstance)
            if (routing.optimal_distance is None
                    and len(routing.customers) > MAX_EXACT_CUSTOMERS):
                raise DatasetError(
                    f"{path}:{lineno}: routing task {instance.id} has "
                    f"{len(routing.customers)} customers and no optimal_distance; "
                    f"exact search is limited to {MAX_EXACT_CUSTOMERS}")
        instances.append(instance)
    return instances


def save_dataset(instances: list[TaskInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for instance in instances:
            fh.write(json.dumps(instance.to_dict(), sort_keys=True) + "\n")


# --- math checking -----------------------------------------------------

_NUMBER_RE = re.compile(r"[-+]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[-+]?\d+(?:\.\d+)?|[-+]?\.\d+")
_MARKER_RE = re.compile(r"####|answer\s*:|=", re.IGNORECASE)


def extract_answer(response: str) -> float | None:
    """Number after the last marker (####, answer:, =), else last number."""
    marker_end = None
    for match in _MARKER_RE.finditer(response):
        marker_end = match.end()
    if marker_end is not None:
        after = _NUMBER_RE.search(response, marker_end)
        if after is not None:
            return float(after.group(0).replace(",", ""))
    matches = _NUMBER_RE.findall(response)
    if matches:
        return float(matches[-1].replace(",", ""))
    return None


def check_math(response: str, reference: float) -> bool:
    candidate = extract_answer(response)
    if candidate is None:
        return False
    return math.isclose(candidate, reference, rel_tol=1e-6, abs_tol=1e-9)


# --- code checking -----------------------------------------------------

class CodeVerdict(Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class SandboxConfig:
    """External command that runs a candidate program file.

    ``{file}`` in the argument list is replaced by the written path; when
    absent the path is appended.  No command configured means code tasks
    are skipped rather than executed in-process.
    """

    command: tuple[str, ...]
    timeout: float = 10.0

    @classmethod
    def from_value(cls, value, timeout: float = 10.0) -> "SandboxConfig":
        if isinstance(value, str):
            parts = tuple(shlex.split(value))
        else:
            parts = tuple(str(v) for v in value)
        if not parts:
            raise ValueError("empty sandbox command")
        return cls(command=parts, timeout=timeout)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def extract_code(response: str) -> str:
    match = _FENCE_RE.search(response)
    if match:
        return match.group(1)
    return response


def check_code(response: str, reference: CodeReference,
               sandbox: SandboxConfig | None = None) -> tuple[CodeVerdict, str]:
    """Run extracted code plus the reference assertions under the sandbox."""
    if sandbox is None:
        return CodeVerdict.SKIPPED, "no sandbox command configured"
    program = extract_code(response) + "\n\n" + "\n".join(reference.tests) + "\n"
    with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False,
                                     encoding="utf-8") as fh:
        fh.write(program)
        path = fh.name
    argv = [arg.replace("{file}", path) for arg in sandbox.command]
    if not any("{file}" in arg for arg in sandbox.command):
        argv.append(path)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True,
                              timeout=sandbox.timeout)
    except subprocess.TimeoutExpired:
        return CodeVerdict.FAIL, f"timeout after {sandbox.timeout}s"
    except OSError as exc:
        return CodeVerdict.FAIL, f"sandbox command failed to start: {exc}"
    finally:
        Path(path).unlink(missing_ok=True)
    if proc.returncode == 0:
        return CodeVerdict.PASS, "all assertions passed"
    tail = (proc.stderr or proc.stdout).strip().splitlines()
    return CodeVerdict.FAIL, tail[-1] if tail else f"exit status {proc.returncode}"


# --- unified checking --------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    """Deterministic checker outcome for one response."""

    correct: bool
    skipped: bool
    rationale: str
    accuracy_pct: float | None = None


def run_checker(task: TaskInstance, response: str,
                sandbox: SandboxConfig | None = None) -> CheckResult | None:
    """Dispatch to the task's ground-truth checker; None when label-free."""
    if task.reference is None:
        return None
    if task.kind is TaskKind.MATH:
        assert isinstance(task.reference, MathReference)
        ok = check_math(response, task.reference.answer)
        return CheckResult(correct=ok, skipped=False,
                           rationale="answer matches reference" if ok
                           else "answer does not match reference")
    if task.kind is TaskKind.CODE:
        assert isinstance(task.reference, CodeReference)
        verdict, note = check_code(response, task.reference, sandbox)
        return CheckResult(correct=verdict is CodeVerdict.PASS,
                           skipped=verdict is CodeVerdict.SKIPPED,
                           rationale=note)
    assert isinstance(task.reference, RoutingInstance)
    routes = parse_route(response, task.reference)
    if not routes:
        return CheckResult(correct=False, skipped=False,
                           rationale="no route lines found", accuracy_pct=0.0)
    evaluation: RouteEvaluation = evaluate_route(routes, task.reference)
    if not evaluation.feasible:
        return CheckResult(correct=False, skipped=False,
                           rationale=evaluation.diagnostic or "infeasible routes",
                           accuracy_pct=0.0)
    return CheckResult(correct=True, skipped=False,
                       rationale=f"feasible, distance {evaluation.distance:.3f}",
                       accuracy_pct=evaluation.accuracy_pct)


# --- difficulty heuristics (used when instances carry no label) --------

def numeric_operand_count(problem: str) -> int:
    return len(re.findall(r"\d+(?:\.\d+)?", problem))


def heuristic_difficulty(task: TaskInstance) -> Difficulty:
    if task.kind is TaskKind.MATH:
        count = numeric_operand_count(task.problem)
        if count <= 2:
            return Difficulty.EASY
        if count <= 4:
            return Difficulty.MEDIUM
        return Difficulty.HARD
    if task.kind is TaskKind.CODE:
        count = (len(task.reference.tests)
                 if isinstance(task.reference, CodeReference) else 0)
        if count <= 1:
            return Difficulty.EASY
        if count <= 3:
            return Difficulty.MEDIUM
        return Difficulty.HARD
    count = (len(task.reference.customers)
             if isinstance(task.reference, RoutingInstance) else 0)
    if count <= 5:
        return Difficulty.EASY
    if count <= 10:
        return Difficulty.MEDIUM
    return Difficulty.HARD


# --- ingestion of common public dataset layouts ------------------------

_GSM8K_FINAL_RE = re.compile(r"####\s*([-+]?[\d,]+(?:\.\d+)?)")
_DEF_RE = re.compile(r"^\s*def\s+(\w+)\s*\(", re.MULTILINE)


def ingest_gsm8k(in_path: str | Path, out_path: str | Path) -> int:
    """Convert question/answer records to math task instances."""
    instances = []
    text = Path(in_path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            question = data["question"]
            match = _GSM8K_FINAL_RE.search(data["answer"])
            if match is None:
                raise ValueError("no '####' final answer")
            answer = float(match.group(1).replace(",", ""))
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"{in_path}:{lineno}: {exc}") from exc
        instances.append(TaskInstance(
            id=f"gsm8k-{lineno}", kind=TaskKind.MATH, problem=question,
            reference=MathReference(answer=answer)))
    save_dataset(instances, out_path)
    return len(instances)


def ingest_mbpp(in_path: str | Path, out_path: str | Path) -> int:
    """Convert text/code/test_list records to code task instances."""
    instances = []
    text = Path(in_path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            problem = data["text"]
            tests = tuple(data["test_list"])
            match = _DEF_RE.search(data["code"])
            if match is None:
                raise ValueError("no function definition in reference code")
            entry_point = match.group(1)
            task_id = data.get("task_id", lineno)
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"{in_path}:{lineno}: {exc}") from exc
        instances.append(TaskInstance(
            id=f"mbpp-{task_id}", kind=TaskKind.CODE, problem=problem,
            reference=CodeReference(entry_point=entry_point, tests=tests)))
    save_dataset(instances, out_path)
    return len(instances)
