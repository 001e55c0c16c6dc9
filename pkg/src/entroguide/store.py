"""Experience repository with TF-IDF retrieval.

Successful collaborations are kept as six-field records and retrieved by
cosine similarity over tf * ln(N/df) weights.  The natural log is used
because the base cancels in cosine similarity, so retrieval order does
not depend on it.
"""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

from .entropy import tokenize
from .tasks import Difficulty, TaskInstance, heuristic_difficulty

UNASSIGNED_ID = -1
DEFAULT_TOP_K = 3
DEFAULT_S_MIN = 0.1


class StoreFormatError(Exception):
    """Raised when a repository file cannot be parsed or violates invariants."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass
class ExperienceRecord:
    """One stored collaboration: problem, steps, answer, and bookkeeping."""

    problem_text: str
    solution_steps: tuple[str, ...]
    final_answer: str
    difficulty: Difficulty
    success_entropy: float
    usage_count: int = 0
    id: int = UNASSIGNED_ID

    def __post_init__(self) -> None:
        if self.usage_count < 0:
            raise ValueError("usage_count must be non-negative")
        if self.success_entropy < 0:
            raise ValueError("success_entropy must be non-negative")

    def to_dict(self) -> dict:
        return {
            "problem_text": self.problem_text,
            "solution_steps": list(self.solution_steps),
            "final_answer": self.final_answer,
            "difficulty": self.difficulty.value,
            "success_entropy": self.success_entropy,
            "usage_count": self.usage_count,
            "id": self.id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperienceRecord":
        return cls(problem_text=str(data["problem_text"]),
                   solution_steps=tuple(data["solution_steps"]),
                   final_answer=str(data["final_answer"]),
                   difficulty=Difficulty.parse(data["difficulty"]),
                   success_entropy=float(data["success_entropy"]),
                   usage_count=int(data["usage_count"]),
                   id=int(data["id"]))


@dataclass(frozen=True)
class VectorizerState:
    """Vocabulary, per-term document frequency, and record count."""

    vocabulary: dict[str, int]
    document_frequency: dict[str, int]
    record_count: int

    def validate(self) -> None:
        if set(self.vocabulary) != set(self.document_frequency):
            raise StoreFormatError("vocabulary and df key sets differ")
        for term, df in self.document_frequency.items():
            if not 1 <= df <= self.record_count:
                raise StoreFormatError(
                    f"df({term!r}) = {df} outside [1, {self.record_count}]")


@dataclass(frozen=True)
class RetrievalHit:
    record: ExperienceRecord
    similarity: float
    injected: bool


def cosine_similarity(a: dict[str, float], b: dict[str, float]) -> float:
    """Cosine over sparse vectors; zero vectors yield similarity 0."""
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(v * b.get(t, 0.0) for t, v in a.items())
    return dot / (norm_a * norm_b)


class ExperienceStore:
    """Append-only record repository with incremental TF-IDF statistics.

    Mutations (inserts and the usage bumps done by injected retrievals)
    pass through one lock; concurrent readers are safe because records
    and returned vectors are plain values.
    """

    def __init__(self) -> None:
        self.records: list[ExperienceRecord] = []
        self._df: Counter[str] = Counter()
        self._term_counts: list[Counter[str]] = []
        # Record vectors depend on global N/df, so the cache is dropped on
        # every insert rather than patched incrementally.
        self._vector_cache: list[dict[str, float]] | None = None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def record_count(self) -> int:
        return len(self.records)

    def vectorizer_state(self) -> VectorizerState:
        vocabulary = {term: i for i, term in enumerate(sorted(self._df))}
        return VectorizerState(vocabulary=vocabulary,
                               document_frequency=dict(self._df),
                               record_count=len(self.records))

    def encode(self, problem: str) -> dict[str, float]:
        """tf * ln(N/df) weights for in-vocabulary terms of the problem.

        Terms outside the vocabulary contribute nothing; an empty
        repository encodes everything to the zero vector.  Terms present
        in every record keep an explicit 0.0 weight.
        """
        n = len(self.records)
        if n == 0:
            return {}
        counts = Counter(tokenize(problem).tokens)
        return {term: tf * math.log(n / self._df[term])
                for term, tf in counts.items() if term in self._df}

    def _record_vectors(self) -> list[dict[str, float]]:
        if self._vector_cache is None:
            n = len(self.records)
            self._vector_cache = [
                {term: tf * math.log(n / self._df[term])
                 for term, tf in counts.items()}
                for counts in self._term_counts]
        return self._vector_cache

    def retrieve_top_k(self, problem: str, k: int = DEFAULT_TOP_K,
                       s_min: float = DEFAULT_S_MIN) -> list[RetrievalHit]:
        """Top-k records by cosine similarity to the problem.

        Ties break toward higher usage_count, then lower id.  Hits at or
        above s_min are marked injected and have their usage_count bumped.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self.encode(problem)
        scored = []
        for vector, record in zip(self._record_vectors(), self.records):
            sim = cosine_similarity(query, vector)
            scored.append((sim, record))
        scored.sort(key=lambda pair: (-pair[0], -pair[1].usage_count,
                                      pair[1].id))
        hits = []
        with self._lock:
            for sim, record in scored[:k]:
                injected = sim >= s_min
                if injected:
                    record.usage_count += 1
                hits.append(RetrievalHit(record=record, similarity=sim,
                                         injected=injected))
        return hits

    def insert(self, record: ExperienceRecord) -> ExperienceRecord:
        """Append with the next id and fold its terms into the statistics."""
        with self._lock:
            next_id = self.records[-1].id + 1 if self.records else 0
            stored = replace(record, id=next_id)
            counts = Counter(tokenize(stored.problem_text).tokens)
            self.records.append(stored)
            self._term_counts.append(counts)
            self._df.update(counts.keys())
            self._vector_cache = None
        return stored

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperienceStore":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StoreFormatError(f"cannot read repository {path}: {exc}") from exc
        store = cls()
        last_id = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = ExperienceRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreFormatError(
                    f"{path}:{lineno}: malformed record: {exc}",
                    line=lineno) from exc
            if last_id is not None and record.id <= last_id:
                raise StoreFormatError(
                    f"{path}:{lineno}: id {record.id} not strictly increasing",
                    line=lineno)
            last_id = record.id
            store.records.append(record)
            counts = Counter(tokenize(record.problem_text).tokens)
            store._term_counts.append(counts)
            store._df.update(counts.keys())
        store.vectorizer_state().validate()
        return store

    def df_histogram(self) -> dict[int, int]:
        hist: Counter[int] = Counter(self._df.values())
        return dict(sorted(hist.items()))


def classify_difficulty(task: TaskInstance) -> Difficulty:
    """Labeled difficulty when present, deterministic heuristic otherwise."""
    if task.difficulty is not None:
        return task.difficulty
    return heuristic_difficulty(task)
