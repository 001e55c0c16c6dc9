"""Multi-component response entropy scoring.

A weak agent's reply is scored along five axes (word-usage dispersion,
hedging vocabulary, structural density, logical coherence, problem
relevance).  The first three add to the total, the last two subtract,
and the result is clamped at zero.  Higher totals mean the agent
understood less.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Callable, Sequence

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class TaskKind(Enum):
    MATH = "math"
    CODE = "code"
    ROUTING = "routing"

    @classmethod
    def parse(cls, value: str) -> "TaskKind":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown task kind: {value!r}") from None


@dataclass(frozen=True)
class TokenDistribution:
    """Lowercased token stream of a text plus its occurrence counts."""

    tokens: tuple[str, ...]
    counts: dict[str, int]
    total: int

    def probabilities(self) -> dict[str, float]:
        if self.total == 0:
            return {}
        return {t: c / self.total for t, c in self.counts.items()}


@dataclass(frozen=True)
class UncertaintyLexicon:
    """Weighted hedge patterns for one task kind.

    Patterns are stored lowercase; multi-word patterns match consecutive
    tokens.  Patterns with no alphanumeric content (e.g. "?") are counted
    as raw substring occurrences since tokenization would drop them.
    """

    entries: tuple[tuple[str, float], ...]
    task_kind: TaskKind
    cap: float = 3.0

    def __post_init__(self) -> None:
        if self.cap <= 0:
            raise ValueError("lexicon cap must be positive")
        for pattern, weight in self.entries:
            if not pattern:
                raise ValueError("empty lexicon pattern")
            if pattern != pattern.lower():
                raise ValueError(f"lexicon pattern not lowercase: {pattern!r}")
            if weight < 0:
                raise ValueError(f"negative weight for pattern {pattern!r}")


@dataclass(frozen=True)
class WeightMatrix:
    """Per-component weights applied in the signed aggregate."""

    w_expression: float = 1.0
    w_uncertainty: float = 1.0
    w_structure: float = 1.0
    w_coherence: float = 1.0
    w_relevance: float = 1.0
    task_kind: TaskKind = TaskKind.MATH

    def __post_init__(self) -> None:
        for name in ("w_expression", "w_uncertainty", "w_structure",
                     "w_coherence", "w_relevance"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class EntropyReport:
    """Component scores and signed, zero-clamped aggregate for one reply."""

    h_expression: float
    h_uncertainty: float
    h_structure: float
    h_coherence: float
    h_relevance: float
    h_total: float
    understanding_hint: float

    def to_dict(self) -> dict[str, float]:
        return {
            "h_expression": self.h_expression,
            "h_uncertainty": self.h_uncertainty,
            "h_structure": self.h_structure,
            "h_coherence": self.h_coherence,
            "h_relevance": self.h_relevance,
            "h_total": self.h_total,
            "understanding_hint": self.understanding_hint,
        }


def tokenize(text: str) -> TokenDistribution:
    """Lowercase and split on maximal runs of non-alphanumeric characters."""
    tokens = tuple(t for t in _TOKEN_SPLIT.split(text.lower()) if t)
    return TokenDistribution(tokens=tokens, counts=dict(Counter(tokens)),
                             total=len(tokens))


def expression_entropy(dist: TokenDistribution) -> float:
    """Shannon entropy (bits) of the token distribution; 0 for <= 1 tokens."""
    if dist.total <= 1:
        return 0.0
    h = 0.0
    for count in dist.counts.values():
        p = count / dist.total
        h -= p * math.log2(p)
    return max(0.0, h)


def _count_ngram(tokens: Sequence[str], gram: Sequence[str]) -> int:
    n = len(gram)
    if n == 0 or n > len(tokens):
        return 0
    gram = tuple(gram)
    return sum(1 for i in range(len(tokens) - n + 1)
               if tuple(tokens[i:i + n]) == gram)


def uncertainty_entropy(response: str, lexicon: UncertaintyLexicon) -> float:
    """Sum of weight x occurrences over lexicon patterns, clamped at cap."""
    tokens = tokenize(response).tokens
    lowered = response.lower()
    total = 0.0
    for pattern, weight in lexicon.entries:
        gram = tokenize(pattern).tokens
        if gram:
            hits = _count_ngram(tokens, gram)
        else:
            hits = lowered.count(pattern)
        total += weight * hits
    return min(total, lexicon.cap)


# Structural markers signal procedural organisation; each distinct one
# present takes 0.3 off the length term.  "```" is checked on raw text
# because tokenization strips it.
STRUCTURE_MARKERS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.MATH: ("first", "then", "because", "therefore", "step",
                    "thus", "finally"),
    TaskKind.CODE: ("def", "return", "if", "for", "while", "function",
                    "class", "```"),
    TaskKind.ROUTING: ("route", "vehicle", "capacity", "depot", "then",
                       "next"),
}

STRUCTURE_LENGTH_SCALE = 40.0
STRUCTURE_MARKER_CREDIT = 0.3
STRUCTURE_MARKER_CAP = 1.5


def structure_entropy(response: str, task: TaskKind,
                      markers: Sequence[str] | None = None) -> float:
    if markers is None:
        markers = STRUCTURE_MARKERS[task]
    dist = tokenize(response)
    length_term = math.log2(1.0 + dist.total / STRUCTURE_LENGTH_SCALE)
    token_set = set(dist.tokens)
    lowered = response.lower()
    present = 0
    for marker in markers:
        if tokenize(marker).tokens:
            if marker in token_set:
                present += 1
        elif marker in lowered:
            present += 1
    marker_term = min(present * STRUCTURE_MARKER_CREDIT, STRUCTURE_MARKER_CAP)
    return max(0.0, length_term - marker_term)


def _has_equality_chain(response: str) -> bool:
    # A bare "=" between whitespace-separated neighbours that both carry
    # digits, e.g. "8 - 3 = 5".
    parts = response.split()
    for i in range(1, len(parts) - 1):
        if parts[i] == "=" and any(c.isdigit() for c in parts[i - 1]) \
                and any(c.isdigit() for c in parts[i + 1]):
            return True
    return False


def _has_route_listing(response: str) -> bool:
    if "->" in response or "→" in response:
        return True
    return re.search(r"\broute\s*\d*\s*:", response.lower()) is not None


def _has_bigram(tokens: Sequence[str], a: str, b: str) -> bool:
    return _count_ngram(tokens, (a, b)) > 0 or _count_ngram(tokens, (b, a)) > 0


CoherencePattern = tuple[str, Callable[[str, tuple[str, ...]], bool]]


def _token_pattern(*words: str) -> Callable[[str, tuple[str, ...]], bool]:
    wanted = set(words)
    return lambda _response, tokens: bool(wanted.intersection(tokens))


COHERENCE_PATTERNS: dict[TaskKind, tuple[CoherencePattern, ...]] = {
    TaskKind.MATH: (
        ("equality_chain", lambda r, _t: _has_equality_chain(r)),
        ("therefore", _token_pattern("therefore")),
        ("so", _token_pattern("so")),
        ("hence", _token_pattern("hence")),
        ("substitute", _token_pattern("substitute", "substituting")),
    ),
    TaskKind.CODE: (
        ("function_definition", _token_pattern("def", "function")),
        ("control_flow", _token_pattern("if", "for", "while", "else", "elif")),
        ("return_statement", _token_pattern("return")),
    ),
    TaskKind.ROUTING: (
        ("route_listing", lambda r, _t: _has_route_listing(r)),
        ("capacity_check", _token_pattern("capacity")),
        ("distance_total", lambda _r, t: _has_bigram(t, "total", "distance")),
    ),
}

COHERENCE_CREDIT = 0.25
COHERENCE_CAP = 1.5


def coherence_entropy(response: str, task: TaskKind,
                      patterns: Sequence[CoherencePattern] | None = None) -> float:
    """0.25 per distinct coherence pattern matched, capped at 1.5."""
    if patterns is None:
        patterns = COHERENCE_PATTERNS[task]
    tokens = tokenize(response).tokens
    matched = sum(1 for _name, predicate in patterns
                  if predicate(response, tokens))
    return min(matched * COHERENCE_CREDIT, COHERENCE_CAP)


RELEVANCE_SCALE = 1.5
LENGTH_FIT_LOW = 0.2
LENGTH_FIT_HIGH = 5.0
LENGTH_FIT_PENALTY = 0.5


def relevance_entropy(response: str, problem: str, task: TaskKind) -> float:
    """Vocabulary overlap with the problem, discounted for odd lengths.

    overlap = 1.5 * Jaccard(problem tokens, response tokens); a response
    shorter than 0.2x or longer than 5x the problem halves the credit.
    Subtracted in the aggregate, so higher relevance lowers the total.
    """
    p_dist = tokenize(problem)
    r_dist = tokenize(response)
    p_set, r_set = set(p_dist.tokens), set(r_dist.tokens)
    union = p_set | r_set
    if not union:
        return 0.0
    overlap = RELEVANCE_SCALE * len(p_set & r_set) / len(union)
    in_window = (LENGTH_FIT_LOW * p_dist.total <= r_dist.total
                 <= LENGTH_FIT_HIGH * p_dist.total)
    fit = 1.0 if in_window else LENGTH_FIT_PENALTY
    return overlap * fit


def aggregate_entropy(h_expression: float, h_uncertainty: float,
                      h_structure: float, h_coherence: float,
                      h_relevance: float, weights: WeightMatrix) -> float:
    """Signed weighted sum of components, clamped at zero."""
    signed = (weights.w_expression * h_expression
              + weights.w_uncertainty * h_uncertainty
              + weights.w_structure * h_structure
              - weights.w_coherence * h_coherence
              - weights.w_relevance * h_relevance)
    return max(0.0, signed)


def understanding_hint(h_total: float) -> float:
    # Any bounded, strictly decreasing map works; display only.
    return 1.0 / (1.0 + h_total)


def understanding_entropy(problem: str, response: str, task: TaskKind,
                          weights: WeightMatrix | None = None,
                          lexicon: UncertaintyLexicon | None = None,
                          markers: Sequence[str] | None = None) -> EntropyReport:
    """Score a response against its problem and aggregate the components."""
    if weights is None:
        weights = default_weights(task)
    if lexicon is None:
        lexicon = default_lexicon(task)
    if weights.task_kind is not task or lexicon.task_kind is not task:
        raise ValueError("weights/lexicon task kind must match the scored task")
    dist = tokenize(response)
    h_e = expression_entropy(dist)
    h_u = uncertainty_entropy(response, lexicon)
    h_s = structure_entropy(response, task, markers=markers)
    h_c = coherence_entropy(response, task)
    h_r = relevance_entropy(response, problem, task)
    h_total = aggregate_entropy(h_e, h_u, h_s, h_c, h_r, weights)
    return EntropyReport(h_expression=h_e, h_uncertainty=h_u, h_structure=h_s,
                         h_coherence=h_c, h_relevance=h_r, h_total=h_total,
                         understanding_hint=understanding_hint(h_total))


_LEXICON_CACHE: dict[TaskKind, UncertaintyLexicon] = {}


def _load_lexicon_data() -> dict:
    with resources.files("entroguide.data").joinpath(
            "uncertainty_lexicon.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def default_lexicon(task: TaskKind) -> UncertaintyLexicon:
    """Shipped lexicon: common hedges plus per-task additions."""
    cached = _LEXICON_CACHE.get(task)
    if cached is not None:
        return cached
    data = _load_lexicon_data()
    entries = dict(data["common"])
    entries.update(data.get(task.value, {}))
    lexicon = UncertaintyLexicon(
        entries=tuple(sorted(entries.items())),
        task_kind=task,
        cap=float(data.get("cap", 3.0)),
    )
    _LEXICON_CACHE[task] = lexicon
    return lexicon


def default_weights(task: TaskKind) -> WeightMatrix:
    # All-ones so the aggregate reduces to the plain signed sum.
    return WeightMatrix(task_kind=task)


def build_lexicon(entries: dict[str, float], task: TaskKind,
                  cap: float = 3.0) -> UncertaintyLexicon:
    return UncertaintyLexicon(
        entries=tuple(sorted((k.lower(), float(v)) for k, v in entries.items())),
        task_kind=task, cap=cap)
