"""Guidance level selection and request/reply handling.

Maps an entropy total onto Light / Moderate / Intensive guidance under a
round-indexed threshold schedule, renders the instruction the strong
agent receives, and packages its reply into tagged sections.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

from .entropy import TaskKind


class GuidanceLevel(IntEnum):
    """Ordered guidance intensities; comparisons follow the int order."""

    LIGHT = 1
    MODERATE = 2
    INTENSIVE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


LEVEL_SECTION_TAGS: dict[GuidanceLevel, tuple[str, ...]] = {
    GuidanceLevel.LIGHT: ("verification", "correction", "encouragement"),
    GuidanceLevel.MODERATE: ("diagnosis", "framework", "suggestion"),
    GuidanceLevel.INTENSIVE: ("analysis", "reconstruction", "step_guidance"),
}

# Fixed ASCII headers so strong-agent replies split deterministically.
SECTION_HEADERS: dict[str, str] = {
    "verification": "## Verification",
    "correction": "## Correction",
    "encouragement": "## Encouragement",
    "diagnosis": "## Diagnosis",
    "framework": "## Framework",
    "suggestion": "## Suggestion",
    "analysis": "## Analysis",
    "reconstruction": "## Reconstruction",
    "step_guidance": "## Step Guidance",
}


class InvalidRoundError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConstants:
    """Threshold schedule constants; defaults follow the published values."""

    tau1_base: float = 2.0
    tau2_base: float = 3.5
    tau1_min: float = 1.0
    tau2_min: float = 2.0
    lambda_: float = 0.2
    a_max: float = 0.6


@dataclass(frozen=True)
class ThresholdState:
    """Current tau pair plus the constants and round that produced it."""

    tau1: float
    tau2: float
    round: int
    constants: PolicyConstants = PolicyConstants()

    def __post_init__(self) -> None:
        if self.round < 1:
            raise InvalidRoundError(f"round must be >= 1, got {self.round}")
        c = self.constants
        if not (c.tau1_min <= self.tau1 <= c.tau1_base):
            raise ValueError(f"tau1 {self.tau1} outside [{c.tau1_min}, {c.tau1_base}]")
        if not (c.tau2_min <= self.tau2 <= c.tau2_base):
            raise ValueError(f"tau2 {self.tau2} outside [{c.tau2_min}, {c.tau2_base}]")
        if not self.tau1 < self.tau2:
            raise ValueError(f"tau1 {self.tau1} must be < tau2 {self.tau2}")

    @classmethod
    def initial(cls, constants: PolicyConstants | None = None) -> "ThresholdState":
        c = constants or PolicyConstants()
        return cls(tau1=c.tau1_base, tau2=c.tau2_base, round=1, constants=c)


def adjustment(round: int, lambda_: float, a_max: float) -> float:
    """Saturation-protected decrement applied to both thresholds."""
    if round < 1:
        raise InvalidRoundError(f"round must be >= 1, got {round}")
    if lambda_ < 0 or a_max < 0:
        raise ValueError("lambda_ and a_max must be non-negative")
    return min(lambda_ * (round - 1), a_max)


def update_thresholds(state: ThresholdState, round: int) -> ThresholdState:
    """Lower both thresholds by the round's adjustment, floored at the mins."""
    c = state.constants
    a = adjustment(round, c.lambda_, c.a_max)
    return replace(state,
                   tau1=max(c.tau1_base - a, c.tau1_min),
                   tau2=max(c.tau2_base - a, c.tau2_min),
                   round=round)


def select_level(h_total: float, state: ThresholdState) -> GuidanceLevel:
    """Eq.-7 style three-way split with inclusive upper bounds."""
    if h_total <= state.tau1:
        return GuidanceLevel.LIGHT
    if h_total <= state.tau2:
        return GuidanceLevel.MODERATE
    return GuidanceLevel.INTENSIVE


@dataclass(frozen=True)
class GuidanceMessage:
    """Strong-agent reply packaged as (tag, text) sections."""

    level: GuidanceLevel
    sections: tuple[tuple[str, str], ...]
    rendered: str

    def __post_init__(self) -> None:
        allowed = set(LEVEL_SECTION_TAGS[self.level])
        for tag, _text in self.sections:
            if tag not in allowed:
                raise ValueError(f"tag {tag!r} not valid for {self.level.label}")


_LIGHT_TEMPLATE = """\
You are the guide in a two-agent collaboration on a {task} task. Your \
teammate's answer below is close; intervene as little as possible.

Reply using exactly these three sections:
## Verification
Briefly check whether the reasoning and final answer hold.
## Correction
Point out the single smallest fix needed, if any.
## Encouragement
One short supportive sentence.

Problem:
{problem}

Teammate response:
{response}
"""

_MODERATE_TEMPLATE = """\
You are the guide in a two-agent collaboration on a {task} task. Your \
teammate partially understands the problem. Give conceptual guidance but \
do not write the full solution; the teammate executes.

Reply using exactly these three sections:
## Diagnosis
Identify where the reasoning goes wrong and why.
## Framework
Lay out a solution framework suited to this kind of {task} problem.
## Suggestion
Concrete suggestions the teammate can apply on the next attempt.

Problem:
{problem}

Teammate response:
{response}
"""

_INTENSIVE_TEMPLATE = """\
You are the guide in a two-agent collaboration on a {task} task. Your \
teammate is struggling with this problem and needs step-by-step support.

Reply using exactly these three sections:
## Analysis
Analyse the errors in the response below.
## Reconstruction
Decompose the problem into small, ordered sub-tasks.
## Step Guidance
For each sub-task, give guidance the teammate can follow, including one \
concrete worked example.

Problem:
{problem}

Teammate response:
{response}
"""

_DEFAULT_TEMPLATES: dict[GuidanceLevel, str] = {
    GuidanceLevel.LIGHT: _LIGHT_TEMPLATE,
    GuidanceLevel.MODERATE: _MODERATE_TEMPLATE,
    GuidanceLevel.INTENSIVE: _INTENSIVE_TEMPLATE,
}


@functools.lru_cache(maxsize=8)
def _templates_from_dir(directory: str) -> dict[GuidanceLevel, str]:
    templates = dict(_DEFAULT_TEMPLATES)
    for level in GuidanceLevel:
        path = Path(directory) / f"{level.label}.txt"
        if path.is_file():
            templates[level] = path.read_text(encoding="utf-8")
    return templates


def compose_guidance_request(level: GuidanceLevel, problem: str,
                             response: str, task: TaskKind,
                             template_dir: str | Path | None = None) -> str:
    """Render the instruction sent to the strong agent for this level.

    Placeholders are substituted literally rather than via str.format so
    braces inside problems or responses survive untouched.
    """
    if template_dir is not None:
        template = _templates_from_dir(str(template_dir))[level]
    else:
        template = _DEFAULT_TEMPLATES[level]
    return (template
            .replace("{task}", task.value)
            .replace("{problem}", problem)
            .replace("{response}", response))


_HEADER_RE = re.compile(r"^\s*#{1,6}\s*(.+?)\s*:?\s*$")


def parse_guidance_reply(raw: str, level: GuidanceLevel) -> GuidanceMessage:
    """Split a reply on the level's section headers; lenient by design.

    Headerless replies land whole under the level's first tag so a
    free-form strong agent never fails the session.
    """
    tags = LEVEL_SECTION_TAGS[level]
    header_to_tag = {SECTION_HEADERS[t][3:].strip().lower(): t for t in tags}

    sections: list[tuple[str, list[str]]] = []
    preamble: list[str] = []
    for line in raw.splitlines():
        match = _HEADER_RE.match(line)
        tag = header_to_tag.get(match.group(1).lower()) if match else None
        if tag is not None:
            sections.append((tag, []))
        elif sections:
            sections[-1][1].append(line)
        else:
            preamble.append(line)

    if not sections:
        return GuidanceMessage(level=level,
                               sections=((tags[0], raw.strip()),),
                               rendered=raw)
    packed = tuple((tag, "\n".join(body).strip()) for tag, body in sections)
    return GuidanceMessage(level=level, sections=packed, rendered=raw)
