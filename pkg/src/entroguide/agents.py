"""Agent backends, role prompts, and verification.

Two backend families sit behind one ``generate`` surface: remote
chat-completion endpoints (HTTP, with retry/backoff) and scripted agents
that replay fixed reply sequences for reproducible tests.  Verification
prefers the task's deterministic checker; the strong agent is consulted
only for label-free instances.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .entropy import TaskKind
from .store import ExperienceRecord
from .tasks import CheckResult, SandboxConfig, TaskInstance, run_checker

DEFAULT_AUTH_ENV = "ENTROGUIDE_API_KEY"


class AgentError(Exception):
    pass


class BackendUnavailableError(AgentError):
    """Transport kept failing after the profile's retry budget."""


class RemoteError(AgentError):
    """The endpoint answered with a non-success status or a bad body."""


class ScriptError(AgentError):
    """A scripted agent was asked for more replies than its script holds."""


class Strength(Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    model: str
    auth_env: str = DEFAULT_AUTH_ENV

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("remote profile needs a base URL")
        if not self.model:
            raise ValueError("remote profile needs a model identifier")


@dataclass(frozen=True)
class ScriptedSource:
    script_path: str


@dataclass(frozen=True)
class AgentProfile:
    name: str
    strength: Strength
    backend: RemoteEndpoint | ScriptedSource
    role_template: str = ""
    temperature: float = 0.0
    max_reply_tokens: int = 1024
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_reply_tokens < 1:
            raise ValueError("max_reply_tokens must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


class ChatRole(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: ChatRole
    content: str

    def __post_init__(self) -> None:
        if self.content is None:
            raise ValueError("turn content may be empty but never None")


def encode_messages(history: Sequence[ChatTurn]) -> list[dict[str, str]]:
    return [{"role": turn.role.value, "content": turn.content}
            for turn in history]


def decode_messages(messages: Sequence[dict]) -> list[ChatTurn]:
    return [ChatTurn(role=ChatRole(m["role"]), content=m["content"])
            for m in messages]


def build_request_body(profile: AgentProfile,
                       history: Sequence[ChatTurn]) -> dict:
    assert isinstance(profile.backend, RemoteEndpoint)
    return {
        "model": profile.backend.model,
        "messages": encode_messages(history),
        "temperature": profile.temperature,
        "max_tokens": profile.max_reply_tokens,
    }


# transport(url, body, headers, timeout) -> (status_code, response_text)
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _requests_transport(url: str, body: dict, headers: dict,
                        timeout: float) -> tuple[int, str]:
    try:
        resp = requests.post(url, json=body, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    return resp.status_code, resp.text


class Backend(Protocol):
    def generate(self, history: Sequence[ChatTurn]) -> str: ...


class RemoteBackend:
    """Chat-completions client with bounded retries and injectable delays."""

    def __init__(self, profile: AgentProfile,
                 transport: Transport | None = None,
                 sleep: Callable[[float], None] | None = None):
        assert isinstance(profile.backend, RemoteEndpoint)
        self.profile = profile
        self.endpoint = profile.backend
        self._transport = transport or _requests_transport
        self._sleep = sleep or time.sleep

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.endpoint.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, history: Sequence[ChatTurn]) -> str:
        if not history:
            raise ValueError("history must not be empty")
        url = self.endpoint.base_url.rstrip("/") + "/v1/chat/completions"
        body = build_request_body(self.profile, history)
        headers = self._headers()
        last_error = "no attempt made"
        for attempt in range(self.profile.retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                status, text = self._transport(url, body, headers,
                                               self.profile.timeout)
            except ConnectionError as exc:
                last_error = str(exc)
                continue
            if 200 <= status < 300:
                return _extract_reply(text)
            if 500 <= status < 600:
                last_error = f"HTTP {status}: {text[:200]}"
                continue
            raise RemoteError(f"HTTP {status}: {text[:200]}")
        raise BackendUnavailableError(
            f"{self.profile.name}: transport failed after "
            f"{self.profile.retries + 1} attempts: {last_error}")


def _extract_reply(text: str) -> str:
    try:
        data = json.loads(text)
        return data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise RemoteError(f"malformed completion body: {exc}; "
                          f"got {text[:200]!r}") from exc


class ScriptedBackend:
    """Replays scripted replies for one role, in round order.

    The script is JSONL of {"round": int, "role": "strong"|"weak",
    "reply": str}.  Each session builds its own instance, so cursors
    never leak between sessions.
    """

    def __init__(self, profile: AgentProfile):
        assert isinstance(profile.backend, ScriptedSource)
        self.profile = profile
        self._replies = _load_script(profile.backend.script_path,
                                     profile.strength.value)
        self._cursor = 0

    def generate(self, history: Sequence[ChatTurn]) -> str:
        if not history:
            raise ValueError("history must not be empty")
        if self._cursor >= len(self._replies):
            raise ScriptError(
                f"{self.profile.name}: script exhausted after "
                f"{self._cursor} replies")
        reply = self._replies[self._cursor]
        self._cursor += 1
        return reply


def _load_script(path: str, role: str) -> list[str]:
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            rnd = int(data["round"])
            entry_role = data["role"]
            reply = data["reply"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ScriptError(f"{path}:{lineno}: malformed script line: {exc}") from exc
        if entry_role not in ("strong", "weak"):
            raise ScriptError(f"{path}:{lineno}: bad role {entry_role!r}")
        if rnd < 1:
            raise ScriptError(f"{path}:{lineno}: round must be >= 1")
        if entry_role == role:
            entries.append((rnd, lineno, str(reply)))
    entries.sort(key=lambda e: (e[0], e[1]))
    return [reply for _rnd, _lineno, reply in entries]


def make_backend(profile: AgentProfile,
                 transport: Transport | None = None,
                 sleep: Callable[[float], None] | None = None) -> Backend:
    if isinstance(profile.backend, ScriptedSource):
        return ScriptedBackend(profile)
    return RemoteBackend(profile, transport=transport, sleep=sleep)


def generate(agent: AgentProfile | Backend,
             history: Sequence[ChatTurn]) -> str:
    """One reply from the agent's backend for the given history."""
    backend = agent if not isinstance(agent, AgentProfile) else make_backend(agent)
    if not history:
        raise ValueError("history must not be empty")
    if history[0].role is not ChatRole.SYSTEM:
        raise ValueError("first turn must be the system role prompt")
    return backend.generate(history)


# --- verification -------------------------------------------------------

class Verdict(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verification:
    verdict: Verdict
    rationale: str
    skipped: bool = False
    accuracy_pct: float | None = None


_VERIFIER_SYSTEM = ("You are a careful verifier. Judge whether a response "
                    "solves its problem.")

_VERIFY_PROMPT = """\
Decide whether the response below correctly solves the problem. Start \
your reply with "yes" or "no", then give a one-sentence justification.

Problem:
{problem}

Response:
{response}
"""


def verify(strong: Backend | None, task: TaskInstance, response: str,
           sandbox: SandboxConfig | None = None) -> Verification:
    """Deterministic checker first; the strong agent judges only label-free tasks."""
    result: CheckResult | None = run_checker(task, response, sandbox)
    if result is not None:
        if result.skipped:
            return Verification(verdict=Verdict.UNKNOWN,
                                rationale=result.rationale, skipped=True,
                                accuracy_pct=result.accuracy_pct)
        verdict = Verdict.CORRECT if result.correct else Verdict.INCORRECT
        return Verification(verdict=verdict, rationale=result.rationale,
                            accuracy_pct=result.accuracy_pct)
    if strong is None:
        return Verification(verdict=Verdict.UNKNOWN,
                            rationale="no ground truth and no verifier agent")
    return _verify_with_agent(strong, task, response)


def _verify_with_agent(strong: Backend, task: TaskInstance,
                       response: str) -> Verification:
    """Yes/no judgment from the strong agent, parsed leniently."""
    prompt = (_VERIFY_PROMPT
              .replace("{problem}", task.problem)
              .replace("{response}", response))
    history = [ChatTurn(ChatRole.SYSTEM, _VERIFIER_SYSTEM),
               ChatTurn(ChatRole.USER, prompt)]
    try:
        reply = strong.generate(history)
    except AgentError as exc:
        return Verification(verdict=Verdict.UNKNOWN,
                            rationale=f"verifier unavailable: {exc}")
    words = reply.strip().lower().split()
    token = "".join(ch for ch in words[0] if ch.isalpha()) if words else ""
    if token == "yes":
        return Verification(verdict=Verdict.CORRECT, rationale=reply)
    if token == "no":
        return Verification(verdict=Verdict.INCORRECT, rationale=reply)
    return Verification(verdict=Verdict.UNKNOWN, rationale=reply)


# --- collaboration strategies and role prompts --------------------------

class Strategy(Enum):
    FRAMEWORK_SOLVER = "framework_solver"
    FRAMEWORK_PROVIDER_IMPLEMENTER = "framework_provider_implementer"
    PROPOSER_VALIDATOR = "proposer_validator"


@dataclass(frozen=True)
class RoleBinding:
    strategy: Strategy
    strong_role: str
    weak_role: str


_STRATEGY_FOR_KIND = {
    TaskKind.MATH: Strategy.FRAMEWORK_SOLVER,
    TaskKind.CODE: Strategy.FRAMEWORK_PROVIDER_IMPLEMENTER,
    TaskKind.ROUTING: Strategy.PROPOSER_VALIDATOR,
}

_ROLE_TEXTS: dict[Strategy, tuple[str, str]] = {
    Strategy.FRAMEWORK_SOLVER: (
        "You are the framework agent: produce a structured reasoning "
        "outline for the problem and keep your guidance organised into "
        "clear steps.",
        "You are the solver agent: fill in the detailed logical steps of "
        "the outline and derive the final numeric answer. End with a line "
        "like 'answer: <number>'.",
    ),
    Strategy.FRAMEWORK_PROVIDER_IMPLEMENTER: (
        "You are the framework provider: sketch the high-level program "
        "structure and annotated pseudocode for the task.",
        "You are the implementer: complete a concrete, working "
        "implementation and debug it. Reply with a fenced code block.",
    ),
    Strategy.PROPOSER_VALIDATOR: (
        "You are the validator: evaluate candidate routes against the "
        "capacity and coverage constraints and give optimisation feedback.",
        "You are the proposer: generate and refine candidate routing "
        "solutions. List each vehicle's tour on its own line in the form "
        "'Route 1: depot -> c2 -> c1 -> depot'.",
    ),
}


def binding_for(task: TaskKind) -> RoleBinding:
    strategy = _STRATEGY_FOR_KIND[task]
    strong_role, weak_role = _ROLE_TEXTS[strategy]
    return RoleBinding(strategy=strategy, strong_role=strong_role,
                       weak_role=weak_role)


def _format_experience(record: ExperienceRecord) -> str:
    steps = "\n".join(f"  - {step}" for step in record.solution_steps)
    return (f"Problem: {record.problem_text}\n"
            f"Steps:\n{steps}\n"
            f"Answer: {record.final_answer}")


def build_role_prompt(binding: RoleBinding, side: Strength,
                      task: TaskInstance,
                      experiences: Sequence[ExperienceRecord] = (),
                      role_override: str = "") -> str:
    """Render a side's system prompt; weak prompts carry injected experiences.

    A profile's role_template, when non-empty, replaces the strategy's
    stock role description.
    """
    role = role_override or (binding.strong_role if side is Strength.STRONG
                             else binding.weak_role)
    parts = [role, "", f"Task ({task.kind.value}):", task.problem]
    if side is Strength.WEAK and experiences:
        parts.append("")
        parts.append("Relevant past experience:")
        for record in experiences:
            parts.append(_format_experience(record))
    return "\n".join(parts)
