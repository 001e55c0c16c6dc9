"""Adaptive-guidance collaboration loop.

One session runs a single task through up to t_max rounds: the weak
agent answers, the answer is entropy-scored, the round is verified, and
when another round is coming in a guided mode the strong agent supplies
level-matched guidance that is appended to the weak agent's context.
Experience retrieval happens once before the loop and storage once after
a success, both only in the RAG-enabled mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .agents import (AgentProfile, Backend, BackendUnavailableError, ChatRole,
                     ChatTurn, Strength, Transport, Verdict, binding_for,
                     build_role_prompt, make_backend, verify)
from .entropy import (EntropyReport, UncertaintyLexicon, WeightMatrix,
                      understanding_entropy)
from .policy import (GuidanceLevel, GuidanceMessage, PolicyConstants,
                     ThresholdState, compose_guidance_request,
                     parse_guidance_reply, select_level, update_thresholds)
from .store import ExperienceRecord, ExperienceStore, RetrievalHit, classify_difficulty
from .tasks import SandboxConfig, TaskInstance

COT_CUE = ("Think step by step: break the problem into small steps and "
           "solve them one at a time before giving the final answer.")

_RETRY_CUE = ("Your previous answer was not correct. Try again from "
              "scratch, checking each step.")

_SOLVE_CUE = "Solve the problem now."


class SessionMode(Enum):
    NO_GUIDANCE = "no_guidance"
    CHAIN_OF_THOUGHT = "cot"
    GUIDED = "guided"
    GUIDED_RAG = "guided_rag"

    @classmethod
    def parse(cls, value: str) -> "SessionMode":
        normalized = value.strip().lower()
        aliases = {"chain_of_thought": "cot", "guidedrag": "guided_rag",
                   "noguidance": "no_guidance"}
        normalized = aliases.get(normalized, normalized)
        try:
            return cls(normalized)
        except ValueError:
            raise ValueError(f"unknown session mode: {value!r}") from None


GUIDED_MODES = (SessionMode.GUIDED, SessionMode.GUIDED_RAG)


class ContractViolation(Exception):
    pass


@dataclass(frozen=True)
class SessionConfig:
    strong_profile: AgentProfile
    weak_profile: AgentProfile
    mode: SessionMode = SessionMode.GUIDED
    t_max: int = 3
    k: int = 3
    s_min: float = 0.1
    policy: PolicyConstants = PolicyConstants()
    seed: int = 0
    clock: Callable[[], float] | None = None
    sandbox: SandboxConfig | None = None
    lexicon: UncertaintyLexicon | None = None
    weights: WeightMatrix | None = None
    markers: tuple[str, ...] | None = None
    template_dir: str | None = None
    transport: Transport | None = None
    sleep: Callable[[float], None] | None = None

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def summary(self) -> dict:
        return {
            "mode": self.mode.value,
            "t_max": self.t_max,
            "k": self.k,
            "s_min": self.s_min,
            "strong": self.strong_profile.name,
            "weak": self.weak_profile.name,
            "seed": self.seed,
            "policy": {
                "tau1_base": self.policy.tau1_base,
                "tau2_base": self.policy.tau2_base,
                "tau1_min": self.policy.tau1_min,
                "tau2_min": self.policy.tau2_min,
                "lambda": self.policy.lambda_,
                "a_max": self.policy.a_max,
            },
        }


@dataclass(frozen=True)
class RoundRecord:
    round: int
    weak_response: str
    entropy: EntropyReport
    thresholds: ThresholdState
    verdict: Verdict
    level: GuidanceLevel | None = None
    guidance: GuidanceMessage | None = None

    def to_dict(self) -> dict:
        out = {
            "round": self.round,
            "weak_response": self.weak_response,
            "entropy": self.entropy.to_dict(),
            "thresholds": {"tau1": self.thresholds.tau1,
                           "tau2": self.thresholds.tau2,
                           "round": self.thresholds.round},
            "verdict": self.verdict.value,
            "level": self.level.label if self.level is not None else None,
            "guidance": ({"level": self.guidance.level.label,
                          "sections": [list(s) for s in self.guidance.sections],
                          "rendered": self.guidance.rendered}
                         if self.guidance is not None else None),
        }
        return out


@dataclass
class SessionTranscript:
    task: TaskInstance
    config: dict
    retrieval: list[RetrievalHit] = field(default_factory=list)
    rounds: list[RoundRecord] = field(default_factory=list)
    final_answer: str = ""
    success: bool = False
    rounds_used: int = 0
    rag_used: bool = False
    entropy_trace: list[float] = field(default_factory=list)
    accuracy_pct: float | None = None
    checker_skipped: bool = False
    aborted: bool = False
    abort_reason: str = ""
    started_at: float | None = None
    finished_at: float | None = None

    def to_dict(self) -> dict:
        out = {
            "task": self.task.to_dict(),
            "config": self.config,
            "retrieval": [{"record_id": hit.record.id,
                           "similarity": hit.similarity,
                           "injected": hit.injected}
                          for hit in self.retrieval],
            "rounds": [r.to_dict() for r in self.rounds],
            "final_answer": self.final_answer,
            "success": self.success,
            "rounds_used": self.rounds_used,
            "rag_used": self.rag_used,
            "entropy_trace": self.entropy_trace,
            "accuracy_pct": self.accuracy_pct,
            "checker_skipped": self.checker_skipped,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
        }
        if self.started_at is not None:
            out["started_at"] = self.started_at
            out["finished_at"] = self.finished_at
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{self.task.id}.{self.config['mode']}.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def run_session(task: TaskInstance, config: SessionConfig,
                repo: ExperienceStore | None = None) -> SessionTranscript:
    """Run one collaboration session and return its full transcript."""
    if config.mode is SessionMode.GUIDED_RAG and repo is None:
        raise ValueError("guided_rag mode needs an experience repository")

    transcript = SessionTranscript(task=task, config=config.summary())
    if config.clock is not None:
        transcript.started_at = config.clock()

    weak = make_backend(config.weak_profile, transport=config.transport,
                        sleep=config.sleep)
    strong = make_backend(config.strong_profile, transport=config.transport,
                          sleep=config.sleep)
    binding = binding_for(task.kind)

    injected: list[ExperienceRecord] = []
    if config.mode is SessionMode.GUIDED_RAG:
        assert repo is not None
        transcript.retrieval = repo.retrieve_top_k(task.problem, k=config.k,
                                                   s_min=config.s_min)
        injected = [hit.record for hit in transcript.retrieval if hit.injected]
        transcript.rag_used = bool(injected)

    system = build_role_prompt(binding, Strength.WEAK, task,
                               experiences=injected,
                               role_override=config.weak_profile.role_template)
    first_cue = _SOLVE_CUE
    if config.mode is SessionMode.CHAIN_OF_THOUGHT:
        first_cue = COT_CUE + "\n\n" + _SOLVE_CUE
    history = [ChatTurn(ChatRole.SYSTEM, system),
               ChatTurn(ChatRole.USER, first_cue)]

    t_max = 1 if config.mode is SessionMode.NO_GUIDANCE else config.t_max
    select_state = ThresholdState.initial(config.policy)

    try:
        _run_rounds(task, config, transcript, history, weak, strong,
                    select_state, t_max)
    except BackendUnavailableError as exc:
        transcript.aborted = True
        transcript.abort_reason = str(exc)

    transcript.rounds_used = len(transcript.rounds)
    transcript.entropy_trace = [r.entropy.h_total for r in transcript.rounds]
    if transcript.rounds:
        last = transcript.rounds[-1]
        transcript.final_answer = last.weak_response
        transcript.success = last.verdict is Verdict.CORRECT

    if (transcript.success and config.mode is SessionMode.GUIDED_RAG
            and repo is not None):
        repo.insert(build_record(transcript))

    if config.clock is not None:
        transcript.finished_at = config.clock()
    return transcript


def _run_rounds(task: TaskInstance, config: SessionConfig,
                transcript: SessionTranscript, history: list[ChatTurn],
                weak: Backend, strong: Backend,
                select_state: ThresholdState, t_max: int) -> None:
    for t in range(1, t_max + 1):
        response = weak.generate(history)
        report = understanding_entropy(task.problem, response, task.kind,
                                       weights=config.weights,
                                       lexicon=config.lexicon,
                                       markers=config.markers)
        # Selection uses the thresholds carried in from the previous
        # round's update; the recorded state is this round's update.
        tentative = select_level(report.h_total, select_state)
        state = update_thresholds(select_state, t)
        verification = verify(strong, task, response, sandbox=config.sandbox)
        if verification.skipped:
            transcript.checker_skipped = True
        if verification.accuracy_pct is not None:
            transcript.accuracy_pct = verification.accuracy_pct

        terminal = verification.verdict is Verdict.CORRECT or t == t_max
        level: GuidanceLevel | None = None
        guidance: GuidanceMessage | None = None
        if not terminal and config.mode in GUIDED_MODES:
            level = tentative
            request = compose_guidance_request(level, task.problem, response,
                                               task.kind,
                                               template_dir=config.template_dir)
            guidance_system = build_role_prompt(
                binding_for(task.kind), Strength.STRONG, task,
                role_override=config.strong_profile.role_template)
            reply = strong.generate([ChatTurn(ChatRole.SYSTEM, guidance_system),
                                     ChatTurn(ChatRole.USER, request)])
            guidance = parse_guidance_reply(reply, level)

        transcript.rounds.append(RoundRecord(
            round=t, weak_response=response, entropy=report,
            thresholds=state, verdict=verification.verdict,
            level=level, guidance=guidance))

        if verification.verdict is Verdict.CORRECT:
            return
        select_state = state

        if t == t_max:
            return
        history.append(ChatTurn(ChatRole.ASSISTANT, response))
        if guidance is not None:
            history.append(ChatTurn(ChatRole.USER,
                                    "Guidance from your collaborator:\n\n"
                                    + guidance.rendered))
        else:
            # Chain-of-thought self-retry; no strong agent involved.
            history.append(ChatTurn(ChatRole.USER, _RETRY_CUE))


def build_record(transcript: SessionTranscript) -> ExperienceRecord:
    """Map a successful transcript to a storable experience record."""
    if not transcript.success:
        raise ContractViolation("build_record requires a successful transcript")
    steps = tuple(line for line in transcript.final_answer.splitlines()
                  if line.strip())
    return ExperienceRecord(
        problem_text=transcript.task.problem,
        solution_steps=steps,
        final_answer=transcript.final_answer,
        difficulty=classify_difficulty(transcript.task),
        success_entropy=transcript.entropy_trace[-1],
        usage_count=0,
    )
