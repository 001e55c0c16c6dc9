"""JSON configuration tree with shipped defaults for missing sections.

Top-level sections: profiles.*, policy.*, store.*, sandbox.command,
session.*, entropy.*.  Everything is optional; an absent file yields the
defaults used throughout the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .agents import (DEFAULT_AUTH_ENV, AgentProfile, RemoteEndpoint,
                     ScriptedSource, Strength)
from .entropy import (TaskKind, UncertaintyLexicon, WeightMatrix,
                      build_lexicon, default_lexicon, default_weights)
from .policy import PolicyConstants
from .store import DEFAULT_S_MIN, DEFAULT_TOP_K
from .tasks import SandboxConfig


class ConfigError(Exception):
    pass


@dataclass
class AppConfig:
    profiles: dict[str, AgentProfile] = field(default_factory=dict)
    policy: PolicyConstants = PolicyConstants()
    policy_per_task: dict[TaskKind, PolicyConstants] = field(default_factory=dict)
    k: int = DEFAULT_TOP_K
    s_min: float = DEFAULT_S_MIN
    repo_path: str | None = None
    sandbox: SandboxConfig | None = None
    t_max: int = 3
    lexicons: dict[TaskKind, UncertaintyLexicon] = field(default_factory=dict)
    weights: dict[TaskKind, WeightMatrix] = field(default_factory=dict)
    structure_markers: dict[TaskKind, tuple[str, ...]] = field(default_factory=dict)
    template_dir: str | None = None

    def profile(self, name: str) -> AgentProfile:
        try:
            return self.profiles[name]
        except KeyError:
            known = ", ".join(sorted(self.profiles)) or "(none)"
            raise ConfigError(f"unknown profile {name!r}; configured: {known}") from None

    def policy_for(self, kind: TaskKind) -> PolicyConstants:
        return self.policy_per_task.get(kind, self.policy)

    def lexicon_for(self, kind: TaskKind) -> UncertaintyLexicon:
        return self.lexicons.get(kind) or default_lexicon(kind)

    def weights_for(self, kind: TaskKind) -> WeightMatrix:
        return self.weights.get(kind) or default_weights(kind)

    def markers_for(self, kind: TaskKind) -> tuple[str, ...] | None:
        return self.structure_markers.get(kind)


def _parse_profile(name: str, data: dict) -> AgentProfile:
    try:
        strength = Strength(data["strength"].lower())
        backend_data = data["backend"]
        backend_type = backend_data["type"].lower()
        backend: RemoteEndpoint | ScriptedSource
        if backend_type == "remote":
            backend = RemoteEndpoint(
                base_url=backend_data["base_url"],
                model=backend_data["model"],
                auth_env=backend_data.get("auth_env", DEFAULT_AUTH_ENV))
        elif backend_type == "scripted":
            backend = ScriptedSource(script_path=backend_data["path"])
        else:
            raise ValueError(f"unknown backend type {backend_type!r}")
        return AgentProfile(
            name=name, strength=strength, backend=backend,
            role_template=data.get("role_template", ""),
            temperature=float(data.get("temperature", 0.0)),
            max_reply_tokens=int(data.get("max_reply_tokens", 1024)),
            timeout=float(data.get("timeout", 30.0)),
            retries=int(data.get("retries", 2)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"profile {name!r}: {exc}") from exc


def _parse_policy(data: dict, base: PolicyConstants) -> PolicyConstants:
    try:
        return PolicyConstants(
            tau1_base=float(data.get("tau1_base", base.tau1_base)),
            tau2_base=float(data.get("tau2_base", base.tau2_base)),
            tau1_min=float(data.get("tau1_min", base.tau1_min)),
            tau2_min=float(data.get("tau2_min", base.tau2_min)),
            lambda_=float(data.get("lambda", base.lambda_)),
            a_max=float(data.get("a_max", base.a_max)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"policy section: {exc}") from exc


_WEIGHT_KEYS = ("expression", "uncertainty", "structure", "coherence",
                "relevance")


def load_config(path: str | Path | None = None) -> AppConfig:
    """Load a config file; None or a missing section falls back to defaults."""
    config = AppConfig()
    if path is None:
        return config
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    for name, profile_data in data.get("profiles", {}).items():
        config.profiles[name] = _parse_profile(name, profile_data)

    policy_data = data.get("policy", {})
    config.policy = _parse_policy(policy_data, PolicyConstants())
    for kind_name, overrides in policy_data.get("tasks", {}).items():
        kind = TaskKind.parse(kind_name)
        config.policy_per_task[kind] = _parse_policy(overrides, config.policy)

    store_data = data.get("store", {})
    config.k = int(store_data.get("k", DEFAULT_TOP_K))
    config.s_min = float(store_data.get("s_min", DEFAULT_S_MIN))
    config.repo_path = store_data.get("path")

    sandbox_data = data.get("sandbox", {})
    if sandbox_data.get("command"):
        try:
            config.sandbox = SandboxConfig.from_value(
                sandbox_data["command"],
                timeout=float(sandbox_data.get("timeout", 10.0)))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"sandbox section: {exc}") from exc

    session_data = data.get("session", {})
    config.t_max = int(session_data.get("t_max", 3))

    entropy_data = data.get("entropy", {})
    cap = float(entropy_data.get("cap", 3.0))
    lexicon_data = entropy_data.get("lexicons", {})
    if lexicon_data:
        common = lexicon_data.get("common", {})
        for kind in TaskKind:
            entries = dict(common)
            entries.update(lexicon_data.get(kind.value, {}))
            if entries:
                config.lexicons[kind] = build_lexicon(entries, kind, cap=cap)
    for kind_name, weight_data in entropy_data.get("weights", {}).items():
        kind = TaskKind.parse(kind_name)
        try:
            config.weights[kind] = WeightMatrix(
                task_kind=kind,
                **{f"w_{key}": float(weight_data.get(key, 1.0))
                   for key in _WEIGHT_KEYS})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"entropy.weights.{kind_name}: {exc}") from exc
    for kind_name, markers in entropy_data.get("structure_markers", {}).items():
        kind = TaskKind.parse(kind_name)
        config.structure_markers[kind] = tuple(str(m).lower() for m in markers)
    config.template_dir = entropy_data.get("templates_dir") or data.get(
        "templates_dir")
    return config
