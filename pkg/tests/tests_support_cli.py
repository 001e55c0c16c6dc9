"""Workspace builder for CLI end-to-end tests."""

import json
from dataclasses import dataclass
from pathlib import Path

from conftest import (CONFUSED_REPLY, CORRECT_REPLY, INTENSIVE_GUIDE_REPLY,
                      RECTANGLE_PROBLEM, write_script)


@dataclass
class CliWorkspace:
    task_file: Path
    config_file: Path
    repo_file: Path


def write_fig2_workspace(tmp_path: Path, task_count: int = 1) -> CliWorkspace:
    """Scripted two-round workspace: wrong then correct on every task.

    One weak/strong script pair serves every session because scripted
    cursors are session-local and all tasks share the answer 40.
    """
    weak_script = write_script(tmp_path / "cli-weak.jsonl", [
        (1, "weak", CONFUSED_REPLY),
        (2, "weak", CORRECT_REPLY),
    ])
    strong_script = write_script(tmp_path / "cli-strong.jsonl", [
        (1, "strong", INTENSIVE_GUIDE_REPLY),
    ])

    tasks = []
    for i in range(task_count):
        tasks.append({
            "id": "fig2" if i == 0 else f"fig2-{i}",
            "kind": "math",
            "problem": RECTANGLE_PROBLEM,
            "reference": {"answer": 40.0},
        })
    task_file = tmp_path / "tasks.jsonl"
    task_file.write_text("\n".join(json.dumps(t) for t in tasks) + "\n",
                         encoding="utf-8")

    config = {
        "profiles": {
            "guide": {"strength": "strong",
                      "backend": {"type": "scripted",
                                  "path": str(strong_script)}},
            "solver": {"strength": "weak",
                       "backend": {"type": "scripted",
                                   "path": str(weak_script)}},
        },
        "session": {"t_max": 3},
    }
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps(config, indent=2), encoding="utf-8")

    return CliWorkspace(task_file=task_file, config_file=config_file,
                        repo_file=tmp_path / "repo.jsonl")
