import json

import pytest

from entroguide.agents import AgentProfile, ScriptedSource, Strength
from entroguide.entropy import TaskKind
from entroguide.tasks import MathReference, TaskInstance

RECTANGLE_PROBLEM = ("A rectangle has a length of 8 cm and a width that is "
                     "3 cm less than its length. What is the area?")

CONFUSED_REPLY = ("um, 8+3=11? maybe the width is 11 cm... I am not sure, "
                  "possibly the area might be 19? I guess it is unclear.")

CORRECT_REPLY = ("First: width = 8 - 3 = 5 cm. Then: area = 8 * 5 = 40. "
                 "Therefore the area is 40.")

INTENSIVE_GUIDE_REPLY = """## Analysis
The width was added instead of subtracted.
## Reconstruction
1. Find the width from the length. 2. Multiply length by width.
## Step Guidance
Step 1: width = 8 - 3 = 5. Step 2: area = length * width.
Example: for length 10 and width 7 the area is 70."""


def write_script(path, entries):
    lines = [json.dumps({"round": rnd, "role": role, "reply": reply})
             for rnd, role, reply in entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def scripted_profile(path, strength, name=None):
    return AgentProfile(
        name=name or f"scripted-{strength.value}",
        strength=strength,
        backend=ScriptedSource(script_path=str(path)))


@pytest.fixture
def rectangle_task():
    return TaskInstance(id="fig2", kind=TaskKind.MATH,
                        problem=RECTANGLE_PROBLEM,
                        reference=MathReference(answer=40.0))


@pytest.fixture
def fig2_profiles(tmp_path):
    weak_script = write_script(tmp_path / "weak.jsonl", [
        (1, "weak", CONFUSED_REPLY),
        (2, "weak", CORRECT_REPLY),
    ])
    strong_script = write_script(tmp_path / "strong.jsonl", [
        (1, "strong", INTENSIVE_GUIDE_REPLY),
    ])
    return (scripted_profile(strong_script, Strength.STRONG, "guide"),
            scripted_profile(weak_script, Strength.WEAK, "solver"))
