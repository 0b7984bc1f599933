"""Question batteries shown to annotators.

The wording lives in one packaged definition file consumed by both the
service and the browser front end; neither duplicates option text.  Each
battery marks exactly one question with the "fairness" role; its first
option ("unfair to treat differently") maps to the constraint vote 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

__all__ = ["Question", "Battery", "get_battery", "battery_payload"]


@dataclass(frozen=True)
class Question:
    key: str
    role: str
    text: str
    options: tuple[str, ...]
    affirmative_index: int


@dataclass(frozen=True)
class Battery:
    name: str
    questions: tuple[Question, ...]

    @property
    def fairness_question(self) -> Question:
        for q in self.questions:
            if q.role == "fairness":
                return q
        raise ValueError(f"battery {self.name} has no fairness question")

    def fairness_vote(self, answers: dict[str, int]) -> int:
        """0 (constraint) iff the 'unfair to treat differently' option was
        chosen, 1 otherwise."""
        q = self.fairness_question
        choice = answers[q.key]
        if not 0 <= choice < len(q.options):
            raise ValueError(f"answer {choice} out of range for {q.key}")
        return 0 if choice == 0 else 1

    def validate_answers(self, answers: dict[str, int]) -> None:
        for q in self.questions:
            if q.key not in answers:
                raise KeyError(f"missing answer for question {q.key!r}")
            if not 0 <= answers[q.key] < len(q.options):
                raise ValueError(f"answer {answers[q.key]} out of range for {q.key!r}")


def _load() -> dict[str, Battery]:
    payload = json.loads(resources.files("fairpairs.data").joinpath("battery.json").read_text(encoding="utf-8"))
    batteries = {}
    for name, spec in payload.items():
        questions = tuple(
            Question(
                key=q["key"],
                role=q["role"],
                text=q["text"],
                options=tuple(q["options"]),
                affirmative_index=q["affirmative_index"],
            )
            for q in spec["questions"]
        )
        batteries[name] = Battery(name=name, questions=questions)
    return batteries


_BATTERIES = _load()


def get_battery(name: str) -> Battery:
    try:
        return _BATTERIES[name]
    except KeyError:
        raise KeyError(f"unknown battery {name!r}; have {sorted(_BATTERIES)}") from None


def battery_payload(name: str) -> dict:
    """JSON-ready battery definition served to the front end."""
    battery = get_battery(name)
    return {
        "name": battery.name,
        "questions": [
            {
                "key": q.key,
                "role": q.role,
                "text": q.text,
                "options": list(q.options),
                "affirmative_index": q.affirmative_index,
            }
            for q in battery.questions
        ],
    }
