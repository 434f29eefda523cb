"""Prompt assembly for the extraction chat calls.

The two templates are fixed strings with named placeholders. A
:class:`PromptSpec` supplies the per-dataset content: the domain the
annotator persona works in, a persona/experience blurb, the type-vocabulary
context, the output key contract, and one worked example.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .model import Sentence

SYSTEM_TEMPLATE = (
    "You are a natural language processing researcher working in the {DOMAIN} domain. "
    "{EXPERIENCE} Your job is to extract entities from the excerpts of texts given. "
    "In this domain, an entity is an object, set of objects or abstract notion in the "
    "world that has its own independent existence. Entities specify pieces of "
    "information or objects within a text that carry particular significance. In your "
    "work, you will only extract specific types of entities and relationships. The "
    "types of entities and relationships are defined here. {CONTEXT}"
)

USER_TEMPLATE = (
    "Give me the entities from the following text. Do not include any explanations, "
    "only provide RFC8259 compliant JSON response without deviation. Do not include "
    "'\\n' (newline) in the output. The keys for the output JSON should be "
    "{OUTPUT_KEYS}. Do not use any other keys for the JSON response. Ensure that you "
    "are outputting the entire entity and its type. Here is one example: {EXAMPLE}\n"
    "Evaluate this text: {TEXT}"
)

_PLACEHOLDER = re.compile(r"\{(?:DOMAIN|EXPERIENCE|CONTEXT|OUTPUT_KEYS|EXAMPLE|TEXT)\}")


class TemplateError(ValueError):
    """A prompt spec field is missing/empty, or a placeholder went unfilled."""


@dataclass(frozen=True)
class PromptSpec:
    """Per-dataset prompt content; every field is required and non-empty."""

    domain: str
    experience: str
    context: str
    output_keys: str
    example: str

    def __post_init__(self) -> None:
        for name in ("domain", "experience", "context", "output_keys", "example"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise TemplateError(f"prompt spec field {name!r} must be a non-empty string")

    @classmethod
    def from_dict(cls, data: dict) -> "PromptSpec":
        try:
            return cls(
                domain=data["domain"],
                experience=data["experience"],
                context=data["context"],
                output_keys=data["output_keys"],
                example=data["example"],
            )
        except KeyError as exc:
            raise TemplateError(f"prompt spec is missing field {exc.args[0]!r}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _substitute(template: str, mapping: dict[str, str]) -> str:
    text = template
    for name, value in mapping.items():
        text = text.replace("{" + name + "}", value)
    leftover = _PLACEHOLDER.search(text)
    if leftover is not None:
        raise TemplateError(f"unfilled placeholder {leftover.group(0)} in template")
    return text


def render_system(spec: PromptSpec) -> str:
    """The system message: annotator persona plus the type-vocabulary context."""
    return _substitute(
        SYSTEM_TEMPLATE,
        {"DOMAIN": spec.domain, "EXPERIENCE": spec.experience, "CONTEXT": spec.context},
    )


def render_user(spec: PromptSpec, sentence: Sentence) -> str:
    """The user message: output contract, worked example, and the sentence text."""
    return _substitute(
        USER_TEMPLATE,
        {
            "OUTPUT_KEYS": spec.output_keys,
            "EXAMPLE": spec.example,
            "TEXT": sentence.text,
        },
    )


def render_pair(spec: PromptSpec, sentence: Sentence) -> tuple[str, str]:
    return render_system(spec), render_user(spec, sentence)
