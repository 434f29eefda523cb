"""Core value types shared by every stage of the extraction pipeline.

Atoms are immutable value objects keyed by their canonical fields, so
collections of them behave as mathematical sets: inserting a duplicate is a
no-op and equality is structural.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class CanonicalizationEmpty(ValueError):
    """A surface or label was empty (or whitespace-only) after canonicalization."""


_WS_RUN = re.compile(r"\s+")


def canonicalize_surface(raw: str, case_fold: bool = True) -> str:
    """Normalize an entity surface: trim, collapse internal whitespace, lowercase.

    ``case_fold=False`` keeps the original casing (trim/collapse still apply).
    Raises :class:`CanonicalizationEmpty` if nothing is left.
    """
    text = _WS_RUN.sub(" ", raw.strip())
    if case_fold:
        text = text.lower()
    if not text:
        raise CanonicalizationEmpty(f"surface is empty after canonicalization: {raw!r}")
    return text


def canonicalize_label(raw: str) -> str:
    """Normalize a type label: trim, lowercase, drop all internal whitespace."""
    text = _WS_RUN.sub("", raw.strip()).lower()
    if not text:
        raise CanonicalizationEmpty(f"label is empty after canonicalization: {raw!r}")
    return text


@dataclass(frozen=True)
class Sentence:
    """One input sentence, identified by a stable string id."""

    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sentence id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"sentence {self.id!r}: text must be non-empty")


@dataclass(frozen=True, order=True)
class EntityAtom:
    """An extracted (or gold) entity mention, stored in canonical form."""

    sentence_id: str
    surface: str
    etype: str


@dataclass(frozen=True, order=True)
class RelationAtom:
    """A directed relation between two entity surfaces in one sentence."""

    sentence_id: str
    subject: str
    object: str
    rtype: str

    def key(self) -> tuple[str, str, str, str]:
        return (self.sentence_id, self.subject, self.object, self.rtype)


@dataclass(frozen=True, order=True)
class TypeSpec:
    """Declares one admissible (subject type, object type) pair for a relation type."""

    rtype: str
    subject_etype: str
    object_etype: str


@dataclass(frozen=True)
class LabelSchema:
    """The declared entity and relation type vocabulary of a dataset."""

    entity_types: frozenset[str]
    relation_types: frozenset[str]

    def __post_init__(self) -> None:
        if not self.entity_types:
            raise ValueError("schema must declare at least one entity type")
        if not self.relation_types:
            raise ValueError("schema must declare at least one relation type")
        for label in self.entity_types | self.relation_types:
            if label != canonicalize_label(label):
                raise ValueError(f"schema label is not canonical: {label!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "LabelSchema":
        return cls(
            entity_types=frozenset(canonicalize_label(t) for t in data["entity_types"]),
            relation_types=frozenset(canonicalize_label(t) for t in data["relation_types"]),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "LabelSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def knows_entity_type(self, label: str) -> bool:
        return label in self.entity_types

    def knows_relation_type(self, label: str) -> bool:
        return label in self.relation_types


@dataclass(frozen=True)
class AtomSet:
    """A deduplicated batch of entity and relation atoms (set semantics).

    Used both for model predictions and for gold annotations; the two roles
    are aliased below as :data:`PredictionSet` and :data:`GoldSet`.
    """

    entities: frozenset[EntityAtom] = field(default_factory=frozenset)
    relations: frozenset[RelationAtom] = field(default_factory=frozenset)

    @classmethod
    def build(
        cls,
        entities: Iterable[EntityAtom] = (),
        relations: Iterable[RelationAtom] = (),
    ) -> "AtomSet":
        return cls(frozenset(entities), frozenset(relations))

    def sentence_ids(self) -> frozenset[str]:
        """Ids of sentences that contributed at least one atom."""
        return frozenset(a.sentence_id for a in self.entities) | frozenset(
            r.sentence_id for r in self.relations
        )

    def merge(self, other: "AtomSet") -> "AtomSet":
        return AtomSet(self.entities | other.entities, self.relations | other.relations)

    def is_empty(self) -> bool:
        return not self.entities and not self.relations


PredictionSet = AtomSet
GoldSet = AtomSet
