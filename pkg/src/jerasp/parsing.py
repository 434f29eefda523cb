"""Turning raw chat-model text into prediction atoms.

Models frequently wrap their JSON in code fences, chat around it, or emit
almost-JSON. :func:`extract_json_object` applies a fixed ladder of textual
repairs, cheapest first, reattempting a parse after each rung:

1. strip Markdown code fences;
2. cut everything before the first ``{`` and after the last ``}``;
3. remove literal newlines;
4. replace single quotes with double quotes;
5. drop trailing commas before ``}``/``]``.

:func:`parse_prediction` is total: any failure (no object found, wrong
shape, bad items) is absorbed into the returned diagnostics rather than
raised, so one bad response never aborts a batch.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .model import (
    AtomSet,
    CanonicalizationEmpty,
    EntityAtom,
    LabelSchema,
    RelationAtom,
    canonicalize_label,
    canonicalize_surface,
)


class ParseError(ValueError):
    """No JSON object could be recovered from a model response."""


_FENCE = re.compile(r"```[a-zA-Z]*\n?|```")
_TRAILING_COMMA = re.compile(r",\s*(?=[}\]])")


def _strip_code_fences(text: str) -> str:
    return _FENCE.sub("", text)


def _slice_to_braces(text: str) -> str:
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end < start:
        return text
    return text[start : end + 1]


def _drop_newlines(text: str) -> str:
    return text.replace("\n", " ").replace("\r", " ")


def _single_to_double_quotes(text: str) -> str:
    return text.replace("'", '"')


def _drop_trailing_commas(text: str) -> str:
    return _TRAILING_COMMA.sub("", text)


_REPAIRS: tuple[tuple[str, object], ...] = (
    ("strip_code_fences", _strip_code_fences),
    ("slice_to_braces", _slice_to_braces),
    ("drop_newlines", _drop_newlines),
    ("single_to_double_quotes", _single_to_double_quotes),
    ("drop_trailing_commas", _drop_trailing_commas),
)


def _try_load(text: str) -> dict | None:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return None
    return value if isinstance(value, dict) else None


def extract_json_object(raw: str) -> tuple[dict, list[str]]:
    """Parse the first JSON object out of ``raw``, repairing as needed.

    Returns the object and the list of repair tags that actually changed the
    text, in application order. Raises :class:`ParseError` if the ladder is
    exhausted without a successful parse.
    """
    text = raw
    repairs: list[str] = []
    obj = _try_load(text)
    if obj is not None:
        return obj, repairs
    for tag, fix in _REPAIRS:
        fixed = fix(text)
        if fixed != text:
            text = fixed
            repairs.append(tag)
            obj = _try_load(text)
            if obj is not None:
                return obj, repairs
    raise ParseError(f"no JSON object recoverable from response ({len(raw)} chars)")


@dataclass
class ParseDiagnostics:
    """Per-sentence account of what parsing had to do (or gave up on)."""

    sentence_id: str
    parse_failed: bool = False
    repairs_applied: list[str] = field(default_factory=list)
    dropped_items: int = 0
    dropped_reasons: list[str] = field(default_factory=list)
    unknown_type_items: int = 0

    def to_dict(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "parse_failed": self.parse_failed,
            "repairs_applied": list(self.repairs_applied),
            "dropped_items": self.dropped_items,
            "dropped_reasons": list(self.dropped_reasons),
            "unknown_type_items": self.unknown_type_items,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParseDiagnostics":
        return cls(
            sentence_id=data["sentence_id"],
            parse_failed=data.get("parse_failed", False),
            repairs_applied=list(data.get("repairs_applied", [])),
            dropped_items=data.get("dropped_items", 0),
            dropped_reasons=list(data.get("dropped_reasons", [])),
            unknown_type_items=data.get("unknown_type_items", 0),
        )


def _lookup_key(obj: dict, *names: str):
    """Case-insensitive key lookup; first match wins."""
    lowered = {k.lower(): v for k, v in obj.items() if isinstance(k, str)}
    for name in names:
        if name in lowered:
            return lowered[name]
    return None


def _as_text(value) -> str | None:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    return None


def parse_prediction(
    raw: str, sentence_id: str, schema: LabelSchema
) -> tuple[AtomSet, ParseDiagnostics]:
    """Parse one model response into atoms for ``sentence_id``.

    Never raises: unusable responses yield an empty atom set with
    ``parse_failed=True``; unusable items are dropped and counted. Atoms with
    types outside ``schema`` are kept (the checker and scorer decide what to
    do with them) but tallied in ``unknown_type_items``.
    """
    diag = ParseDiagnostics(sentence_id=sentence_id)
    try:
        obj, diag.repairs_applied = extract_json_object(raw)
    except ParseError:
        diag.parse_failed = True
        return AtomSet(), diag

    entities: set[EntityAtom] = set()
    relations: set[RelationAtom] = set()

    def drop(reason: str) -> None:
        diag.dropped_items += 1
        diag.dropped_reasons.append(reason)

    raw_entities = _lookup_key(obj, "entities")
    if not isinstance(raw_entities, list):
        raw_entities = []
    for item in raw_entities:
        if not isinstance(item, dict):
            drop("entity item is not an object")
            continue
        surface = _as_text(_lookup_key(item, "entity", "surface", "text"))
        etype = _as_text(_lookup_key(item, "type"))
        if surface is None or etype is None:
            drop("entity item is missing surface or type")
            continue
        try:
            atom = EntityAtom(
                sentence_id=sentence_id,
                surface=canonicalize_surface(surface),
                etype=canonicalize_label(etype),
            )
        except CanonicalizationEmpty:
            drop("entity item is empty after canonicalization")
            continue
        if not schema.knows_entity_type(atom.etype):
            diag.unknown_type_items += 1
        entities.add(atom)

    raw_relations = _lookup_key(obj, "relationships", "relations")
    if not isinstance(raw_relations, list):
        raw_relations = []
    for item in raw_relations:
        if not isinstance(item, dict):
            drop("relation item is not an object")
            continue
        subject = _as_text(_lookup_key(item, "subject"))
        obj_surface = _as_text(_lookup_key(item, "object"))
        rtype = _as_text(_lookup_key(item, "type"))
        if subject is None or obj_surface is None or rtype is None:
            drop("relation item is missing subject, object, or type")
            continue
        try:
            atom = RelationAtom(
                sentence_id=sentence_id,
                subject=canonicalize_surface(subject),
                object=canonicalize_surface(obj_surface),
                rtype=canonicalize_label(rtype),
            )
        except CanonicalizationEmpty:
            drop("relation item is empty after canonicalization")
            continue
        if not schema.knows_relation_type(atom.rtype):
            diag.unknown_type_items += 1
        relations.add(atom)

    return AtomSet(frozenset(entities), frozenset(relations)), diag


# --------------------------------------------------------------------------
# Predictions file (line-delimited JSON, one record per sentence)
# --------------------------------------------------------------------------


def prediction_record(
    sentence_id: str, atoms: AtomSet, diag: ParseDiagnostics
) -> dict:
    """One predictions-file record; atom lists are sorted for determinism."""
    return {
        "sentence_id": sentence_id,
        "entities": [
            {"surface": e.surface, "type": e.etype}
            for e in sorted(a for a in atoms.entities if a.sentence_id == sentence_id)
        ],
        "relations": [
            {"subject": r.subject, "object": r.object, "type": r.rtype}
            for r in sorted(a for a in atoms.relations if a.sentence_id == sentence_id)
        ],
        "diagnostics": diag.to_dict(),
    }


def record_to_atoms(record: dict) -> AtomSet:
    sid = record["sentence_id"]
    return AtomSet(
        entities=frozenset(
            EntityAtom(sid, e["surface"], e["type"]) for e in record["entities"]
        ),
        relations=frozenset(
            RelationAtom(sid, r["subject"], r["object"], r["type"])
            for r in record["relations"]
        ),
    )


def write_predictions_file(path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def read_predictions_file(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def merge_records(records: list[dict]) -> AtomSet:
    """Union of all per-sentence atom sets in a predictions file."""
    merged = AtomSet()
    for record in records:
        merged = merged.merge(record_to_atoms(record))
    return merged
