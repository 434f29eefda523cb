"""Loading token-span annotated datasets into sentences and gold atoms.

The input format is one JSON array of records, each shaped like::

    {"tokens": ["John", "lives", "in", "Rome", "."],
     "entities": [{"type": "Peop", "start": 0, "end": 1},
                  {"type": "Loc", "start": 3, "end": 4}],
     "relations": [{"type": "Live_In", "head": 0, "tail": 1}],
     "orig_id": "optional"}

Entity spans are token ranges (end exclusive); relation head/tail index the
record's entity list. Sentences get ids ``"<split>:<index>"``.

Surfaces are produced by the same pairwise detokenizer that renders the
sentence text, so every gold surface is relocatable in its sentence by
construction; :func:`relocation_rate` audits this.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .model import (
    AtomSet,
    CanonicalizationEmpty,
    EntityAtom,
    GoldSet,
    LabelSchema,
    RelationAtom,
    Sentence,
    canonicalize_label,
    canonicalize_surface,
)
from .prompts import PromptSpec, render_system, render_user


class IngestError(ValueError):
    """A dataset record is malformed; the message names the record index."""


class ExportError(RuntimeError):
    """A fine-tuning export could not be produced."""


@dataclass(frozen=True)
class RawRecord:
    """One validated input record, still in token-span form."""

    tokens: tuple[str, ...]
    entities: tuple[tuple[str, int, int], ...]  # (type, start, end)
    relations: tuple[tuple[str, int, int], ...]  # (type, head, tail)
    orig_id: str | None = None


def _validate_record(data: dict, index: int) -> RawRecord:
    def fail(message: str):
        raise IngestError(f"record {index}: {message}")

    tokens = data.get("tokens")
    if not isinstance(tokens, list) or not tokens:
        fail("tokens must be a non-empty list")
    if not all(isinstance(t, str) and t for t in tokens):
        fail("tokens must all be non-empty strings")

    entities = []
    for j, ent in enumerate(data.get("entities", [])):
        if not isinstance(ent, dict):
            fail(f"entity {j} is not an object")
        try:
            etype, start, end = ent["type"], ent["start"], ent["end"]
        except KeyError as exc:
            fail(f"entity {j} is missing {exc.args[0]!r}")
        if not isinstance(start, int) or not isinstance(end, int):
            fail(f"entity {j}: start/end must be integers")
        if not (0 <= start < end <= len(tokens)):
            fail(f"entity {j}: span [{start}, {end}) out of range for {len(tokens)} tokens")
        entities.append((str(etype), start, end))

    relations = []
    for j, rel in enumerate(data.get("relations", [])):
        if not isinstance(rel, dict):
            fail(f"relation {j} is not an object")
        try:
            rtype, head, tail = rel["type"], rel["head"], rel["tail"]
        except KeyError as exc:
            fail(f"relation {j} is missing {exc.args[0]!r}")
        if not isinstance(head, int) or not isinstance(tail, int):
            fail(f"relation {j}: head/tail must be integers")
        if not (0 <= head < len(entities)) or not (0 <= tail < len(entities)):
            fail(f"relation {j}: head/tail out of range for {len(entities)} entities")
        relations.append((str(rtype), head, tail))

    orig_id = data.get("orig_id")
    return RawRecord(
        tokens=tuple(tokens),
        entities=tuple(entities),
        relations=tuple(relations),
        orig_id=None if orig_id is None else str(orig_id),
    )


def load_raw_records(path: str | Path) -> list[RawRecord]:
    """Read and validate one dataset file."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise IngestError("dataset file must contain a JSON array of records")
    return [_validate_record(record, i) for i, record in enumerate(data)]


# Pairwise token attachment: the separator between two adjacent tokens depends
# only on that pair, so a span's rendering is always a substring of the full
# sentence's rendering.
_NO_SPACE_BEFORE = frozenset(
    [",", ".", ";", ":", "?", "!", "%", ")", "]", "}", "'", '"', "''",
     "'s", "'S", "'t", "'re", "'ve", "'ll", "'d", "'m", "n't", "N'T"]
)
_NO_SPACE_AFTER = frozenset(["(", "[", "{", "``", "$", "#"])


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens into display text using pairwise attachment rules."""
    if not tokens:
        return ""
    pieces = [tokens[0]]
    for prev, cur in zip(tokens, tokens[1:]):
        if cur not in _NO_SPACE_BEFORE and prev not in _NO_SPACE_AFTER:
            pieces.append(" ")
        pieces.append(cur)
    return "".join(pieces)


def load_dataset(
    path: str | Path, schema: LabelSchema, split: str | None = None
) -> tuple[list[Sentence], GoldSet]:
    """Load a dataset file into sentences plus the canonical gold atom set.

    Gold labels outside ``schema`` raise :class:`IngestError` — the schema is
    the contract for what the dataset may contain.
    """
    path = Path(path)
    split = split or path.stem
    records = load_raw_records(path)

    sentences: list[Sentence] = []
    gold_entities: set[EntityAtom] = set()
    gold_relations: set[RelationAtom] = set()
    for i, record in enumerate(records):
        sid = f"{split}:{i}"
        text = detokenize(record.tokens)
        try:
            sentences.append(Sentence(id=sid, text=text))
        except ValueError as exc:
            raise IngestError(f"record {i}: {exc}") from None

        surfaces: list[str] = []
        for j, (etype, start, end) in enumerate(record.entities):
            try:
                surface = canonicalize_surface(detokenize(record.tokens[start:end]))
                label = canonicalize_label(etype)
            except CanonicalizationEmpty as exc:
                raise IngestError(f"record {i}: entity {j}: {exc}") from None
            if not schema.knows_entity_type(label):
                raise IngestError(f"record {i}: entity {j}: unknown entity type {label!r}")
            surfaces.append(surface)
            gold_entities.add(EntityAtom(sid, surface, label))

        for j, (rtype, head, tail) in enumerate(record.relations):
            try:
                label = canonicalize_label(rtype)
            except CanonicalizationEmpty as exc:
                raise IngestError(f"record {i}: relation {j}: {exc}") from None
            if not schema.knows_relation_type(label):
                raise IngestError(f"record {i}: relation {j}: unknown relation type {label!r}")
            gold_relations.add(RelationAtom(sid, surfaces[head], surfaces[tail], label))

    return sentences, AtomSet(frozenset(gold_entities), frozenset(gold_relations))


_WS_RUN = re.compile(r"\s+")


def relocation_rate(sentences: Sequence[Sentence], gold: GoldSet) -> tuple[int, int, float]:
    """Fraction of gold entity surfaces findable in their sentence text.

    Comparison is on canonicalized text (case-folded, whitespace-collapsed).
    Returns (found, total, rate); rate is 1.0 for an empty gold set.
    """
    text_by_id = {
        s.id: _WS_RUN.sub(" ", s.text.strip()).lower() for s in sentences
    }
    total = len(gold.entities)
    found = sum(
        1 for e in gold.entities if e.surface in text_by_id.get(e.sentence_id, "")
    )
    return found, total, (found / total) if total else 1.0


def sample_split(items: Sequence, fraction: float, seed: int) -> list:
    """Uniform random sample of ceil(fraction * n) items, deterministic by seed."""
    if not (0 < fraction <= 1):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = random.Random(seed)
    shuffled = rng.sample(list(items), len(items))
    return shuffled[: math.ceil(fraction * len(items))]


# --------------------------------------------------------------------------
# Normalized dataset dump (the interchange file between ingest and the rest)
# --------------------------------------------------------------------------


def dump_dataset(
    sentences: Sequence[Sentence], gold: GoldSet, split: str
) -> dict:
    return {
        "split": split,
        "sentences": [{"id": s.id, "text": s.text} for s in sentences],
        "gold": {
            "entities": [
                {"sentence_id": e.sentence_id, "surface": e.surface, "type": e.etype}
                for e in sorted(gold.entities)
            ],
            "relations": [
                {
                    "sentence_id": r.sentence_id,
                    "subject": r.subject,
                    "object": r.object,
                    "type": r.rtype,
                }
                for r in sorted(gold.relations)
            ],
        },
    }


def write_dump(path: str | Path, dump: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def load_dump(path: str | Path) -> tuple[str, list[Sentence], GoldSet]:
    with open(path, encoding="utf-8") as fh:
        dump = json.load(fh)
    sentences = [Sentence(id=s["id"], text=s["text"]) for s in dump["sentences"]]
    gold = AtomSet(
        entities=frozenset(
            EntityAtom(e["sentence_id"], e["surface"], e["type"])
            for e in dump["gold"]["entities"]
        ),
        relations=frozenset(
            RelationAtom(r["sentence_id"], r["subject"], r["object"], r["type"])
            for r in dump["gold"]["relations"]
        ),
    )
    return dump.get("split", ""), sentences, gold


# --------------------------------------------------------------------------
# Fine-tuning export
# --------------------------------------------------------------------------


def gold_completion(sentence_id: str, gold: GoldSet) -> str:
    """The ideal single-line JSON answer for one sentence, from gold atoms."""
    entities = sorted(e for e in gold.entities if e.sentence_id == sentence_id)
    relations = sorted(r for r in gold.relations if r.sentence_id == sentence_id)
    payload = {
        "Entities": [{"Entity": e.surface, "Type": e.etype} for e in entities],
        "Relationships": [
            {"Subject": r.subject, "Object": r.object, "Type": r.rtype}
            for r in relations
        ],
    }
    return json.dumps(payload, ensure_ascii=False)


def export_finetune_file(
    sentences: Sequence[Sentence],
    gold: GoldSet,
    spec: PromptSpec,
    path: str | Path,
) -> int:
    """Write chat-format fine-tuning examples (one JSON object per line).

    Each line holds the rendered system and user messages plus the gold
    answer as the assistant turn. Returns the number of lines written.
    """
    system = render_system(spec)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for sentence in sentences:
                record = {
                    "messages": [
                        {"role": "system", "content": system},
                        {"role": "user", "content": render_user(spec, sentence)},
                        {"role": "assistant", "content": gold_completion(sentence.id, gold)},
                    ]
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write fine-tune file {path}: {exc}") from exc
    return len(sentences)
