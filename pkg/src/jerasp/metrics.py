"""Confusion counting and micro/macro F1 scoring.

Counting follows a sentence-gated scheme: false negatives are charged only
in sentences where the model produced at least one atom of any kind
(``in_set``), so sentences the model skipped entirely do not count against
recall. ``strict_fn=True`` disables the gate and charges every miss.

Relation counting is mediated by the checker's derived facts:

* a predicted relation is a TP iff it is type-consistent (``ok_types``) and
  matches gold exactly;
* a predicted relation is an FP iff it is type-consistent, not a false
  declaration, and absent from gold — so a relation the checker rejects is
  charged to neither column;
* a gold relation is an FN iff its sentence is gated in and no predicted
  atom matches it exactly, regardless of what the checker thought of that
  predicted atom.

Counts are tallied per declared type only; atoms with types outside the
schema never enter a count cell (they still contribute to ``in_set``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .checker import DerivedFacts
from .model import AtomSet, LabelSchema


class TypeCounts(NamedTuple):
    tp: float
    fp: float
    fn: float


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-type TP/FP/FN for entities and relations (one row per declared type)."""

    entity: Mapping[str, TypeCounts]
    relation: Mapping[str, TypeCounts]

    def totals(self, task: str) -> TypeCounts:
        rows = self.entity if task == "entity" else self.relation
        return TypeCounts(
            tp=sum(c.tp for c in rows.values()),
            fp=sum(c.fp for c in rows.values()),
            fn=sum(c.fn for c in rows.values()),
        )


def count_confusion(
    pred: AtomSet,
    derived: DerivedFacts,
    gold: AtomSet,
    schema: LabelSchema,
    strict_fn: bool = False,
) -> ConfusionCounts:
    """Tally per-type TP/FP/FN over one batch.

    ``pred`` must be the unfiltered prediction set: rejected relations still
    suppress false negatives (the model did predict the tuple) and their
    sentences still open the gate.
    """
    in_set = pred.sentence_ids()

    def gated(sentence_id: str) -> bool:
        return strict_fn or sentence_id in in_set

    entity_rows: dict[str, TypeCounts] = {}
    for etype in sorted(schema.entity_types):
        tp = sum(1 for e in pred.entities if e.etype == etype and e in gold.entities)
        fp = sum(1 for e in pred.entities if e.etype == etype and e not in gold.entities)
        fn = sum(
            1
            for g in gold.entities
            if g.etype == etype and gated(g.sentence_id) and g not in pred.entities
        )
        entity_rows[etype] = TypeCounts(tp, fp, fn)

    relation_rows: dict[str, TypeCounts] = {}
    for rtype in sorted(schema.relation_types):
        tp = fp = 0
        for r in pred.relations:
            if r.rtype != rtype:
                continue
            key = r.key()
            if r in gold.relations:
                if key in derived.ok_types:
                    tp += 1
            elif key in derived.ok_types and key not in derived.false_declarations:
                fp += 1
        fn = sum(
            1
            for g in gold.relations
            if g.rtype == rtype and gated(g.sentence_id) and g not in pred.relations
        )
        relation_rows[rtype] = TypeCounts(tp, fp, fn)

    return ConfusionCounts(entity=entity_rows, relation=relation_rows)


def f1(tp: float, fp: float, fn: float) -> float:
    """Balanced F-measure from raw counts; 0.0 when the denominator is 0."""
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 0.0
    return 2 * tp / denominator


def micro_f1(rows: Mapping[str, TypeCounts]) -> float:
    tp = sum(c.tp for c in rows.values())
    fp = sum(c.fp for c in rows.values())
    fn = sum(c.fn for c in rows.values())
    return f1(tp, fp, fn)


def macro_f1(rows: Mapping[str, TypeCounts]) -> float:
    """Unweighted mean of per-type F1 over types with any support (tp+fp+fn > 0)."""
    scores = [
        f1(c.tp, c.fp, c.fn) for c in rows.values() if (c.tp + c.fp + c.fn) > 0
    ]
    if not scores:
        return 0.0
    return sum(scores) / len(scores)


@dataclass(frozen=True)
class F1Report:
    """Scores and counts for one scored batch (or the mean of several)."""

    entity_micro: float
    entity_macro: float
    relation_micro: float
    relation_macro: float
    entity_f1: Mapping[str, float]
    relation_f1: Mapping[str, float]
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        def rows_to_dict(rows: Mapping[str, TypeCounts]) -> dict:
            return {
                t: {"tp": c.tp, "fp": c.fp, "fn": c.fn} for t, c in sorted(rows.items())
            }

        return {
            "scores": {
                "entity": {
                    "micro": self.entity_micro,
                    "macro": self.entity_macro,
                    "per_type": dict(sorted(self.entity_f1.items())),
                },
                "relation": {
                    "micro": self.relation_micro,
                    "macro": self.relation_macro,
                    "per_type": dict(sorted(self.relation_f1.items())),
                },
            },
            "counts": {
                "entity": rows_to_dict(self.counts.entity),
                "relation": rows_to_dict(self.counts.relation),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "F1Report":
        def rows_from_dict(rows: dict) -> dict[str, TypeCounts]:
            return {
                t: TypeCounts(c["tp"], c["fp"], c["fn"]) for t, c in rows.items()
            }

        scores = data["scores"]
        return cls(
            entity_micro=scores["entity"]["micro"],
            entity_macro=scores["entity"]["macro"],
            relation_micro=scores["relation"]["micro"],
            relation_macro=scores["relation"]["macro"],
            entity_f1=dict(scores["entity"]["per_type"]),
            relation_f1=dict(scores["relation"]["per_type"]),
            counts=ConfusionCounts(
                entity=rows_from_dict(data["counts"]["entity"]),
                relation=rows_from_dict(data["counts"]["relation"]),
            ),
        )


def report(counts: ConfusionCounts) -> F1Report:
    """Compute micro, macro, and per-type F1 from a confusion table."""
    return F1Report(
        entity_micro=micro_f1(counts.entity),
        entity_macro=macro_f1(counts.entity),
        relation_micro=micro_f1(counts.relation),
        relation_macro=macro_f1(counts.relation),
        entity_f1={t: f1(c.tp, c.fp, c.fn) for t, c in counts.entity.items()},
        relation_f1={t: f1(c.tp, c.fp, c.fn) for t, c in counts.relation.items()},
        counts=counts,
    )


def score(
    pred: AtomSet,
    derived: DerivedFacts,
    gold: AtomSet,
    schema: LabelSchema,
    strict_fn: bool = False,
) -> F1Report:
    """Count and report in one step."""
    return report(count_confusion(pred, derived, gold, schema, strict_fn=strict_fn))


def average_reports(reports: Iterable[F1Report]) -> F1Report:
    """Element-wise arithmetic mean of several reports (scores and counts).

    All reports must cover identical type vocabularies. Averaged counts may
    be fractional.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot average zero reports")
    first = reports[0]
    ent_types = set(first.counts.entity)
    rel_types = set(first.counts.relation)
    for other in reports[1:]:
        if set(other.counts.entity) != ent_types or set(other.counts.relation) != rel_types:
            raise ValueError("cannot average reports with different type vocabularies")

    n = len(reports)

    def mean(values: Iterable[float]) -> float:
        return sum(values) / n

    def mean_rows(select) -> dict[str, TypeCounts]:
        out: dict[str, TypeCounts] = {}
        for t in select(first):
            out[t] = TypeCounts(
                tp=mean(select(r)[t].tp for r in reports),
                fp=mean(select(r)[t].fp for r in reports),
                fn=mean(select(r)[t].fn for r in reports),
            )
        return out

    return F1Report(
        entity_micro=mean(r.entity_micro for r in reports),
        entity_macro=mean(r.entity_macro for r in reports),
        relation_micro=mean(r.relation_micro for r in reports),
        relation_macro=mean(r.relation_macro for r in reports),
        entity_f1={t: mean(r.entity_f1[t] for r in reports) for t in first.entity_f1},
        relation_f1={t: mean(r.relation_f1[t] for r in reports) for t in first.relation_f1},
        counts=ConfusionCounts(
            entity=mean_rows(lambda r: r.counts.entity),
            relation=mean_rows(lambda r: r.counts.relation),
        ),
    )
