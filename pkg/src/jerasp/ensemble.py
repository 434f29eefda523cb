"""Two-model agreement ensemble.

The primary model's output is audited by a second model: only entities both
models produced (exact canonical match on sentence id, surface, and type)
are kept. Relations are the primary model's alone — the auditor does not
vote on them directly, though downstream consistency checking will reject
any relation whose endpoints the intersection removed.
"""

from __future__ import annotations

from .model import AtomSet, EntityAtom


def agree_entities(
    primary: frozenset[EntityAtom], auditor: frozenset[EntityAtom]
) -> frozenset[EntityAtom]:
    """Entities present in both sets (exact canonical-field agreement)."""
    return primary & auditor


def ensemble_predict(primary: AtomSet, auditor: AtomSet) -> AtomSet:
    """Combine a primary and an auditor prediction batch.

    Entities: intersection. Relations: the primary's, unchanged.
    """
    return AtomSet(
        entities=agree_entities(primary.entities, auditor.entities),
        relations=primary.relations,
    )
