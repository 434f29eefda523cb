"""Consistency checking of predicted relations against typed relation specs.

The checker derives three fact sets over a prediction batch:

* ``false_declarations`` — relations with at least one endpoint that has no
  entity atom (same sentence, same surface) in the prediction set;
* ``has_declarations`` — relation types for which at least one type spec
  exists;
* ``ok_types`` — relations whose two endpoints are both present and whose
  endpoint types match a declared spec positionally (subject spec type on the
  subject, object spec type on the object), or whose relation type has no
  spec at all.

A relation survives filtering iff it is not a false declaration *and* is
type-consistent. Entities are never filtered. The rules are negation-free
downstream of the prediction facts except through these derived sets, so the
result is unique and independent of evaluation order.

The module also owns the textual fact-file interchange format (export and
parse), used to hand batches to external solvers and to round-trip them in
tests.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .model import (
    AtomSet,
    EntityAtom,
    LabelSchema,
    RelationAtom,
    TypeSpec,
)

RelationKey = tuple[str, str, str, str]


class FactFileError(ValueError):
    """A fact file (or type-spec file) could not be parsed."""


@dataclass(frozen=True)
class DerivedFacts:
    """Output of :func:`derive`: the three derived fact sets over one batch."""

    false_declarations: frozenset[RelationKey] = field(default_factory=frozenset)
    ok_types: frozenset[RelationKey] = field(default_factory=frozenset)
    has_declarations: frozenset[str] = field(default_factory=frozenset)

    def accepts(self, key: RelationKey) -> bool:
        """True iff the relation with this key survives filtering."""
        return key not in self.false_declarations and key in self.ok_types


def derive(pred: AtomSet, specs: Iterable[TypeSpec]) -> DerivedFacts:
    """Evaluate the consistency rules over one prediction batch.

    Endpoint lookup is by (sentence id, surface); an endpoint may carry
    several types (the same surface predicted with different types), in which
    case a single positional spec match on any type combination suffices.
    """
    spec_set = frozenset((s.rtype, s.subject_etype, s.object_etype) for s in specs)
    has_declarations = frozenset(rtype for rtype, _, _ in spec_set)

    types_at: dict[tuple[str, str], set[str]] = {}
    for ent in pred.entities:
        types_at.setdefault((ent.sentence_id, ent.surface), set()).add(ent.etype)

    false_declarations: set[RelationKey] = set()
    ok_types: set[RelationKey] = set()
    for rel in pred.relations:
        key = rel.key()
        subject_types = types_at.get((rel.sentence_id, rel.subject))
        object_types = types_at.get((rel.sentence_id, rel.object))
        if not subject_types or not object_types:
            false_declarations.add(key)
        if subject_types and object_types:
            if rel.rtype not in has_declarations:
                ok_types.add(key)
            elif any(
                (rel.rtype, st, ot) in spec_set
                for st in subject_types
                for ot in object_types
            ):
                ok_types.add(key)
    return DerivedFacts(
        false_declarations=frozenset(false_declarations),
        ok_types=frozenset(ok_types),
        has_declarations=has_declarations,
    )


def vacuous_acceptance(pred: AtomSet) -> DerivedFacts:
    """Derived facts for a run with the checker disabled: every relation passes."""
    return DerivedFacts(
        false_declarations=frozenset(),
        ok_types=frozenset(r.key() for r in pred.relations),
        has_declarations=frozenset(),
    )


def filter_predictions(pred: AtomSet, derived: DerivedFacts) -> AtomSet:
    """Drop relations rejected by the derived facts; entities pass through."""
    return AtomSet(
        entities=pred.entities,
        relations=frozenset(r for r in pred.relations if derived.accepts(r.key())),
    )


# --------------------------------------------------------------------------
# Fact-file interchange format
# --------------------------------------------------------------------------
#
# One fact per statement, terminated by '.', with string arguments in double
# quotes. Several facts may share a line and whitespace is free-form.
#
#   atom(ent("SID","SURFACE","ETYPE")).      predicted entity
#   atom(rel("SID","SUBJ","OBJ","RTYPE")).   predicted relation
#   ent("SID","SURFACE","ETYPE").            gold entity
#   rel("SID","SUBJ","OBJ","RTYPE").         gold relation
#   type_def("RTYPE","SUBJ_ETYPE","OBJ_ETYPE").
#   type_of_ent("ETYPE").  type_of_r("RTYPE").
#
# '%' starts a comment that runs to end of line. Inside strings, '\\' and
# '\"' escape a backslash and a double quote.


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_asp_facts(
    pred: AtomSet,
    gold: AtomSet | None = None,
    specs: Iterable[TypeSpec] = (),
    schema: LabelSchema | None = None,
) -> str:
    """Serialize a batch as a fact file; lines are sorted for determinism."""
    lines: list[str] = []
    for e in pred.entities:
        lines.append(
            f"atom(ent({_quote(e.sentence_id)},{_quote(e.surface)},{_quote(e.etype)}))."
        )
    for r in pred.relations:
        lines.append(
            "atom(rel("
            f"{_quote(r.sentence_id)},{_quote(r.subject)},{_quote(r.object)},{_quote(r.rtype)}))."
        )
    if gold is not None:
        for e in gold.entities:
            lines.append(
                f"ent({_quote(e.sentence_id)},{_quote(e.surface)},{_quote(e.etype)})."
            )
        for r in gold.relations:
            lines.append(
                f"rel({_quote(r.sentence_id)},{_quote(r.subject)},{_quote(r.object)},{_quote(r.rtype)})."
            )
    for spec in specs:
        lines.append(
            f"type_def({_quote(spec.rtype)},{_quote(spec.subject_etype)},{_quote(spec.object_etype)})."
        )
    if schema is not None:
        for etype in schema.entity_types:
            lines.append(f"type_of_ent({_quote(etype)}).")
        for rtype in schema.relation_types:
            lines.append(f"type_of_r({_quote(rtype)}).")
    return "\n".join(sorted(lines)) + "\n" if lines else ""


@dataclass(frozen=True)
class ParsedFacts:
    """Result of :func:`parse_asp_facts`."""

    predicted: AtomSet = field(default_factory=AtomSet)
    gold: AtomSet = field(default_factory=AtomSet)
    type_specs: frozenset[TypeSpec] = field(default_factory=frozenset)
    entity_types: frozenset[str] = field(default_factory=frozenset)
    relation_types: frozenset[str] = field(default_factory=frozenset)


_TOKEN = re.compile(
    r"""
    \s+                                   # whitespace
  | %[^\n]*                               # comment to end of line
  | "(?:[^"\\]|\\.)*"                     # quoted string
  | [A-Za-z_][A-Za-z0-9_]*                # bare name
  | [().,]                                # punctuation
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise FactFileError(f"unexpected character at offset {pos}: {text[pos]!r}")
        piece = match.group(0)
        pos = match.end()
        if piece.isspace() or piece.startswith("%"):
            continue
        tokens.append(piece)
    return tokens


def _unquote(token: str) -> str:
    body = token[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(body[i + 1])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class _FactParser:
    """Recursive-descent parser over the fact-file token stream."""

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> str:
        if self.done():
            raise FactFileError("unexpected end of input")
        return self.tokens[self.pos]

    def take(self, expected: str | None = None) -> str:
        token = self.peek()
        if expected is not None and token != expected:
            raise FactFileError(f"expected {expected!r}, found {token!r}")
        self.pos += 1
        return token

    def term(self):
        """A term: quoted string, bare constant, or name(args...)."""
        token = self.take()
        if token.startswith('"'):
            return _unquote(token)
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", token):
            raise FactFileError(f"expected a term, found {token!r}")
        if not self.done() and self.peek() == "(":
            self.take("(")
            args = [self.term()]
            while self.peek() == ",":
                self.take(",")
                args.append(self.term())
            self.take(")")
            return (token, tuple(args))
        return token

    def fact(self):
        term = self.term()
        self.take(".")
        return term


def _expect_strings(args: tuple, arity: int, context: str) -> tuple[str, ...]:
    if len(args) != arity or not all(isinstance(a, str) for a in args):
        raise FactFileError(f"{context}: expected {arity} string arguments, got {args!r}")
    return args


def parse_asp_facts(text: str) -> ParsedFacts:
    """Parse a fact file back into atoms, type specs, and declared type names."""
    parser = _FactParser(_tokenize(text))
    pred_entities: set[EntityAtom] = set()
    pred_relations: set[RelationAtom] = set()
    gold_entities: set[EntityAtom] = set()
    gold_relations: set[RelationAtom] = set()
    specs: set[TypeSpec] = set()
    entity_types: set[str] = set()
    relation_types: set[str] = set()

    while not parser.done():
        term = parser.fact()
        if not isinstance(term, tuple):
            raise FactFileError(f"expected a fact, found bare constant {term!r}")
        name, args = term
        if name == "atom":
            if len(args) != 1 or not isinstance(args[0], tuple):
                raise FactFileError(f"atom(...) must wrap ent(...) or rel(...), got {args!r}")
            inner_name, inner_args = args[0]
            if inner_name == "ent":
                sid, surface, etype = _expect_strings(inner_args, 3, "atom(ent(...))")
                pred_entities.add(EntityAtom(sid, surface, etype))
            elif inner_name == "rel":
                sid, subj, obj, rtype = _expect_strings(inner_args, 4, "atom(rel(...))")
                pred_relations.add(RelationAtom(sid, subj, obj, rtype))
            else:
                raise FactFileError(f"unknown predicted fact kind: {inner_name!r}")
        elif name == "ent":
            sid, surface, etype = _expect_strings(args, 3, "ent(...)")
            gold_entities.add(EntityAtom(sid, surface, etype))
        elif name == "rel":
            sid, subj, obj, rtype = _expect_strings(args, 4, "rel(...)")
            gold_relations.add(RelationAtom(sid, subj, obj, rtype))
        elif name == "type_def":
            rtype, st, ot = _expect_strings(args, 3, "type_def(...)")
            specs.add(TypeSpec(rtype, st, ot))
        elif name == "type_of_ent":
            (etype,) = _expect_strings(args, 1, "type_of_ent(...)")
            entity_types.add(etype)
        elif name == "type_of_r":
            (rtype,) = _expect_strings(args, 1, "type_of_r(...)")
            relation_types.add(rtype)
        else:
            raise FactFileError(f"unknown fact kind: {name!r}")

    return ParsedFacts(
        predicted=AtomSet(frozenset(pred_entities), frozenset(pred_relations)),
        gold=AtomSet(frozenset(gold_entities), frozenset(gold_relations)),
        type_specs=frozenset(specs),
        entity_types=frozenset(entity_types),
        relation_types=frozenset(relation_types),
    )


def parse_type_specs(text: str) -> frozenset[TypeSpec]:
    """Parse a type-spec file: type_def facts only (other fact kinds rejected)."""
    parsed = parse_asp_facts(text)
    if (
        not parsed.predicted.is_empty()
        or not parsed.gold.is_empty()
        or parsed.entity_types
        or parsed.relation_types
    ):
        raise FactFileError("type-spec file must contain only type_def facts")
    return parsed.type_specs


def load_type_specs(path: str | Path) -> frozenset[TypeSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_type_specs(fh.read())
