import json

import pytest

from jerasp.ingest import (
    ExportError,
    IngestError,
    detokenize,
    dump_dataset,
    export_finetune_file,
    gold_completion,
    load_dataset,
    load_dump,
    load_raw_records,
    relocation_rate,
    sample_split,
    write_dump,
)
from jerasp.model import AtomSet, EntityAtom, LabelSchema, RelationAtom
from jerasp.prompts import PromptSpec

SCHEMA = LabelSchema(
    entity_types=frozenset({"peop", "loc", "org", "other"}),
    relation_types=frozenset({"live_in", "work_for", "kill", "located_in", "orgbased_in"}),
)

RECORDS = [
    {
        "tokens": ["John", "Smith", "lives", "in", "Rome", "."],
        "entities": [
            {"type": "Peop", "start": 0, "end": 2},
            {"type": "Loc", "start": 4, "end": 5},
        ],
        "relations": [{"type": "Live_In", "head": 0, "tail": 1}],
    },
    {
        "tokens": ["Acme", "Corp", "hired", "Ada", "."],
        "entities": [
            {"type": "Org", "start": 0, "end": 2},
            {"type": "Peop", "start": 3, "end": 4},
        ],
        "relations": [{"type": "Work_For", "head": 1, "tail": 0}],
        "orig_id": "doc-17",
    },
]


def write_dataset(tmp_path, records, name="mini.json"):
    path = tmp_path / name
    path.write_text(json.dumps(records), encoding="utf-8")
    return path


class TestDetokenize:
    def test_spaces_between_words(self):
        assert detokenize(["John", "lives", "here"]) == "John lives here"

    def test_punctuation_attaches_left(self):
        assert detokenize(["Rome", ",", "Italy", "."]) == "Rome, Italy."

    def test_clitics_attach_left(self):
        assert detokenize(["it", "'s", "fine"]) == "it's fine"
        assert detokenize(["do", "n't", "go"]) == "don't go"

    def test_brackets(self):
        assert detokenize(["(", "a", ")", "b"]) == "(a) b"

    def test_span_is_substring_of_full_text(self):
        tokens = ["Mary", "O'Neil", "works", "for", "Acme", ",", "Inc", "."]
        full = detokenize(tokens)
        for i in range(len(tokens)):
            for j in range(i + 1, len(tokens) + 1):
                assert detokenize(tokens[i:j]) in full

    def test_empty(self):
        assert detokenize([]) == ""


class TestLoadRawRecords:
    def test_valid(self, tmp_path):
        records = load_raw_records(write_dataset(tmp_path, RECORDS))
        assert len(records) == 2
        assert records[0].tokens[0] == "John"
        assert records[1].orig_id == "doc-17"

    def test_not_a_list(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"tokens": []}')
        with pytest.raises(IngestError):
            load_raw_records(path)

    def test_span_out_of_range(self, tmp_path):
        bad = [{"tokens": ["a"], "entities": [{"type": "x", "start": 0, "end": 2}], "relations": []}]
        with pytest.raises(IngestError, match="record 0"):
            load_raw_records(write_dataset(tmp_path, bad))

    def test_empty_span_rejected(self, tmp_path):
        bad = [{"tokens": ["a"], "entities": [{"type": "x", "start": 1, "end": 1}], "relations": []}]
        with pytest.raises(IngestError):
            load_raw_records(write_dataset(tmp_path, bad))

    def test_relation_index_out_of_range(self, tmp_path):
        bad = [
            {
                "tokens": ["a", "b"],
                "entities": [{"type": "x", "start": 0, "end": 1}],
                "relations": [{"type": "r", "head": 0, "tail": 5}],
            }
        ]
        with pytest.raises(IngestError, match="relation 0"):
            load_raw_records(write_dataset(tmp_path, bad))

    def test_empty_tokens_rejected(self, tmp_path):
        with pytest.raises(IngestError):
            load_raw_records(write_dataset(tmp_path, [{"tokens": [], "entities": [], "relations": []}]))


class TestLoadDataset:
    def test_ids_and_text(self, tmp_path):
        sentences, _ = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        assert [s.id for s in sentences] == ["mini:0", "mini:1"]
        assert sentences[0].text == "John Smith lives in Rome."

    def test_split_override(self, tmp_path):
        sentences, _ = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA, split="test")
        assert sentences[0].id == "test:0"

    def test_gold_atoms_canonical(self, tmp_path):
        _, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        assert EntityAtom("mini:0", "john smith", "peop") in gold.entities
        assert EntityAtom("mini:1", "acme corp", "org") in gold.entities
        assert RelationAtom("mini:0", "john smith", "rome", "live_in") in gold.relations
        assert RelationAtom("mini:1", "ada", "acme corp", "work_for") in gold.relations

    def test_unknown_gold_type_rejected(self, tmp_path):
        bad = [
            {
                "tokens": ["a"],
                "entities": [{"type": "Alien", "start": 0, "end": 1}],
                "relations": [],
            }
        ]
        with pytest.raises(IngestError, match="unknown entity type"):
            load_dataset(write_dataset(tmp_path, bad), SCHEMA)

    def test_relocation_is_total_by_construction(self, tmp_path):
        sentences, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        found, total, rate = relocation_rate(sentences, gold)
        assert (found, total, rate) == (4, 4, 1.0)

    def test_relocation_empty_gold(self):
        assert relocation_rate([], AtomSet()) == (0, 0, 1.0)


class TestSampleSplit:
    def test_deterministic_for_seed(self):
        items = list(range(100))
        assert sample_split(items, 0.1, seed=7) == sample_split(items, 0.1, seed=7)

    def test_different_seeds_differ(self):
        items = list(range(100))
        assert sample_split(items, 0.2, seed=1) != sample_split(items, 0.2, seed=2)

    def test_ceil_size(self):
        assert len(sample_split(list(range(10)), 0.25, seed=0)) == 3
        assert len(sample_split(list(range(10)), 1.0, seed=0)) == 10

    def test_no_duplicates(self):
        sample = sample_split(list(range(50)), 0.5, seed=3)
        assert len(sample) == len(set(sample))

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            sample_split([1, 2], 0.0, seed=0)
        with pytest.raises(ValueError):
            sample_split([1, 2], 1.5, seed=0)


class TestDump:
    def test_roundtrip(self, tmp_path):
        sentences, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        path = tmp_path / "dump.json"
        write_dump(path, dump_dataset(sentences, gold, "mini"))
        split, sentences2, gold2 = load_dump(path)
        assert split == "mini"
        assert sentences2 == sentences
        assert gold2 == gold

    def test_dump_is_deterministic(self, tmp_path):
        sentences, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        p1, p2 = tmp_path / "d1.json", tmp_path / "d2.json"
        write_dump(p1, dump_dataset(sentences, gold, "mini"))
        write_dump(p2, dump_dataset(sentences, gold, "mini"))
        assert p1.read_bytes() == p2.read_bytes()


class TestFinetuneExport:
    SPEC = PromptSpec(
        domain="d", experience="e.", context="c.", output_keys="k", example="ex"
    )

    def test_gold_completion_shape(self, tmp_path):
        _, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        payload = json.loads(gold_completion("mini:0", gold))
        assert payload["Entities"] == [
            {"Entity": "john smith", "Type": "peop"},
            {"Entity": "rome", "Type": "loc"},
        ]
        assert payload["Relationships"] == [
            {"Subject": "john smith", "Object": "rome", "Type": "live_in"}
        ]

    def test_export_lines(self, tmp_path):
        sentences, gold = load_dataset(write_dataset(tmp_path, RECORDS), SCHEMA)
        out = tmp_path / "tune.jsonl"
        count = export_finetune_file(sentences, gold, self.SPEC, out)
        lines = out.read_text().splitlines()
        assert count == len(lines) == 2
        record = json.loads(lines[0])
        roles = [m["role"] for m in record["messages"]]
        assert roles == ["system", "user", "assistant"]
        assert "Evaluate this text: John Smith lives in Rome." in record["messages"][1]["content"]
        assert "\n" not in record["messages"][2]["content"]
        json.loads(record["messages"][2]["content"])

    def test_unwritable_path_raises(self, tmp_path):
        with pytest.raises(ExportError):
            export_finetune_file([], AtomSet(), self.SPEC, tmp_path / "nope" / "out.jsonl")
