"""End-to-end tests: experiment harness and CLI over the replay fixture.

The fixture (tests/fixtures/conll04_mini.json + conll04_mini_replay.jsonl)
is a 20-sentence dataset with scripted model responses. Its exact confusion
counts were worked out by hand and are asserted here as literals; any change
to counting, parsing, filtering, or gating semantics shows up as a diff
against these numbers.

Hand tally (checker on, lenient FN gating):
  entities  — TP 37, FP 3, FN 4
              peop (12,0,1)  org (7,1,0)  loc (17,0,3)  other (1,2,0)
  relations — TP 14, FP 0, FN 2
              kill (2,0,0)  live_in (3,0,1)  work_for (3,0,0)
              orgbased_in (4,0,1)  located_in (2,0,0)
Checker off flips exactly the checker-mediated relation cells:
  relations — TP 16, FP 4, FN 2
              kill (2,1,0)  live_in (3,1,1)  work_for (4,1,0)
              orgbased_in (4,0,1)  located_in (3,1,0)
Entity counts are identical in both modes (the checker never touches
entities). Sentences 10 (refusal) and 16 (empty answer) stay outside the
scored set, so their gold atoms are never charged as misses.
"""

import json
from pathlib import Path

import pytest

from conftest import CONFIGS_DIR, FIXTURES_DIR

from jerasp.cli import main as cli_main
from jerasp.gateway import ModelConfig
from jerasp.harness import RunConfig, load_run_config, run_experiment
from jerasp.metrics import TypeCounts

DATASET = FIXTURES_DIR / "conll04_mini.json"
REPLAY = FIXTURES_DIR / "conll04_mini_replay.jsonl"
CONLL04 = CONFIGS_DIR / "conll04"

ENTITY_EXPECTED = {
    "peop": TypeCounts(12, 0, 1),
    "org": TypeCounts(7, 1, 0),
    "loc": TypeCounts(17, 0, 3),
    "other": TypeCounts(1, 2, 0),
}
RELATION_EXPECTED_ON = {
    "kill": TypeCounts(2, 0, 0),
    "live_in": TypeCounts(3, 0, 1),
    "work_for": TypeCounts(3, 0, 0),
    "orgbased_in": TypeCounts(4, 0, 1),
    "located_in": TypeCounts(2, 0, 0),
}
RELATION_EXPECTED_OFF = {
    "kill": TypeCounts(2, 1, 0),
    "live_in": TypeCounts(3, 1, 1),
    "work_for": TypeCounts(4, 1, 0),
    "orgbased_in": TypeCounts(4, 0, 1),
    "located_in": TypeCounts(3, 1, 0),
}


def run_fixture(tmp_path: Path, config_name: str, subdir: str = "out"):
    cfg = load_run_config(FIXTURES_DIR / config_name, output_dir=str(tmp_path / subdir))
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def on_result(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("checker_on")
    return run_fixture(tmp, "run_checker_on.json")


@pytest.fixture(scope="module")
def off_result(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("checker_off")
    return run_fixture(tmp, "run_checker_off.json")


class TestExperimentCounts:
    def test_entity_counts_checker_on(self, on_result):
        assert dict(on_result.averaged.counts.entity) == ENTITY_EXPECTED
        assert on_result.averaged.counts.totals("entity") == TypeCounts(37, 3, 4)

    def test_relation_counts_checker_on(self, on_result):
        assert dict(on_result.averaged.counts.relation) == RELATION_EXPECTED_ON
        assert on_result.averaged.counts.totals("relation") == TypeCounts(14, 0, 2)

    def test_micro_f1_checker_on(self, on_result):
        assert on_result.averaged.entity_micro == pytest.approx(74 / 81)
        assert on_result.averaged.relation_micro == pytest.approx(28 / 30)

    def test_macro_f1_checker_on(self, on_result):
        expected_entity = (24 / 25 + 14 / 15 + 34 / 37 + 2 / 4) / 4
        expected_relation = (1.0 + 6 / 7 + 1.0 + 8 / 9 + 1.0) / 5
        assert on_result.averaged.entity_macro == pytest.approx(expected_entity)
        assert on_result.averaged.relation_macro == pytest.approx(expected_relation)

    def test_entity_counts_unaffected_by_checker(self, on_result, off_result):
        assert dict(off_result.averaged.counts.entity) == ENTITY_EXPECTED

    def test_relation_counts_checker_off(self, off_result):
        assert dict(off_result.averaged.counts.relation) == RELATION_EXPECTED_OFF
        assert off_result.averaged.counts.totals("relation") == TypeCounts(16, 4, 2)
        assert off_result.averaged.relation_micro == pytest.approx(32 / 38)

    def test_checker_strictly_reduces_relation_fp(self, on_result, off_result):
        fp_on = on_result.averaged.counts.totals("relation").fp
        fp_off = off_result.averaged.counts.totals("relation").fp
        assert fp_on < fp_off

    def test_single_rep_average_equals_run(self, on_result):
        assert len(on_result.runs) == 1
        assert on_result.averaged.to_dict() == on_result.runs[0].to_dict()


class TestExperimentArtifacts:
    def test_expected_files(self, on_result):
        root = on_result.output_dir
        run = root / "run_1"
        for name in ("report.json", "report.txt", "report_f1.png", "report_counts.png"):
            assert (root / name).is_file(), name
            assert (run / name).is_file(), name
        for name in ("predictions.jsonl", "filtered_predictions.jsonl",
                     "derived_facts.json", "facts.lp"):
            assert (run / name).is_file(), name

    def test_predictions_one_record_per_sentence(self, on_result):
        lines = (on_result.output_dir / "run_1" / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == 20
        sids = [json.loads(line)["sentence_id"] for line in lines]
        assert sids == [f"conll04_mini:{i}" for i in range(20)]

    def test_derived_facts_contents(self, on_result):
        derived = json.loads(
            (on_result.output_dir / "run_1" / "derived_facts.json").read_text()
        )
        assert derived["false_declarations"] == [
            ["conll04_mini:6", "oswald", "jack ruby", "kill"]
        ]
        assert len(derived["ok_types"]) == 14
        assert derived["has_declarations"] == [
            "kill", "live_in", "located_in", "orgbased_in", "work_for"
        ]

    def test_filtered_predictions_drop_rejected_relations(self, on_result):
        run = on_result.output_dir / "run_1"
        raw = [json.loads(l) for l in (run / "predictions.jsonl").read_text().splitlines()]
        filtered = [
            json.loads(l) for l in (run / "filtered_predictions.jsonl").read_text().splitlines()
        ]
        assert sum(len(r["relations"]) for r in raw) == 20
        assert sum(len(r["relations"]) for r in filtered) == 14
        # entities are never filtered
        assert sum(len(r["entities"]) for r in raw) == 41
        assert sum(len(r["entities"]) for r in filtered) == 41

    def test_fact_file_has_all_sections(self, on_result):
        text = (on_result.output_dir / "run_1" / "facts.lp").read_text()
        assert 'atom(rel("conll04_mini:6","oswald","jack ruby","kill")).' in text
        assert 'ent("conll04_mini:16","naples","loc").' in text  # gold survives gating
        assert 'type_def("work_for","peop","org").' in text
        assert 'type_of_r("kill").' in text
        assert text.endswith("\n")

    def test_report_json_round_trips(self, on_result):
        from jerasp.metrics import F1Report

        data = json.loads((on_result.output_dir / "report.json").read_text())
        rebuilt = F1Report.from_dict(data)
        assert rebuilt.to_dict() == on_result.averaged.to_dict()


@pytest.fixture(scope="module")
def records(on_result):
    lines = (on_result.output_dir / "run_1" / "predictions.jsonl").read_text().splitlines()
    return {json.loads(l)["sentence_id"]: json.loads(l) for l in lines}


class TestParsingDiagnosticsInRun:
    @pytest.mark.parametrize(
        "index,repairs",
        [
            (2, ["strip_code_fences"]),
            (3, ["single_to_double_quotes"]),
            (4, ["drop_trailing_commas"]),
            (9, ["drop_newlines"]),
            (19, ["slice_to_braces"]),
        ],
    )
    def test_repair_tags(self, records, index, repairs):
        assert records[f"conll04_mini:{index}"]["diagnostics"]["repairs_applied"] == repairs

    def test_unrepairable_response_is_empty_not_fatal(self, records):
        record = records["conll04_mini:10"]
        assert record["diagnostics"]["parse_failed"] is True
        assert record["entities"] == [] and record["relations"] == []

    def test_unknown_entity_type_kept_and_tallied(self, records):
        record = records["conll04_mini:12"]
        assert record["diagnostics"]["unknown_type_items"] == 1
        assert {"surface": "mount fuji", "type": "mountain"} in record["entities"]

    def test_duplicate_items_collapse(self, records):
        record = records["conll04_mini:18"]
        assert record["entities"] == [
            {"surface": "ahmedabad", "type": "loc"},
            {"surface": "gandhi", "type": "peop"},
        ]

    def test_shouted_case_normalized(self, records):
        record = records["conll04_mini:15"]
        assert {"surface": "apple", "type": "org"} in record["entities"]
        assert {"surface": "susan kare", "type": "peop"} in record["entities"]


class TestDeterminism:
    COMPARED = (
        "report.json",
        "report.txt",
        "report_f1.png",
        "report_counts.png",
        "run_1/predictions.jsonl",
        "run_1/filtered_predictions.jsonl",
        "run_1/derived_facts.json",
        "run_1/facts.lp",
        "run_1/report.json",
        "run_1/report.txt",
    )

    def test_two_runs_byte_identical(self, tmp_path):
        first = run_fixture(tmp_path, "run_checker_on.json", "a")
        second = run_fixture(tmp_path, "run_checker_on.json", "b")
        for name in self.COMPARED:
            left = (first.output_dir / name).read_bytes()
            right = (second.output_dir / name).read_bytes()
            assert left == right, f"{name} differs between identical runs"


class TestEnsembleRun:
    def test_two_model_run_writes_auditor_artifacts(self, tmp_path):
        model = ModelConfig(
            provider="replay", model_name="stub-extractor", cache_path=str(REPLAY)
        )
        cfg = RunConfig(
            dataset_path=str(DATASET),
            schema_path=str(CONLL04 / "schema.json"),
            prompt_spec_path=str(CONLL04 / "prompt.json"),
            type_specs_path=str(CONLL04 / "type_specs.lp"),
            models=(model, model),
            ensemble=True,
            repetitions=1,
            output_dir=str(tmp_path / "out"),
        )
        result = run_experiment(cfg)
        run = result.output_dir / "run_1"
        assert (run / "predictions_auditor.jsonl").is_file()
        assert (run / "predictions_combined.jsonl").is_file()
        # identical auditor -> intersection changes nothing
        assert dict(result.averaged.counts.entity) == ENTITY_EXPECTED
        assert dict(result.averaged.counts.relation) == RELATION_EXPECTED_ON


class TestCli:
    @pytest.fixture()
    def dump_path(self, tmp_path):
        out = tmp_path / "dump.json"
        code = cli_main(
            [
                "ingest",
                "--dataset", str(DATASET),
                "--schema", str(CONLL04 / "schema.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        return out

    @pytest.fixture()
    def predictions_path(self, tmp_path, dump_path):
        model_cfg = tmp_path / "model.json"
        model_cfg.write_text(
            json.dumps(
                {
                    "provider": "replay",
                    "model_name": "stub-extractor",
                    "cache_path": str(REPLAY),
                }
            )
        )
        out = tmp_path / "predictions.jsonl"
        code = cli_main(
            [
                "predict",
                "--dump", str(dump_path),
                "--schema", str(CONLL04 / "schema.json"),
                "--prompt-spec", str(CONLL04 / "prompt.json"),
                "--model-config", str(model_cfg),
                "--out", str(out),
            ]
        )
        assert code == 0
        return out

    def test_ingest_writes_complete_dump(self, dump_path):
        dump = json.loads(dump_path.read_text())
        assert len(dump["sentences"]) == 20
        assert len(dump["gold"]["entities"]) == 44
        assert len(dump["gold"]["relations"]) == 19
        assert dump["split"] == "conll04_mini"

    def test_ingest_reports_full_relocation(self, tmp_path, capsys):
        code = cli_main(
            [
                "ingest",
                "--dataset", str(DATASET),
                "--schema", str(CONLL04 / "schema.json"),
                "--out", str(tmp_path / "reloc.json"),
            ]
        )
        assert code == 0
        assert "relocation 44/44" in capsys.readouterr().out

    def test_render_adhoc_text(self, capsys):
        code = cli_main(
            [
                "render",
                "--prompt-spec", str(CONLL04 / "prompt.json"),
                "--text", "Oswald killed Kennedy in Dallas.",
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "--- system ---" in printed
        assert "Oswald killed Kennedy in Dallas." in printed
        assert "RFC8259" in printed

    def test_render_requires_text_or_dump(self, capsys):
        code = cli_main(["render", "--prompt-spec", str(CONLL04 / "prompt.json")])
        assert code == 2

    def test_predict_replays_all_sentences(self, predictions_path, capsys):
        lines = predictions_path.read_text().splitlines()
        assert len(lines) == 20

    def test_check_filters_and_reports(self, tmp_path, predictions_path, capsys):
        filtered = tmp_path / "filtered.jsonl"
        derived = tmp_path / "derived.json"
        code = cli_main(
            [
                "check",
                "--predictions", str(predictions_path),
                "--type-specs", str(CONLL04 / "type_specs.lp"),
                "--out-filtered", str(filtered),
                "--out-derived", str(derived),
            ]
        )
        assert code == 0
        assert "kept 14, rejected 6" in capsys.readouterr().out
        derived_data = json.loads(derived.read_text())
        assert derived_data["relations_in"] == 20
        assert derived_data["relations_kept"] == 14
        assert len(derived_data["false_declarations"]) == 1

    def test_score_with_checker(self, tmp_path, dump_path, predictions_path):
        out_dir = tmp_path / "scored"
        code = cli_main(
            [
                "score",
                "--predictions", str(predictions_path),
                "--dump", str(dump_path),
                "--schema", str(CONLL04 / "schema.json"),
                "--type-specs", str(CONLL04 / "type_specs.lp"),
                "--out-dir", str(out_dir),
                "--label", "fixture",
            ]
        )
        assert code == 0
        data = json.loads((out_dir / "report.json").read_text())
        assert data["scores"]["relation"]["micro"] == pytest.approx(28 / 30)
        assert data["scores"]["entity"]["micro"] == pytest.approx(74 / 81)

    def test_score_without_checker(self, tmp_path, dump_path, predictions_path):
        out_dir = tmp_path / "scored_plain"
        code = cli_main(
            [
                "score",
                "--predictions", str(predictions_path),
                "--dump", str(dump_path),
                "--schema", str(CONLL04 / "schema.json"),
                "--no-checker",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        data = json.loads((out_dir / "report.json").read_text())
        assert data["scores"]["relation"]["micro"] == pytest.approx(32 / 38)
        assert data["scores"]["entity"]["micro"] == pytest.approx(74 / 81)

    def test_run_subcommand(self, tmp_path, capsys):
        code = cli_main(
            [
                "run",
                "--config", str(FIXTURES_DIR / "run_checker_on.json"),
                "--out", str(tmp_path / "cli_run"),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "artifacts in" in printed
        assert (tmp_path / "cli_run" / "report.json").is_file()

    def test_export_finetune(self, tmp_path, dump_path):
        out = tmp_path / "tune.jsonl"
        code = cli_main(
            [
                "export-finetune",
                "--dump", str(dump_path),
                "--prompt-spec", str(CONLL04 / "prompt.json"),
                "--fraction", "0.25",
                "--seed", "0",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 5  # ceil(0.25 * 20)
        for line in lines:
            roles = [m["role"] for m in line["messages"]]
            assert roles == ["system", "user", "assistant"]
            json.loads(line["messages"][2]["content"])  # assistant turn is valid JSON

    def test_export_facts(self, tmp_path, dump_path, predictions_path):
        out = tmp_path / "facts.lp"
        code = cli_main(
            [
                "export-facts",
                "--predictions", str(predictions_path),
                "--dump", str(dump_path),
                "--type-specs", str(CONLL04 / "type_specs.lp"),
                "--schema", str(CONLL04 / "schema.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        text = out.read_text()
        assert 'type_def("kill","peop","peop").' in text
        assert 'atom(ent(' in text and 'ent("conll04_mini:0"' in text

    def test_cli_error_is_one_line(self, capsys):
        code = cli_main(
            [
                "ingest",
                "--dataset", "/nonexistent/did-not-happen.json",
                "--schema", str(CONLL04 / "schema.json"),
                "--out", "/tmp/never.json",
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
