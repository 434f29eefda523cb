"""Command-line interface.

Subcommands cover the pipeline stage by stage (ingest, render, predict,
check, score), the full experiment loop (run), and the two exports
(export-finetune, export-facts). Stages communicate through files, so any
stage can be rerun or swapped in isolation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checker, ingest, metrics, parsing, reporting
from .gateway import ChatGateway, ModelConfig
from .harness import load_run_config, run_experiment
from .ingest import load_dump
from .model import AtomSet, LabelSchema, Sentence
from .prompts import PromptSpec, render_pair

logger = logging.getLogger("jerasp")


def _load_model_config(path: str) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return ModelConfig.from_dict(json.load(fh))


def _cmd_ingest(args) -> int:
    schema = LabelSchema.from_file(args.schema)
    sentences, gold = ingest.load_dataset(args.dataset, schema, split=args.split)
    split = args.split or Path(args.dataset).stem
    found, total, rate = ingest.relocation_rate(sentences, gold)
    ingest.write_dump(args.out, ingest.dump_dataset(sentences, gold, split))
    logger.info(
        "ingested %d sentences, %d gold entities (%.2f%% relocatable), %d gold relations",
        len(sentences),
        total,
        100 * rate,
        len(gold.relations),
    )
    print(f"wrote {args.out}: {len(sentences)} sentences, relocation {found}/{total}")
    return 0


def _cmd_render(args) -> int:
    spec = PromptSpec.from_file(args.prompt_spec)
    if args.text is not None:
        sentence = Sentence(id="adhoc:0", text=args.text)
    else:
        if not args.dump or not args.sentence_id:
            print("render needs either --text or (--dump and --sentence-id)", file=sys.stderr)
            return 2
        _, sentences, _ = load_dump(args.dump)
        by_id = {s.id: s for s in sentences}
        if args.sentence_id not in by_id:
            print(f"sentence id {args.sentence_id!r} not found in {args.dump}", file=sys.stderr)
            return 2
        sentence = by_id[args.sentence_id]
    system, user = render_pair(spec, sentence)
    print("--- system ---")
    print(system)
    print("--- user ---")
    print(user)
    return 0


def _cmd_predict(args) -> int:
    schema = LabelSchema.from_file(args.schema)
    spec = PromptSpec.from_file(args.prompt_spec)
    _, sentences, _ = load_dump(args.dump)
    if args.limit:
        sentences = sentences[: args.limit]
    gateway = ChatGateway(_load_model_config(args.model_config))

    prompts = [render_pair(spec, s) for s in sentences]
    outcomes = gateway.batch_complete(prompts, parallelism=args.parallelism)
    records = []
    errors = 0
    for sentence, outcome in zip(sentences, outcomes):
        if outcome.ok:
            atoms, diag = parsing.parse_prediction(outcome.response, sentence.id, schema)
        else:
            errors += 1
            atoms = AtomSet()
            diag = parsing.ParseDiagnostics(sentence_id=sentence.id, parse_failed=True)
            diag.dropped_reasons.append(f"gateway: {outcome.error}")
        records.append(parsing.prediction_record(sentence.id, atoms, diag))
    parsing.write_predictions_file(args.out, records)
    print(f"wrote {args.out}: {len(records)} records, {errors} gateway errors")
    return 0


def _cmd_check(args) -> int:
    records = parsing.read_predictions_file(args.predictions)
    pred = parsing.merge_records(records)
    specs = checker.load_type_specs(args.type_specs) if args.type_specs else frozenset()
    derived = checker.derive(pred, specs)
    filtered = checker.filter_predictions(pred, derived)

    filtered_records = []
    for record in records:
        sid = record["sentence_id"]
        diag = parsing.ParseDiagnostics.from_dict(record["diagnostics"])
        filtered_records.append(parsing.prediction_record(sid, filtered, diag))
    parsing.write_predictions_file(args.out_filtered, filtered_records)

    dropped = len(pred.relations) - len(filtered.relations)
    if args.out_derived:
        derived_dict = {
            "false_declarations": [list(k) for k in sorted(derived.false_declarations)],
            "ok_types": [list(k) for k in sorted(derived.ok_types)],
            "has_declarations": sorted(derived.has_declarations),
            "relations_in": len(pred.relations),
            "relations_kept": len(filtered.relations),
        }
        with open(args.out_derived, "w", encoding="utf-8") as fh:
            json.dump(derived_dict, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
    print(
        f"checked {len(pred.relations)} relations: kept {len(filtered.relations)}, "
        f"rejected {dropped}"
    )
    return 0


def _cmd_score(args) -> int:
    schema = LabelSchema.from_file(args.schema)
    _, _, gold = load_dump(args.dump)
    records = parsing.read_predictions_file(args.predictions)
    pred = parsing.merge_records(records)

    if args.no_checker:
        derived = checker.vacuous_acceptance(pred)
    else:
        specs = checker.load_type_specs(args.type_specs) if args.type_specs else frozenset()
        derived = checker.derive(pred, specs)

    rep = metrics.score(pred, derived, gold, schema, strict_fn=args.strict_fn)
    written = reporting.write_report_files(rep, args.out_dir, label=args.label)
    print(reporting.report_to_text(rep, args.label))
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def _cmd_run(args) -> int:
    cfg = load_run_config(args.config, output_dir=args.out)
    result = run_experiment(cfg)
    print(reporting.report_to_text(result.averaged, f"mean of {len(result.runs)} runs"))
    print(f"artifacts in {result.output_dir}")
    return 0


def _cmd_export_finetune(args) -> int:
    spec = PromptSpec.from_file(args.prompt_spec)
    _, sentences, gold = load_dump(args.dump)
    sample = ingest.sample_split(sentences, args.fraction, args.seed)
    count = ingest.export_finetune_file(sample, gold, spec, args.out)
    print(f"wrote {args.out}: {count} examples (fraction {args.fraction}, seed {args.seed})")
    return 0


def _cmd_export_facts(args) -> int:
    records = parsing.read_predictions_file(args.predictions)
    pred = parsing.merge_records(records)
    gold = None
    if args.dump:
        _, _, gold = load_dump(args.dump)
    specs = checker.load_type_specs(args.type_specs) if args.type_specs else frozenset()
    schema = LabelSchema.from_file(args.schema) if args.schema else None
    text = checker.export_asp_facts(pred, gold, specs, schema)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {args.out}: {len(text.splitlines())} facts")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jerasp",
        description="Joint entity-relation extraction with consistency checking and F1 scoring.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a token-span dataset into a dump file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--split", default=None, help="split name (default: dataset file stem)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("render", help="show the prompts for one sentence")
    p.add_argument("--prompt-spec", required=True)
    p.add_argument("--text", default=None, help="ad-hoc sentence text")
    p.add_argument("--dump", default=None)
    p.add_argument("--sentence-id", default=None)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("predict", help="collect model predictions for a dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--prompt-spec", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--limit", type=int, default=0, help="only the first N sentences")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("check", help="filter a predictions file against type specs")
    p.add_argument("--predictions", required=True)
    p.add_argument("--type-specs", default=None)
    p.add_argument("--out-filtered", required=True)
    p.add_argument("--out-derived", default=None, help="derived-facts report (JSON)")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("score", help="score a predictions file against gold")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dump", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--type-specs", default=None)
    p.add_argument("--no-checker", action="store_true", help="skip consistency gating")
    p.add_argument("--strict-fn", action="store_true", help="count misses in unattempted sentences")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--label", default="")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("run", help="run a full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config's output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("export-finetune", help="write chat-format tuning examples from gold")
    p.add_argument("--dump", required=True)
    p.add_argument("--prompt-spec", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_finetune)

    p = sub.add_parser("export-facts", help="serialize predictions (and gold) as a fact file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dump", default=None)
    p.add_argument("--type-specs", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_facts)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # surface a one-line error, not a traceback
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
