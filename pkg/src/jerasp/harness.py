"""End-to-end experiment harness.

One experiment = one dataset + one prompt spec + one or two models,
repeated ``repetitions`` times and averaged. Each repetition renders
prompts, collects completions through the gateway, parses them, optionally
intersects entities with an auditor model, derives consistency facts,
filters, scores, and writes every intermediate artifact under
``output_dir/run_<n>/``. The averaged report lands in ``output_dir``.

Artifacts contain nothing time- or host-dependent, so a replayed experiment
is byte-reproducible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import checker, ingest, metrics, parsing, reporting
from .ensemble import ensemble_predict
from .gateway import BatchItem, ChatGateway, ModelConfig
from .model import AtomSet, LabelSchema, Sentence, TypeSpec
from .prompts import PromptSpec, render_pair

logger = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    """A run configuration is unusable."""


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to run one experiment."""

    dataset_path: str
    schema_path: str
    prompt_spec_path: str
    models: tuple[ModelConfig, ...]
    type_specs_path: str | None = None
    split: str | None = None
    use_asp_checker: bool = True
    use_type_specs: bool = True
    ensemble: bool = False
    strict_fn: bool = False
    repetitions: int = 3
    parallelism: int = 4
    sample_fraction: float | None = None
    sample_seed: int = 0
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if not self.models:
            raise HarnessError("at least one model config is required")
        if self.ensemble and len(self.models) < 2:
            raise HarnessError("ensemble runs need a primary and an auditor model")
        if self.repetitions < 1:
            raise HarnessError("repetitions must be >= 1")
        if self.parallelism < 1:
            raise HarnessError("parallelism must be >= 1")
        if self.use_type_specs and self.use_asp_checker and not self.type_specs_path:
            raise HarnessError("use_type_specs requires type_specs_path")
        if self.sample_fraction is not None and not (0 < self.sample_fraction <= 1):
            raise HarnessError("sample_fraction must be in (0, 1]")


def load_run_config(path: str | Path, output_dir: str | None = None) -> RunConfig:
    """Read a run config; relative input paths resolve against the file's directory."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)

    base = path.parent

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    models = []
    for entry in data.get("models", []):
        if "cache_path" in entry and entry["cache_path"]:
            entry = dict(entry, cache_path=resolve(entry["cache_path"]))
        models.append(ModelConfig.from_dict(entry))

    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise HarnessError(f"unknown run config fields: {sorted(unknown)}")

    kwargs = dict(data)
    kwargs["models"] = tuple(models)
    for key in ("dataset_path", "schema_path", "prompt_spec_path", "type_specs_path"):
        if key in kwargs:
            kwargs[key] = resolve(kwargs[key])
    if output_dir is not None:
        kwargs["output_dir"] = output_dir
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise HarnessError(f"bad run config: {exc}") from None


@dataclass(frozen=True)
class ExperimentResult:
    averaged: metrics.F1Report
    runs: tuple[metrics.F1Report, ...]
    output_dir: Path


def _records_for(
    sentences: Sequence[Sentence],
    atoms: AtomSet,
    diagnostics: dict[str, parsing.ParseDiagnostics],
) -> list[dict]:
    return [
        parsing.prediction_record(s.id, atoms, diagnostics[s.id]) for s in sentences
    ]


def _collect_predictions(
    gateway: ChatGateway,
    sentences: Sequence[Sentence],
    spec: PromptSpec,
    schema: LabelSchema,
    parallelism: int,
) -> tuple[AtomSet, dict[str, parsing.ParseDiagnostics]]:
    prompts = [render_pair(spec, s) for s in sentences]
    outcomes: list[BatchItem] = gateway.batch_complete(prompts, parallelism=parallelism)

    merged = AtomSet()
    diagnostics: dict[str, parsing.ParseDiagnostics] = {}
    for sentence, outcome in zip(sentences, outcomes):
        if outcome.ok:
            atoms, diag = parsing.parse_prediction(outcome.response, sentence.id, schema)
        else:
            atoms = AtomSet()
            diag = parsing.ParseDiagnostics(sentence_id=sentence.id, parse_failed=True)
            diag.dropped_reasons.append(f"gateway: {outcome.error}")
        merged = merged.merge(atoms)
        diagnostics[sentence.id] = diag
    return merged, diagnostics


def _derived_to_dict(derived: checker.DerivedFacts) -> dict:
    return {
        "false_declarations": [list(k) for k in sorted(derived.false_declarations)],
        "ok_types": [list(k) for k in sorted(derived.ok_types)],
        "has_declarations": sorted(derived.has_declarations),
    }


def _write_json(path: Path, data) -> None:
    path.write_text(
        json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    """Run the full pipeline and write all artifacts; returns the reports."""
    schema = LabelSchema.from_file(cfg.schema_path)
    spec = PromptSpec.from_file(cfg.prompt_spec_path)
    sentences, gold = ingest.load_dataset(cfg.dataset_path, schema, split=cfg.split)
    if cfg.sample_fraction is not None:
        sentences = ingest.sample_split(sentences, cfg.sample_fraction, cfg.sample_seed)
        kept = {s.id for s in sentences}
        gold = AtomSet(
            entities=frozenset(e for e in gold.entities if e.sentence_id in kept),
            relations=frozenset(r for r in gold.relations if r.sentence_id in kept),
        )

    specs: frozenset[TypeSpec] = frozenset()
    if cfg.use_type_specs and cfg.type_specs_path:
        specs = checker.load_type_specs(cfg.type_specs_path)

    out_root = Path(cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    run_reports: list[metrics.F1Report] = []
    for rep in range(1, cfg.repetitions + 1):
        run_dir = out_root / f"run_{rep}"
        run_dir.mkdir(parents=True, exist_ok=True)

        model_cfgs = [
            m.with_cache_path(m.cache_path.replace("{rep}", str(rep))) if m.cache_path else m
            for m in cfg.models
        ]
        primary_gateway = ChatGateway(model_cfgs[0])
        primary, primary_diags = _collect_predictions(
            primary_gateway, sentences, spec, schema, cfg.parallelism
        )
        parsing.write_predictions_file(
            run_dir / "predictions.jsonl", _records_for(sentences, primary, primary_diags)
        )

        combined = primary
        if cfg.ensemble:
            auditor_gateway = ChatGateway(model_cfgs[1])
            auditor, auditor_diags = _collect_predictions(
                auditor_gateway, sentences, spec, schema, cfg.parallelism
            )
            parsing.write_predictions_file(
                run_dir / "predictions_auditor.jsonl",
                _records_for(sentences, auditor, auditor_diags),
            )
            combined = ensemble_predict(primary, auditor)
            parsing.write_predictions_file(
                run_dir / "predictions_combined.jsonl",
                _records_for(sentences, combined, primary_diags),
            )

        if cfg.use_asp_checker:
            derived = checker.derive(combined, specs)
        else:
            derived = checker.vacuous_acceptance(combined)
        filtered = checker.filter_predictions(combined, derived)

        parsing.write_predictions_file(
            run_dir / "filtered_predictions.jsonl",
            _records_for(sentences, filtered, primary_diags),
        )
        _write_json(run_dir / "derived_facts.json", _derived_to_dict(derived))
        (run_dir / "facts.lp").write_text(
            checker.export_asp_facts(combined, gold, specs, schema), encoding="utf-8"
        )

        counts = metrics.count_confusion(
            combined, derived, gold, schema, strict_fn=cfg.strict_fn
        )
        rep_report = metrics.report(counts)
        reporting.write_report_files(rep_report, run_dir, label=f"run {rep}")
        run_reports.append(rep_report)
        logger.info(
            "run %d: entity micro %.4f, relation micro %.4f",
            rep,
            rep_report.entity_micro,
            rep_report.relation_micro,
        )

    averaged = metrics.average_reports(run_reports)
    reporting.write_report_files(
        averaged, out_root, label=f"mean of {cfg.repetitions} runs"
    )
    return ExperimentResult(
        averaged=averaged, runs=tuple(run_reports), output_dir=out_root
    )
