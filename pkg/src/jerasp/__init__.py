"""jerasp: joint entity-relation extraction with consistency checking.

A pipeline for prompting chat models to extract typed entities and
relations from text, validating the extracted relations against declarative
type specs, and benchmarking the results with sentence-gated micro/macro F1.
"""

from .checker import (
    DerivedFacts,
    derive,
    export_asp_facts,
    filter_predictions,
    load_type_specs,
    parse_asp_facts,
    parse_type_specs,
    vacuous_acceptance,
)
from .ensemble import agree_entities, ensemble_predict
from .gateway import ChatGateway, GatewayError, ModelConfig, ReplayMissError, request_key
from .harness import ExperimentResult, RunConfig, load_run_config, run_experiment
from .ingest import (
    IngestError,
    detokenize,
    export_finetune_file,
    load_dataset,
    load_dump,
    relocation_rate,
    sample_split,
)
from .metrics import (
    ConfusionCounts,
    F1Report,
    TypeCounts,
    average_reports,
    count_confusion,
    f1,
    macro_f1,
    micro_f1,
    report,
    score,
)
from .model import (
    AtomSet,
    CanonicalizationEmpty,
    EntityAtom,
    GoldSet,
    LabelSchema,
    PredictionSet,
    RelationAtom,
    Sentence,
    TypeSpec,
    canonicalize_label,
    canonicalize_surface,
)
from .parsing import ParseDiagnostics, ParseError, extract_json_object, parse_prediction
from .prompts import PromptSpec, TemplateError, render_pair, render_system, render_user

__version__ = "0.1.0"

__all__ = [
    "AtomSet",
    "CanonicalizationEmpty",
    "ChatGateway",
    "ConfusionCounts",
    "DerivedFacts",
    "EntityAtom",
    "ExperimentResult",
    "F1Report",
    "GatewayError",
    "GoldSet",
    "IngestError",
    "LabelSchema",
    "ModelConfig",
    "ParseDiagnostics",
    "ParseError",
    "PredictionSet",
    "PromptSpec",
    "RelationAtom",
    "ReplayMissError",
    "RunConfig",
    "Sentence",
    "TemplateError",
    "TypeCounts",
    "TypeSpec",
    "agree_entities",
    "average_reports",
    "canonicalize_label",
    "canonicalize_surface",
    "count_confusion",
    "derive",
    "detokenize",
    "ensemble_predict",
    "export_asp_facts",
    "export_finetune_file",
    "extract_json_object",
    "f1",
    "filter_predictions",
    "load_dataset",
    "load_dump",
    "load_run_config",
    "load_type_specs",
    "macro_f1",
    "micro_f1",
    "parse_asp_facts",
    "parse_prediction",
    "parse_type_specs",
    "relocation_rate",
    "render_pair",
    "render_system",
    "render_user",
    "report",
    "request_key",
    "run_experiment",
    "sample_split",
    "score",
    "vacuous_acceptance",
]
