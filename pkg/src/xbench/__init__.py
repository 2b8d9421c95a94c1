"""Schema-driven evaluation for document-to-JSON structured extraction.

The schema is the executable evaluation contract: evaluation_config
annotations pick per-field metrics, tri-state value semantics separate
deliberate nulls from omissions, arrays are aligned semantically rather
than by position, and every document report folds into reproducible
run-level grids.
"""

from .alignment import (
    ArrayAlignment,
    MatchedPair,
    align_arrays,
    deterministic_match,
    judge_match,
    pairwise_similarity,
)
from .complexity import (
    CompressionStats,
    InstanceProfile,
    SchemaProfile,
    compression_stats,
    count_tokens,
    profile_instance,
    profile_schema,
    register_tokenizer,
)
from .config import JudgeConfig, RunConfig, load_config
from .engine import (
    DocumentReport,
    evaluate_document,
    evaluate_node,
    invalid_document_report,
    serialize_report,
)
from .errors import XBError
from .harness import (
    ExtractionOutcome,
    ManifestRow,
    MockProvider,
    build_prompt,
    classify_failure,
    load_manifest,
    run_extraction,
    run_manifest,
)
from .judge import JudgeGateway, JudgeRequest, JudgeVerdict, judge_call, make_judge
from .metrics import (
    FieldResult,
    FieldScore,
    MetricRegistry,
    default_registry,
    evaluate_field,
    fuzzy_similarity,
    levenshtein,
    numeric_tolerance_check,
    semantic_equivalence,
)
from .reporting import (
    RunSummary,
    ScoredAttempt,
    aggregate_run,
    emit_report,
    parse_report,
    score_run,
)
from .schema import (
    FieldPosition,
    MetricSpec,
    SchemaNode,
    enumerate_field_positions,
    parse_schema,
    resolve_eval_config,
    serialize_schema,
    validate_instance,
)
from .values import FieldState, PairAction, classify_pair, read_value

__version__ = "0.1.0"

__all__ = [
    "ArrayAlignment",
    "CompressionStats",
    "DocumentReport",
    "ExtractionOutcome",
    "FieldPosition",
    "FieldResult",
    "FieldScore",
    "FieldState",
    "InstanceProfile",
    "JudgeConfig",
    "JudgeGateway",
    "JudgeRequest",
    "JudgeVerdict",
    "ManifestRow",
    "MatchedPair",
    "MetricRegistry",
    "MetricSpec",
    "MockProvider",
    "PairAction",
    "RunConfig",
    "RunSummary",
    "SchemaNode",
    "SchemaProfile",
    "ScoredAttempt",
    "XBError",
    "aggregate_run",
    "align_arrays",
    "build_prompt",
    "classify_failure",
    "classify_pair",
    "compression_stats",
    "count_tokens",
    "default_registry",
    "deterministic_match",
    "emit_report",
    "enumerate_field_positions",
    "evaluate_document",
    "evaluate_field",
    "evaluate_node",
    "fuzzy_similarity",
    "invalid_document_report",
    "judge_call",
    "judge_match",
    "levenshtein",
    "load_config",
    "load_manifest",
    "make_judge",
    "numeric_tolerance_check",
    "pairwise_similarity",
    "parse_report",
    "parse_schema",
    "profile_instance",
    "profile_schema",
    "read_value",
    "register_tokenizer",
    "resolve_eval_config",
    "run_extraction",
    "run_manifest",
    "score_run",
    "semantic_equivalence",
    "serialize_report",
    "serialize_schema",
    "validate_instance",
]
