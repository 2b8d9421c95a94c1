"""Dual traversal of schema against gold and predicted instances.

evaluate_document turns one extraction attempt into a DocumentReport:
every schema field position lands in exactly one outcome bucket, and
the bucket counts always sum back to the position count.  Gold that
does not conform to its schema aborts with GoldInvalid - gold errors
must never masquerade as model errors.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .alignment import align_arrays
from .config import RunConfig
from .errors import GoldInvalid
from .harness import classify_json_text, strip_trailing_commas
from .judge import make_judge
from .metrics import (
    ERR_MISMATCH,
    ERR_NONE,
    ERR_STRUCTURAL,
    FieldResult,
    MetricRegistry,
    default_registry,
    evaluate_field,
)
from .schema import (
    FieldPosition,
    SchemaNode,
    enumerate_field_positions,
    validate_instance,
)
from .values import ABSENT, EXPLICIT_NULL, FieldState, PairAction, classify_pair, read_value

COUNT_KEYS = (
    "positions",
    "passed",
    "auto_passed",
    "omissions",
    "hallucinations",
    "mismatches",
    "structural",
    "skipped",
)


@dataclass(frozen=True)
class DocumentReport:
    """Outcome of evaluating one extraction attempt against gold."""

    valid: bool
    counts: dict[str, int]
    field_results: dict[str, FieldResult] = field(default_factory=dict)
    failure_mode: str | None = None
    validity: dict[str, Any] | None = None
    repaired: bool = False
    document: str = ""
    model: str = ""
    mode: str = ""

    @property
    def pass_rate(self) -> float:
        denominator = self.counts["positions"] - self.counts["skipped"]
        if denominator <= 0:
            return 1.0 if self.valid else 0.0
        return (self.counts["passed"] + self.counts["auto_passed"]) / denominator

    def to_dict(self) -> dict[str, Any]:
        return {
            "document": self.document,
            "model": self.model,
            "mode": self.mode,
            "valid": self.valid,
            "failure_mode": self.failure_mode,
            "repaired": self.repaired,
            "validity": self.validity,
            "counts": dict(self.counts),
            "pass_rate": self.pass_rate,
            "fields": {path: result.to_dict() for path, result in self.field_results.items()},
        }


def serialize_report(report: DocumentReport) -> str:
    """Canonical JSON: sorted keys, no whitespace; byte-identical for
    equal reports regardless of evaluation order."""
    return json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _child_state(state: FieldState, name: str) -> FieldState:
    if not state.is_present:
        return ABSENT
    if not isinstance(state.value, dict):
        return FieldState("missing", type_clash=True)
    if name not in state.value:
        return ABSENT
    value = state.value[name]
    return EXPLICIT_NULL if value is None else FieldState.present(value)


def evaluate_node(
    node: SchemaNode,
    gold_state: FieldState,
    pred_state: FieldState,
    config: RunConfig | None = None,
    judge: Any = None,
    path: str = "$",
    registry: MetricRegistry | None = None,
) -> list[FieldResult]:
    """Recursive evaluation of one subtree; one FieldResult per position."""
    config = config or RunConfig()
    if node.kind == "object":
        results: list[FieldResult] = []
        for name, child in node.properties.items():
            results.extend(
                evaluate_node(
                    child,
                    _child_state(gold_state, name),
                    _child_state(pred_state, name),
                    config=config,
                    judge=judge,
                    path=f"{path}.{name}",
                    registry=registry,
                )
            )
        return results
    if node.kind == "array":
        return [evaluate_array_position(node, gold_state, pred_state, config, judge, path, registry)]
    if node.kind == "choice":
        return [evaluate_choice_position(node, gold_state, pred_state, config, judge, path, registry)]
    return [evaluate_field(node.metric_spec, gold_state, pred_state, judge, config, path, registry)]


def evaluate_array_position(
    node: SchemaNode,
    gold_state: FieldState,
    pred_state: FieldState,
    config: RunConfig,
    judge: Any,
    path: str,
    registry: MetricRegistry | None,
) -> FieldResult:
    spec = node.metric_spec
    action = classify_pair(gold_state, pred_state, config.gold_missing_policy)
    if action is not PairAction.COMPARE:
        # the non-compare branches never touch the metric body
        return evaluate_field(spec, gold_state, pred_state, judge, config, path, registry)
    if spec is not None and spec.metric_id != "array_llm":
        # custom array metric plugged in through the registry
        return evaluate_field(spec, gold_state, pred_state, judge, config, path, registry)

    metric_id = spec.metric_id if spec else "array_llm"
    for value in (gold_state.value, pred_state.value):
        if not isinstance(value, list):
            got = "boolean" if isinstance(value, bool) else type(value).__name__
            return FieldResult(path, metric_id, action, 0.0, False, ERR_STRUCTURAL,
                               f"type mismatch: expected array, got {got}")
    alignment = align_arrays(
        node.items, gold_state.value, pred_state.value,
        judge=judge, config=config, registry=registry,
    )
    threshold = spec.param("pass_threshold", config.pass_threshold) if spec else config.pass_threshold
    passed = alignment.f1 >= threshold
    detail = json.dumps(alignment.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return FieldResult(
        path, metric_id, action, alignment.f1, passed,
        ERR_NONE if passed else ERR_MISMATCH, detail,
    )


def evaluate_choice_position(
    node: SchemaNode,
    gold_state: FieldState,
    pred_state: FieldState,
    config: RunConfig,
    judge: Any,
    path: str,
    registry: MetricRegistry | None,
) -> FieldResult:
    action = classify_pair(gold_state, pred_state, config.gold_missing_policy)
    if action is not PairAction.COMPARE:
        return evaluate_field(node.metric_spec, gold_state, pred_state, judge, config, path, registry)

    branch = next(
        (b for b in node.branches if validate_instance(b, gold_state.value).conforming),
        None,
    )
    if branch is None:
        return FieldResult(path, None, action, 0.0, False, ERR_STRUCTURAL,
                           "gold value conforms to no anyOf branch")
    if not validate_instance(branch, pred_state.value).conforming:
        return FieldResult(path, None, action, 0.0, False, ERR_STRUCTURAL,
                           "predicted value does not conform to the branch selected by gold")
    if branch.kind == "primitive":
        spec = node.metric_spec or branch.metric_spec
        return evaluate_field(spec, gold_state, pred_state, judge, config, path, registry)
    if branch.kind == "array":
        effective = branch
        if node.metric_spec is not None:
            effective = dataclasses.replace(branch, metric_spec=node.metric_spec)
        return evaluate_array_position(effective, gold_state, pred_state, config, judge, path, registry)
    # object branch: aggregate its positions into one score
    sub_results = evaluate_node(branch, gold_state, pred_state, config, judge, path, registry)
    scored = [r for r in sub_results if r.action is not PairAction.SKIP]
    score = sum(r.score for r in scored) / len(scored) if scored else 1.0
    passed = score >= config.pass_threshold
    detail = json.dumps([r.to_dict() for r in sub_results], sort_keys=True,
                        separators=(",", ":"), ensure_ascii=False)
    return FieldResult(path, None, action, score, passed,
                       ERR_NONE if passed else ERR_MISMATCH, detail)


def _tally(results: dict[str, FieldResult], position_count: int) -> dict[str, int]:
    counts = {key: 0 for key in COUNT_KEYS}
    counts["positions"] = position_count
    for result in results.values():
        if result.action is PairAction.AUTO_PASS:
            counts["auto_passed"] += 1
        elif result.action is PairAction.SKIP:
            counts["skipped"] += 1
        elif result.action is PairAction.OMISSION:
            counts["omissions"] += 1
        elif result.action is PairAction.HALLUCINATION:
            counts["hallucinations"] += 1
        elif result.passed:
            counts["passed"] += 1
        elif result.error == ERR_STRUCTURAL:
            counts["structural"] += 1
        else:
            counts["mismatches"] += 1
    return counts


def _invalid_counts(position_count: int) -> dict[str, int]:
    counts = {key: 0 for key in COUNT_KEYS}
    counts["positions"] = position_count
    counts["structural"] = position_count
    return counts


def invalid_document_report(
    schema: SchemaNode,
    failure_mode: str | None,
    validity: dict[str, Any] | None = None,
    repaired: bool = False,
    document: str = "",
    model: str = "",
    mode: str = "",
) -> DocumentReport:
    """Report for an attempt that produced no scoreable instance: every
    position counts against the attempt as structural."""
    position_count = len(enumerate_field_positions(schema))
    return DocumentReport(
        valid=False,
        counts=_invalid_counts(position_count),
        failure_mode=failure_mode,
        validity=validity,
        repaired=repaired,
        document=document,
        model=model,
        mode=mode,
    )


def evaluate_document(
    schema: SchemaNode,
    gold: Any,
    predicted_text: str,
    config: RunConfig | None = None,
    judge: Any = None,
    registry: MetricRegistry | None = None,
    document: str = "",
    model: str = "",
    mode: str = "",
) -> DocumentReport:
    """Score one raw model output against gold.

    Parse or conformance failure yields valid=false with every position
    counted and the failure classified; gold nonconformance raises
    GoldInvalid instead.
    """
    config = config or RunConfig()
    registry = registry or default_registry()
    gold_validity = validate_instance(schema, gold)
    if not gold_validity.conforming:
        first = gold_validity.violations[0]
        raise GoldInvalid(
            f"gold does not conform to the schema "
            f"({len(gold_validity.violations)} violations; first: {first.path}: {first.message})"
        )
    if judge is None:
        judge = make_judge(config.judge)

    text = predicted_text
    repaired = False
    if config.repair:
        stripped, removed = strip_trailing_commas(predicted_text)
        if removed:
            text = stripped
            repaired = True
    try:
        predicted = json.loads(text)
    except ValueError:
        return invalid_document_report(
            schema, classify_json_text(predicted_text), None, repaired, document, model, mode
        )
    conformance = validate_instance(schema, predicted)
    if not conformance.conforming:
        return invalid_document_report(
            schema, "Other", conformance.to_dict(), repaired, document, model, mode
        )

    positions = enumerate_field_positions(schema)

    def score(position: FieldPosition) -> tuple[str, FieldResult]:
        gold_state = read_value(gold, position.path)
        pred_state = read_value(predicted, position.path)
        results = evaluate_node(
            position.node, gold_state, pred_state,
            config=config, judge=judge, path=position.dotted, registry=registry,
        )
        assert len(results) == 1  # non-object positions evaluate to exactly one result
        return position.dotted, results[0]

    if config.parallelism > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            pairs = list(pool.map(score, positions))
    else:
        pairs = [score(position) for position in positions]

    field_results = {path: result for path, result in sorted(pairs, key=lambda pr: pr[0])}
    return DocumentReport(
        valid=True,
        counts=_tally(field_results, len(positions)),
        field_results=field_results,
        repaired=repaired,
        document=document,
        model=model,
        mode=mode,
    )
