"""Field-scoring metrics: the registry, the deterministic comparators,
and the judge-backed semantic comparator.

Deterministic metrics return 0/1 scores, except string_fuzzy which
returns the raw similarity and passes at the threshold (inclusive).
Type mismatches between a metric and its operands are structural
failures, never crashes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable

from .config import RunConfig
from .errors import JudgeProtocol, JudgeUnavailable, NonFinite, UnknownMetric
from .schema import MetricSpec
from .values import FieldState, PairAction, classify_pair

ERR_NONE = "none"
ERR_OMISSION = "omission"
ERR_HALLUCINATION = "hallucination"
ERR_MISMATCH = "mismatch"
ERR_STRUCTURAL = "structural"


@dataclass(frozen=True)
class FieldScore:
    """Raw metric outcome, before pairing-policy bookkeeping."""

    score: float
    passed: bool
    detail: str = ""
    structural: bool = False


@dataclass(frozen=True)
class FieldResult:
    """Final outcome for one field position."""

    path: str
    metric_id: str | None
    action: PairAction
    score: float
    passed: bool
    error: str
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path,
            "metric": self.metric_id,
            "action": self.action.value,
            "score": self.score,
            "passed": self.passed,
            "error": self.error,
            "detail": self.detail,
        }


MetricFn = Callable[[MetricSpec, Any, Any, Any, RunConfig], FieldScore]


class MetricRegistry:
    """Maps metric ids to implementations.  Ids register once; a second
    registration under the same id is a programming error."""

    def __init__(self) -> None:
        self._metrics: dict[str, MetricFn] = {}

    def register(self, metric_id: str, fn: MetricFn) -> None:
        if metric_id in self._metrics:
            raise ValueError(f"metric {metric_id!r} is already registered")
        self._metrics[metric_id] = fn

    def lookup(self, metric_id: str) -> MetricFn:
        try:
            return self._metrics[metric_id]
        except KeyError:
            raise UnknownMetric(f"no metric registered under {metric_id!r}") from None

    def ids(self) -> frozenset:
        return frozenset(self._metrics)


# --- string comparators -----------------------------------------------------

def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs), two-row DP."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def fuzzy_similarity(a: str, b: str) -> float:
    """1 - distance/max(len); two empty strings are identical (1.0)."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    # (L - d) / L rather than 1 - d/L: one correctly-rounded division, so
    # boundary fixtures like 1 edit in 5 chars land exactly on 0.8.
    return (longest - levenshtein(a, b)) / longest


def numeric_tolerance_check(gold: float, predicted: float, tolerance: float) -> bool:
    """Relative tolerance around gold; absolute when gold is zero."""
    if tolerance < 0:
        raise ValueError(f"tolerance must be non-negative, got {tolerance!r}")
    if not (math.isfinite(gold) and math.isfinite(predicted)):
        raise NonFinite(f"cannot compare non-finite numbers {gold!r} and {predicted!r}")
    if gold != 0:
        return abs(predicted - gold) / abs(gold) <= tolerance
    return abs(predicted) <= tolerance


def semantic_equivalence(
    gold: str,
    predicted: str,
    instructions: str | None = None,
    judge: Any = None,
    pass_threshold: float = 0.7,
) -> FieldScore:
    """Judge-scored equivalence.  Exact equality short-circuits without a
    judge call; a grammar-level judge failure scores the field as a
    structural failure rather than raising."""
    if gold == predicted:
        return FieldScore(1.0, True, "exact match; judge not consulted")
    if judge is None:
        raise JudgeUnavailable("string_semantic requires a judge handle")
    try:
        score, rationale = judge.equivalence(gold, predicted, instructions)
    except JudgeProtocol as exc:
        return FieldScore(0.0, False, f"judge protocol failure: {exc}", structural=True)
    return FieldScore(score, score >= pass_threshold, rationale)


# --- metric implementations --------------------------------------------------

def _type_fail(expected: str, value: Any) -> FieldScore:
    got = "boolean" if isinstance(value, bool) else type(value).__name__
    return FieldScore(0.0, False, f"type mismatch: expected {expected}, got {got}", structural=True)


def _check_strings(gold: Any, predicted: Any) -> FieldScore | None:
    if not isinstance(gold, str):
        return _type_fail("string", gold)
    if not isinstance(predicted, str):
        return _type_fail("string", predicted)
    return None


def _check_numbers(gold: Any, predicted: Any) -> FieldScore | None:
    for value in (gold, predicted):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return _type_fail("number", value)
    if not (math.isfinite(gold) and math.isfinite(predicted)):
        return FieldScore(0.0, False, "non-finite operand", structural=True)
    return None


def _string_exact(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_strings(gold, predicted)
    if bad:
        return bad
    if gold == predicted:
        return FieldScore(1.0, True, "exact match")
    return FieldScore(0.0, False, f"{predicted!r} != {gold!r}")


def _string_case_insensitive(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_strings(gold, predicted)
    if bad:
        return bad
    if gold.casefold() == predicted.casefold():
        return FieldScore(1.0, True, "match ignoring case")
    return FieldScore(0.0, False, f"{predicted!r} != {gold!r} even ignoring case")


def _string_fuzzy(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_strings(gold, predicted)
    if bad:
        return bad
    threshold = spec.param("similarity_threshold", config.similarity_threshold)
    similarity = fuzzy_similarity(gold, predicted)
    return FieldScore(
        similarity,
        similarity >= threshold,
        f"similarity {similarity:.4f} against threshold {threshold}",
    )


def _string_semantic(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_strings(gold, predicted)
    if bad:
        return bad
    threshold = spec.param("pass_threshold", config.pass_threshold)
    return semantic_equivalence(gold, predicted, spec.additional_instructions, judge, threshold)


def _number_exact(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_numbers(gold, predicted)
    if bad:
        return bad
    if gold == predicted:
        return FieldScore(1.0, True, "exact match")
    return FieldScore(0.0, False, f"{predicted!r} != {gold!r}")


def _number_tolerance(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    bad = _check_numbers(gold, predicted)
    if bad:
        return bad
    tolerance = spec.param("tolerance")
    if tolerance is None:
        tolerance = 0.001
    if numeric_tolerance_check(gold, predicted, tolerance):
        return FieldScore(1.0, True, f"within relative tolerance {tolerance}")
    return FieldScore(0.0, False, f"{predicted!r} outside tolerance {tolerance} of {gold!r}")


def _integer_exact(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    coerced = []
    for value in (gold, predicted):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return _type_fail("integer", value)
        if isinstance(value, float):
            if not (math.isfinite(value) and value.is_integer()):
                return _type_fail("integer", value)
            value = int(value)
        coerced.append(value)
    if coerced[0] == coerced[1]:
        return FieldScore(1.0, True, "exact match")
    return FieldScore(0.0, False, f"{predicted!r} != {gold!r}")


def _boolean_exact(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    for value in (gold, predicted):
        if not isinstance(value, bool):
            return _type_fail("boolean", value)
    if gold == predicted:
        return FieldScore(1.0, True, "exact match")
    return FieldScore(0.0, False, f"{predicted!r} != {gold!r}")


def _array_llm(spec: MetricSpec, gold: Any, predicted: Any, judge: Any, config: RunConfig) -> FieldScore:
    # Thin adapter so arrays participate in the plugin contract; the
    # engine calls align_arrays directly to keep the structured detail.
    from .alignment import align_arrays  # runtime import to avoid a cycle

    if not isinstance(gold, list):
        return _type_fail("array", gold)
    if not isinstance(predicted, list):
        return _type_fail("array", predicted)
    item_schema = spec.params.get("item_schema")
    if item_schema is None:
        return FieldScore(0.0, False, "array metric invoked without an item schema", structural=True)
    alignment = align_arrays(item_schema, gold, predicted, judge=judge, config=config)
    threshold = spec.param("pass_threshold", config.pass_threshold)
    return FieldScore(
        alignment.f1,
        alignment.f1 >= threshold,
        json.dumps(alignment.to_dict(), sort_keys=True),
    )


def default_registry() -> MetricRegistry:
    """Registry holding every built-in metric."""
    registry = MetricRegistry()
    registry.register("string_exact", _string_exact)
    registry.register("string_case_insensitive", _string_case_insensitive)
    registry.register("string_fuzzy", _string_fuzzy)
    registry.register("string_semantic", _string_semantic)
    registry.register("number_exact", _number_exact)
    registry.register("number_tolerance", _number_tolerance)
    registry.register("integer_exact", _integer_exact)
    registry.register("boolean_exact", _boolean_exact)
    registry.register("array_llm", _array_llm)
    return registry


def evaluate_field(
    spec: MetricSpec,
    gold: FieldState,
    predicted: FieldState,
    judge: Any = None,
    config: RunConfig | None = None,
    path: str = "$",
    registry: MetricRegistry | None = None,
) -> FieldResult:
    """Score one field position.

    The pairing policy runs first; the metric body is only invoked for
    Compare pairs, so judge-backed metrics never fire on absent values.
    """
    config = config or RunConfig()
    action = classify_pair(gold, predicted, config.gold_missing_policy)
    metric_id = spec.metric_id if spec is not None else None

    if action is PairAction.AUTO_PASS:
        return FieldResult(path, metric_id, action, 1.0, True, ERR_NONE,
                           "agreement on absent value")
    if action is PairAction.OMISSION:
        detail = "gold value has no counterpart in the prediction"
        if predicted.type_clash:
            detail += " (path crosses a non-object in the prediction)"
        return FieldResult(path, metric_id, action, 0.0, False, ERR_OMISSION, detail)
    if action is PairAction.HALLUCINATION:
        return FieldResult(path, metric_id, action, 0.0, False, ERR_HALLUCINATION,
                           "prediction supplies a value where gold has none")
    if action is PairAction.SKIP:
        return FieldResult(path, metric_id, action, 0.0, False, ERR_NONE,
                           "excluded from scoring (gold missing)")

    if spec is None:
        return FieldResult(path, None, action, 0.0, False, ERR_STRUCTURAL,
                           "no metric resolved for this position")
    registry = registry or default_registry()
    fn = registry.lookup(spec.metric_id)
    outcome = fn(spec, gold.value, predicted.value, judge, config)
    if outcome.passed:
        error = ERR_NONE
    elif outcome.structural:
        error = ERR_STRUCTURAL
    else:
        error = ERR_MISMATCH
    return FieldResult(path, spec.metric_id, action, outcome.score, outcome.passed, error, outcome.detail)
