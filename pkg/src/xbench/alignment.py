"""Order-independent alignment of predicted array items against gold items.

Matching is injective: every gold item pairs with at most one predicted
item and vice versa.  Matched pairs are then recursively evaluated with
the item schema's own field metrics; pairs whose mean field score
clears the pass threshold count as true positives for the array's
precision/recall/F1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import RunConfig
from .errors import JudgeUnavailable, MatcherProtocol
from .metrics import fuzzy_similarity, numeric_tolerance_check
from .schema import SchemaNode, enumerate_field_positions, validate_instance
from .values import PairAction, read_value

# Past this many items per side the exact assignment search gives way to
# greedy best-first matching.
EXACT_LIMIT = 12

MatcherFn = Callable[[SchemaNode, list, list, list], dict[int, int]]


@dataclass(frozen=True)
class MatchedPair:
    gold_index: int
    pred_index: int
    similarity: float | None  # None when a judge matcher chose the pair
    score: float
    passed: bool
    fields: tuple = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "gold_index": self.gold_index,
            "pred_index": self.pred_index,
            "similarity": self.similarity,
            "score": self.score,
            "passed": self.passed,
            "fields": [f.to_dict() for f in self.fields],
        }


@dataclass(frozen=True)
class ArrayAlignment:
    matched: tuple = ()
    missed_gold: tuple = ()
    spurious_pred: tuple = ()
    invalid_gold: tuple = ()
    invalid_pred: tuple = ()
    true_positives: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "matched": [pair.to_dict() for pair in self.matched],
            "missed_gold": list(self.missed_gold),
            "spurious_pred": list(self.spurious_pred),
            "invalid_gold": list(self.invalid_gold),
            "invalid_pred": list(self.invalid_pred),
            "true_positives": self.true_positives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "note": self.note,
        }


def pairwise_similarity(item_schema: SchemaNode, gold_item: Any, pred_item: Any) -> float:
    """Deterministic similarity in [0, 1]: the mean per-field score over
    fields present on both sides (fuzzy for strings, tolerance for
    numbers, exact otherwise).  No shared fields means 0.0."""
    scores: list[float] = []
    for position in enumerate_field_positions(item_schema):
        gold = read_value(gold_item, position.path)
        pred = read_value(pred_item, position.path)
        if not (gold.is_present and pred.is_present):
            continue
        scores.append(_scalar_similarity(gold.value, pred.value))
    if not scores:
        return 0.0
    return sum(scores) / len(scores)


def _scalar_similarity(gold: Any, pred: Any) -> float:
    if isinstance(gold, str) and isinstance(pred, str):
        return fuzzy_similarity(gold, pred)
    if isinstance(gold, bool) or isinstance(pred, bool):
        return 1.0 if gold is pred else 0.0
    if isinstance(gold, (int, float)) and isinstance(pred, (int, float)):
        try:
            return 1.0 if numeric_tolerance_check(gold, pred, 0.001) else 0.0
        except Exception:
            return 0.0
    return 1.0 if gold == pred else 0.0


def similarity_matrix(item_schema: SchemaNode, gold_items: list, pred_items: list) -> np.ndarray:
    matrix = np.zeros((len(gold_items), len(pred_items)))
    for i, gold_item in enumerate(gold_items):
        for j, pred_item in enumerate(pred_items):
            matrix[i, j] = pairwise_similarity(item_schema, gold_item, pred_item)
    return matrix


def deterministic_match(
    item_schema: SchemaNode,
    gold_items: list,
    pred_items: list,
    criteria: list | None = None,
    floor: float = 0.3,
) -> dict[int, int]:
    """Injective gold->pred mapping maximizing total similarity.

    Exact (assignment-problem) search up to EXACT_LIMIT items per side;
    greedy best-first beyond.  Pairs below the floor are never matched.
    The criteria argument is accepted for matcher-contract compatibility
    and ignored: similarity already encodes the field comparison.
    """
    if not gold_items or not pred_items:
        return {}
    sims = similarity_matrix(item_schema, gold_items, pred_items)
    if max(len(gold_items), len(pred_items)) <= EXACT_LIMIT:
        # Clamping sub-floor entries to zero keeps them assignable but
        # worthless; dropping them afterwards yields the optimum over
        # floor-respecting matchings.
        clamped = np.where(sims >= floor, sims, 0.0)
        rows, cols = linear_sum_assignment(clamped, maximize=True)
        return {int(i): int(j) for i, j in zip(rows, cols) if sims[i, j] >= floor}
    mapping: dict[int, int] = {}
    used_pred: set[int] = set()
    candidates = sorted(
        ((i, j) for i in range(len(gold_items)) for j in range(len(pred_items))),
        key=lambda ij: (-sims[ij[0], ij[1]], ij[0], ij[1]),
    )
    for i, j in candidates:
        if sims[i, j] < floor:
            break
        if i in mapping or j in used_pred:
            continue
        mapping[i] = j
        used_pred.add(j)
    return mapping


def field_criteria(item_schema: SchemaNode) -> list[dict[str, Any]]:
    """Per-field matching criteria handed to the judge matcher."""
    criteria = []
    for position in enumerate_field_positions(item_schema):
        spec = position.node.metric_spec
        entry: dict[str, Any] = {
            "path": position.dotted,
            "metric": spec.metric_id if spec else None,
        }
        instructions = position.node.additional_instructions or (
            spec.additional_instructions if spec else None
        )
        if instructions:
            entry["instructions"] = instructions
        criteria.append(entry)
    return criteria


def judge_match(
    item_schema: SchemaNode,
    gold_items: list,
    pred_items: list,
    criteria: list | None = None,
    judge: Any = None,
    batch_size: int = 25,
    retries: int = 2,
) -> dict[int, int]:
    """Judge-driven injective matching, batched for long arrays.

    Gold items go to the judge batch_size at a time; predicted items
    already claimed by earlier batches are masked out, so the union of
    batch mappings stays injective.  A non-injective or out-of-range
    batch mapping is re-asked up to the retry budget, then
    MatcherProtocol propagates.
    """
    if judge is None:
        raise JudgeUnavailable("judge matcher requires a judge handle")
    if not gold_items or not pred_items:
        return {}
    if criteria is None:
        criteria = field_criteria(item_schema)
    schema_raw = item_schema.to_raw()
    mapping: dict[int, int] = {}
    used_pred: set[int] = set()
    for start in range(0, len(gold_items), batch_size):
        batch_gold_indices = list(range(start, min(start + batch_size, len(gold_items))))
        open_pred_indices = [j for j in range(len(pred_items)) if j not in used_pred]
        if not open_pred_indices:
            break
        batch_gold = [gold_items[i] for i in batch_gold_indices]
        open_pred = [pred_items[j] for j in open_pred_indices]
        local = _ask_judge(judge, schema_raw, batch_gold, open_pred, criteria, retries)
        for local_gold, local_pred in local.items():
            mapping[batch_gold_indices[local_gold]] = open_pred_indices[local_pred]
            used_pred.add(open_pred_indices[local_pred])
    return mapping


def _ask_judge(
    judge: Any,
    schema_raw: dict[str, Any],
    batch_gold: list,
    open_pred: list,
    criteria: list,
    retries: int,
) -> dict[int, int]:
    last_error = "judge returned no usable mapping"
    for attempt in range(retries + 1):
        local, _ = judge.alignment(
            schema_raw, batch_gold, open_pred, criteria, refresh=attempt > 0
        )
        problem = _mapping_problem(local, len(batch_gold), len(open_pred))
        if problem is None:
            return local
        last_error = problem
    raise MatcherProtocol(f"judge matcher failed after {retries} retries: {last_error}")


def _mapping_problem(mapping: dict[int, int], gold_count: int, pred_count: int) -> str | None:
    seen_pred: set[int] = set()
    for gold_index, pred_index in mapping.items():
        if not 0 <= gold_index < gold_count:
            return f"gold index {gold_index} out of range"
        if not 0 <= pred_index < pred_count:
            return f"predicted index {pred_index} out of range"
        if pred_index in seen_pred:
            return f"predicted index {pred_index} matched twice"
        seen_pred.add(pred_index)
    return None


def evaluate_item_pair(
    item_schema: SchemaNode,
    gold_item: Any,
    pred_item: Any,
    judge: Any = None,
    config: RunConfig | None = None,
    registry: Any = None,
) -> tuple[tuple, float]:
    """Recursively score one matched pair; returns (field results, mean score).

    Skipped positions stay out of the mean; an item schema with no
    positions scores 1.0 vacuously.
    """
    from .engine import evaluate_node  # runtime import to avoid a cycle

    config = config or RunConfig()
    results = evaluate_node(
        item_schema,
        _item_state(gold_item),
        _item_state(pred_item),
        config=config,
        judge=judge,
        path="$",
        registry=registry,
    )
    scored = [r for r in results if r.action is not PairAction.SKIP]
    score = sum(r.score for r in scored) / len(scored) if scored else 1.0
    return tuple(results), score


def _item_state(item: Any):
    from .values import EXPLICIT_NULL, FieldState

    return EXPLICIT_NULL if item is None else FieldState.present(item)


def align_arrays(
    item_schema: SchemaNode,
    gold_items: list,
    pred_items: list,
    matcher: MatcherFn | None = None,
    judge: Any = None,
    config: RunConfig | None = None,
    registry: Any = None,
) -> ArrayAlignment:
    """Match, evaluate, and score two arrays.

    Items that do not conform to the item schema are excluded from
    matching but stay in the precision/recall denominators.  A judge or
    custom matcher that violates the mapping contract falls back to the
    deterministic matcher, noted in the result.
    """
    config = config or RunConfig()
    if not gold_items and not pred_items:
        return ArrayAlignment(precision=1.0, recall=1.0, f1=1.0, note="both arrays empty")
    if not gold_items or not pred_items:
        return ArrayAlignment(
            missed_gold=tuple(range(len(gold_items))),
            spurious_pred=tuple(range(len(pred_items))),
            note="one array empty",
        )

    valid_gold = [i for i, item in enumerate(gold_items)
                  if validate_instance(item_schema, item).conforming]
    valid_pred = [j for j, item in enumerate(pred_items)
                  if validate_instance(item_schema, item).conforming]
    invalid_gold = tuple(i for i in range(len(gold_items)) if i not in set(valid_gold))
    invalid_pred = tuple(j for j in range(len(pred_items)) if j not in set(valid_pred))
    gold_subset = [gold_items[i] for i in valid_gold]
    pred_subset = [pred_items[j] for j in valid_pred]

    note = ""
    judge_chosen = False
    if matcher is None:
        if config.matcher == "judge":
            judge_chosen = True
            matcher = lambda schema, gold, pred, crit: judge_match(
                schema, gold, pred, crit, judge=judge,
                batch_size=config.alignment_batch_size,
                retries=config.judge.max_retries,
            )
        else:
            matcher = lambda schema, gold, pred, crit: deterministic_match(
                schema, gold, pred, crit, floor=config.match_floor
            )
    else:
        judge_chosen = True  # externally supplied matchers get the same fallback net

    criteria = field_criteria(item_schema)
    try:
        local_mapping = matcher(item_schema, gold_subset, pred_subset, criteria)
        problem = _mapping_problem(local_mapping, len(gold_subset), len(pred_subset))
        if problem is not None:
            raise MatcherProtocol(problem)
    except MatcherProtocol as exc:
        if not judge_chosen:
            raise
        note = f"matcher fell back to deterministic similarity: {exc}"
        local_mapping = deterministic_match(
            item_schema, gold_subset, pred_subset, floor=config.match_floor
        )

    similarity_known = not judge_chosen or bool(note)
    matched: list[MatchedPair] = []
    for local_gold in sorted(local_mapping):
        local_pred = local_mapping[local_gold]
        gold_index = valid_gold[local_gold]
        pred_index = valid_pred[local_pred]
        fields, score = evaluate_item_pair(
            item_schema, gold_items[gold_index], pred_items[pred_index],
            judge=judge, config=config, registry=registry,
        )
        similarity = (
            pairwise_similarity(item_schema, gold_items[gold_index], pred_items[pred_index])
            if similarity_known
            else None
        )
        matched.append(MatchedPair(
            gold_index=gold_index,
            pred_index=pred_index,
            similarity=similarity,
            score=score,
            passed=score >= config.pass_threshold,
            fields=fields,
        ))

    matched_gold = {pair.gold_index for pair in matched}
    matched_pred = {pair.pred_index for pair in matched}
    missed = tuple(i for i in range(len(gold_items)) if i not in matched_gold)
    spurious = tuple(j for j in range(len(pred_items)) if j not in matched_pred)
    true_positives = sum(1 for pair in matched if pair.passed)
    precision = true_positives / len(pred_items)
    recall = true_positives / len(gold_items)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ArrayAlignment(
        matched=tuple(matched),
        missed_gold=missed,
        spurious_pred=spurious,
        invalid_gold=invalid_gold,
        invalid_pred=invalid_pred,
        true_positives=true_positives,
        precision=precision,
        recall=recall,
        f1=f1,
        note=note,
    )
