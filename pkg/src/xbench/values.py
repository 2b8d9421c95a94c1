"""Tri-state field values and the gold/predicted pairing policy.

A field position read from an instance is in one of three states:
present with a value, explicitly null, or missing (the key is absent or
an ancestor is absent).  JSON null is deliberate ("I looked, there is
nothing") while a missing key is silence; the two are never conflated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .errors import BadConfig

PRESENT = "present"
NULL = "null"
MISSING = "missing"

GOLD_MISSING_POLICIES = ("hallucination", "skip")


class PairAction(Enum):
    """What to do with a (gold, predicted) state pair."""

    COMPARE = "compare"
    AUTO_PASS = "auto_pass"
    OMISSION = "omission"
    HALLUCINATION = "hallucination"
    SKIP = "skip"


@dataclass(frozen=True)
class FieldState:
    """One field position as read from one instance.

    type_clash marks a path that tried to index into a non-object; the
    field is still simply missing, but the flag lets callers report the
    structural violation instead of a silent omission.
    """

    tag: str
    value: Any = None
    type_clash: bool = False

    @staticmethod
    def present(value: Any) -> "FieldState":
        return FieldState(PRESENT, value)

    @property
    def is_present(self) -> bool:
        return self.tag == PRESENT

    @property
    def is_null(self) -> bool:
        return self.tag == NULL

    @property
    def is_missing(self) -> bool:
        return self.tag == MISSING


EXPLICIT_NULL = FieldState(NULL)
ABSENT = FieldState(MISSING)


def read_value(instance: Any, path: tuple[str, ...]) -> FieldState:
    """Read the field at path from a decoded JSON instance.

    Total: never raises.  A null anywhere along the path makes deeper
    fields missing; only a null at the path itself is ExplicitNull.
    """
    node = instance
    for segment in path:
        if node is None:
            return ABSENT
        if not isinstance(node, dict):
            return FieldState(MISSING, type_clash=True)
        if segment not in node:
            return ABSENT
        node = node[segment]
    if node is None:
        return EXPLICIT_NULL
    return FieldState.present(node)


def classify_pair(
    gold: FieldState,
    predicted: FieldState,
    gold_missing_policy: str = "hallucination",
) -> PairAction:
    """Map a (gold, predicted) state pair to an action.

    The full matrix:

      gold \\ pred   Present        Null       Missing
      Present        Compare        Omission   Omission
      Null           Hallucination  AutoPass   AutoPass
      Missing        policy(*)      AutoPass   AutoPass

    (*) gold-missing with a predicted value is Hallucination by default;
    the "skip" policy excludes the position from scoring instead.
    """
    if gold_missing_policy not in GOLD_MISSING_POLICIES:
        raise BadConfig(f"unknown gold_missing_policy {gold_missing_policy!r}")
    if gold.is_present:
        return PairAction.COMPARE if predicted.is_present else PairAction.OMISSION
    if predicted.is_present:
        if gold.is_missing and gold_missing_policy == "skip":
            return PairAction.SKIP
        return PairAction.HALLUCINATION
    return PairAction.AUTO_PASS
