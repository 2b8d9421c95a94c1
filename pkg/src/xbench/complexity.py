"""Structural complexity analytics for schemas and gold instances.

Breadth is the number of scoreable field positions; depth counts
nesting levels with the root at level 1.  Instance analytics count
populated fields and expand arrays item by item, and token counts feed
document-to-output compression ratios.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable

from .errors import GoldInvalid, UnknownTokenizer, ZeroOutput
from .schema import SchemaNode, enumerate_field_positions, validate_instance
from .values import read_value


@dataclass(frozen=True)
class SchemaProfile:
    breadth: int
    depth: int
    array_count: int

    def to_dict(self) -> dict[str, int]:
        return {"breadth": self.breadth, "depth": self.depth, "array_count": self.array_count}


@dataclass(frozen=True)
class InstanceProfile:
    populated_fields: int
    gold_value_count: int
    array_item_count: int
    output_tokens: int

    def to_dict(self) -> dict[str, int]:
        return {
            "populated_fields": self.populated_fields,
            "gold_value_count": self.gold_value_count,
            "array_item_count": self.array_item_count,
            "output_tokens": self.output_tokens,
        }


@dataclass(frozen=True)
class CompressionStats:
    ratios: tuple
    mean: float

    def to_dict(self) -> dict[str, Any]:
        return {"ratios": list(self.ratios), "mean": self.mean}


def _depth(node: SchemaNode) -> int:
    if node.kind == "primitive":
        return 1
    if node.kind == "object":
        if not node.properties:
            return 1
        return 1 + max(_depth(child) for child in node.properties.values())
    if node.kind == "array":
        assert node.items is not None
        return 1 + _depth(node.items)
    # choice nodes are transparent: they add no level of their own
    if not node.branches:
        return 1
    return max(_depth(branch) for branch in node.branches)


def _count_arrays(node: SchemaNode) -> int:
    if node.kind == "array":
        assert node.items is not None
        return 1 + _count_arrays(node.items)
    if node.kind == "object":
        return sum(_count_arrays(child) for child in node.properties.values())
    if node.kind == "choice":
        return sum(_count_arrays(branch) for branch in node.branches)
    return 0


def profile_schema(ast: SchemaNode) -> SchemaProfile:
    """Breadth, depth, and array count of one schema."""
    return SchemaProfile(
        breadth=len(enumerate_field_positions(ast)),
        depth=_depth(ast),
        array_count=_count_arrays(ast),
    )


def _count_values(value: Any) -> tuple[int, int]:
    """(non-null leaf count, array item count), arrays expanded."""
    if value is None:
        return 0, 0
    if isinstance(value, dict):
        leaves = items = 0
        for child in value.values():
            l, i = _count_values(child)
            leaves += l
            items += i
        return leaves, items
    if isinstance(value, list):
        leaves, items = 0, len(value)
        for child in value:
            l, i = _count_values(child)
            leaves += l
            items += i
        return leaves, items
    return 1, 0


def profile_instance(schema: SchemaNode, gold: Any, tokenizer: str = "approx") -> InstanceProfile:
    """Population and size analytics for one gold instance.

    Nonconforming gold raises GoldInvalid; analytics on bad gold would
    silently misstate the benchmark.
    """
    validity = validate_instance(schema, gold)
    if not validity.conforming:
        first = validity.violations[0]
        raise GoldInvalid(f"gold does not conform: {first.path}: {first.message}")
    populated = 0
    for position in enumerate_field_positions(schema):
        if position.node.kind == "array":
            continue
        if read_value(gold, position.path).is_present:
            populated += 1
    leaves, items = _count_values(gold)
    rendered = json.dumps(gold, ensure_ascii=False)
    return InstanceProfile(
        populated_fields=populated,
        gold_value_count=leaves,
        array_item_count=items,
        output_tokens=count_tokens(rendered, tokenizer),
    )


# --- tokenizers ---------------------------------------------------------------

def _approx_tokens(text: str) -> int:
    # rough LLM-tokenizer stand-in: one token per 4 bytes of UTF-8
    return math.ceil(len(text.encode("utf-8")) / 4)


_TOKENIZERS: dict[str, Callable[[str], int]] = {"approx": _approx_tokens}


def register_tokenizer(name: str, fn: Callable[[str], int]) -> None:
    if name in _TOKENIZERS:
        raise ValueError(f"tokenizer {name!r} is already registered")
    _TOKENIZERS[name] = fn


def count_tokens(text: str, tokenizer: str = "approx") -> int:
    try:
        fn = _TOKENIZERS[tokenizer]
    except KeyError:
        raise UnknownTokenizer(f"no tokenizer registered under {tokenizer!r}") from None
    return fn(text)


def compression_stats(pairs: list[tuple[int, int]]) -> CompressionStats:
    """Per-document input/output token ratios and their mean.

    The mean is the mean of per-document ratios, not the ratio of the
    summed tokens; a zero output token count is an error, not infinity.
    """
    if not pairs:
        return CompressionStats((), 0.0)
    ratios = []
    for input_tokens, output_tokens in pairs:
        if output_tokens <= 0:
            raise ZeroOutput(f"cannot form a ratio against {output_tokens} output tokens")
        ratios.append(input_tokens / output_tokens)
    return CompressionStats(tuple(ratios), sum(ratios) / len(ratios))


# --- table emission -------------------------------------------------------------

def schema_profile_rows(entries: list[dict[str, Any]]) -> str:
    """CSV of per-domain structure stats.  Each entry carries domain,
    pages, tokens, plus a SchemaProfile and an InstanceProfile."""
    lines = ["Domain,Pages,Keys,Depth,Tokens,Fields,Arr. Items"]
    for entry in entries:
        schema_profile: SchemaProfile = entry["schema_profile"]
        instance_profile: InstanceProfile = entry["instance_profile"]
        lines.append(
            f"{entry['domain']},{entry.get('pages', '')},{schema_profile.breadth},"
            f"{schema_profile.depth},{entry.get('tokens', '')},"
            f"{instance_profile.gold_value_count},{instance_profile.array_item_count}"
        )
    return "\n".join(lines) + "\n"


def token_stat_rows(entries: list[dict[str, Any]]) -> str:
    """CSV of per-document token counts and compression ratios."""
    lines = ["Document,Pages,Input,Output,Ratio"]
    for entry in entries:
        ratio = compression_stats([(entry["input_tokens"], entry["output_tokens"])]).mean
        lines.append(
            f"{entry['document']},{entry.get('pages', '')},{entry['input_tokens']},"
            f"{entry['output_tokens']},{ratio:.1f}"
        )
    return "\n".join(lines) + "\n"
