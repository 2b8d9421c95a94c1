"""Schema/instance profiling, tokenizers, compression ratios."""

from __future__ import annotations

import json
import math

import pytest
import synth

from xbench.complexity import (
    compression_stats,
    count_tokens,
    profile_instance,
    profile_schema,
    register_tokenizer,
    schema_profile_rows,
    token_stat_rows,
)
from xbench.errors import GoldInvalid, UnknownTokenizer, ZeroOutput
from xbench.schema import enumerate_field_positions, parse_schema


def parse(raw):
    return parse_schema(json.dumps(raw))


class TestSchemaProfile:
    def test_breadth_equals_positions_everywhere(self, domains):
        for node in domains.values():
            assert profile_schema(node).breadth == len(enumerate_field_positions(node))

    def test_domain_depths(self, domains):
        expected = {name: spec[2] for name, spec in synth.DOMAINS.items()}
        got = {name: profile_schema(node).depth for name, node in domains.items()}
        assert got == expected

    def test_empty_object_depth_one(self):
        node = parse({"type": "object", "properties": {}})
        profile = profile_schema(node)
        assert profile.depth == 1 and profile.breadth == 0

    def test_scalar_children_depth_two(self):
        node = parse({"type": "object", "properties": {"a": {"type": "string"}}})
        assert profile_schema(node).depth == 2

    def test_array_adds_level(self):
        node = parse({
            "type": "object",
            "properties": {"a": {"type": "array", "items": {"type": "string"}}},
        })
        # root(1) -> array(2) -> item scalar(3)
        assert profile_schema(node).depth == 3

    def test_choice_transparent_for_depth(self):
        flat = parse({"type": "object", "properties": {"v": {"type": "string"}}})
        chosen = parse({
            "type": "object",
            "properties": {"v": {"anyOf": [{"type": "string"}, {"type": "number"}]}},
        })
        assert profile_schema(chosen).depth == profile_schema(flat).depth

    def test_array_count(self, domains):
        node = parse({
            "type": "object",
            "properties": {
                "a": {"type": "array", "items": {"type": "string"}},
                "nested": {
                    "type": "object",
                    "properties": {"b": {"type": "array", "items": {
                        "type": "object",
                        "properties": {"c": {"type": "array", "items": {"type": "integer"}}},
                    }}},
                },
            },
        })
        assert profile_schema(node).array_count == 3

    def test_breadth_additivity(self):
        left = {"a": {"type": "string"}, "b": {"type": "integer"}}
        right = {"c": {"type": "array", "items": {"type": "string"}}}
        whole = parse({"type": "object", "properties": {**left, **right}})
        part_left = parse({"type": "object", "properties": left})
        part_right = parse({"type": "object", "properties": right})
        assert (
            profile_schema(whole).breadth
            == profile_schema(part_left).breadth + profile_schema(part_right).breadth
        )


class TestInstanceProfile:
    def test_fully_populated_gold(self, domains):
        node = domains["credit"]
        gold = synth.synth_gold(node, seed=2)
        profile = profile_instance(node, gold)
        # all 11 non-array positions present (13 minus lenders, covenants)
        assert profile.populated_fields == 11
        assert profile.gold_value_count >= profile.populated_fields
        assert profile.array_item_count >= 4  # two arrays, 2..4 items each
        assert profile.output_tokens > 0

    def test_nulls_not_populated(self):
        node = parse({
            "type": "object",
            "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
        })
        profile = profile_instance(node, {"a": "x", "b": None})
        assert profile.populated_fields == 1

    def test_array_items_expand_value_count(self):
        node = parse({
            "type": "object",
            "properties": {"a": {"type": "array", "items": {"type": "string"}}},
        })
        profile = profile_instance(node, {"a": ["x", "y", "z"]})
        assert profile.array_item_count == 3
        assert profile.gold_value_count == 3

    def test_nonconforming_gold_raises(self):
        node = parse({"type": "object", "properties": {"a": {"type": "string"}}})
        with pytest.raises(GoldInvalid):
            profile_instance(node, {"a": 42})


class TestTokenizers:
    def test_approx_is_ceil_utf8_over_4(self):
        assert count_tokens("abcd") == 1
        assert count_tokens("abcde") == 2
        assert count_tokens("") == 0
        text = "naïve"  # 6 utf-8 bytes
        assert count_tokens(text) == math.ceil(len(text.encode("utf-8")) / 4)

    def test_custom_tokenizer_registration(self):
        register_tokenizer("words-test", lambda text: len(text.split()))
        assert count_tokens("one two three", tokenizer="words-test") == 3

    def test_duplicate_registration_rejected(self):
        register_tokenizer("dup-test", len)
        with pytest.raises(ValueError):
            register_tokenizer("dup-test", len)

    def test_unknown_tokenizer(self):
        with pytest.raises(UnknownTokenizer):
            count_tokens("x", tokenizer="ghost")


class TestCompression:
    def test_mean_of_ratios_not_ratio_of_sums(self):
        stats = compression_stats([(100, 10), (100, 50)])
        assert stats.mean == pytest.approx((10 + 2) / 2)
        assert abs(stats.mean - 200 / 60) > 1.0

    def test_zero_output_is_error(self):
        with pytest.raises(ZeroOutput):
            compression_stats([(100, 0)])
        with pytest.raises(ZeroOutput):
            compression_stats([(100, -5)])

    def test_empty_pairs(self):
        stats = compression_stats([])
        assert stats.ratios == () and stats.mean == 0.0

    def test_ratios_preserved_in_order(self):
        stats = compression_stats([(10, 2), (30, 3)])
        assert stats.ratios == (5.0, 10.0)


class TestTableRows:
    def test_schema_profile_rows_layout(self, domains):
        node = domains["credit"]
        gold = synth.synth_gold(node, seed=2)
        text = schema_profile_rows([{
            "domain": "credit",
            "pages": 40,
            "tokens": 1200,
            "schema_profile": profile_schema(node),
            "instance_profile": profile_instance(node, gold),
        }])
        lines = text.strip().splitlines()
        assert lines[0] == "Domain,Pages,Keys,Depth,Tokens,Fields,Arr. Items"
        cells = lines[1].split(",")
        assert cells[0] == "credit" and cells[2] == "13" and cells[3] == "3"

    def test_token_stat_rows_layout(self):
        text = token_stat_rows([
            {"document": "d1", "pages": 12, "input_tokens": 1000, "output_tokens": 100},
        ])
        lines = text.strip().splitlines()
        assert lines[0] == "Document,Pages,Input,Output,Ratio"
        assert lines[1] == "d1,12,1000,100,10.0"
