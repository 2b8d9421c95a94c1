"""Schema parsing, linting, position enumeration, instance conformance."""

from __future__ import annotations

import json

import pytest
import synth

from xbench.errors import (
    BadConfig,
    CyclicReference,
    MalformedJson,
    UnsupportedConstruct,
)
from xbench.schema import (
    PRESETS,
    enumerate_field_positions,
    parse_schema,
    serialize_schema,
    validate_instance,
)


def parse(raw) -> object:
    return parse_schema(json.dumps(raw))


FLAT = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "count": {"type": "integer"},
        "score": {"type": "number"},
        "active": {"type": "boolean"},
    },
    "required": ["name"],
}


def test_parse_flat_object():
    node = parse(FLAT)
    assert node.kind == "object"
    assert set(node.properties) == {"name", "count", "score", "active"}
    assert node.required == frozenset({"name"})


def test_malformed_json_rejected():
    with pytest.raises(MalformedJson):
        parse_schema("{not json")


def test_non_object_schema_text_rejected():
    with pytest.raises(UnsupportedConstruct):
        parse_schema("[]")
    with pytest.raises(UnsupportedConstruct):
        parse_schema('"string"')


PRESET_TYPES = {
    "string_exact": "string",
    "string_case_insensitive": "string",
    "string_fuzzy": "string",
    "string_semantic": "string",
    "number_exact": "number",
    "number_tolerance": "number",
    "integer_exact": "integer",
    "boolean_exact": "boolean",
}


class TestPresets:
    def test_every_preset_has_matching_id(self):
        assert set(PRESET_TYPES) | {"array_llm"} == set(PRESETS)
        for name, declared in PRESET_TYPES.items():
            node = parse({
                "type": "object",
                "properties": {"f": {"type": declared, "evaluation_config": name}},
            })
            assert node.properties["f"].metric_spec.metric_id == name
        node = parse({
            "type": "object",
            "properties": {"f": {
                "type": "array", "items": {"type": "string"}, "evaluation_config": "array_llm",
            }},
        })
        assert node.properties["f"].metric_spec.metric_id == "array_llm"

    def test_type_defaults(self):
        node = parse(FLAT)
        assert node.properties["name"].metric_spec.metric_id == "string_exact"
        assert node.properties["count"].metric_spec.metric_id == "integer_exact"
        assert node.properties["score"].metric_spec.metric_id == "number_exact"
        assert node.properties["active"].metric_spec.metric_id == "boolean_exact"

    def test_unknown_preset_rejected(self):
        with pytest.raises(BadConfig):
            parse({"type": "object", "properties": {"f": {"type": "string", "evaluation_config": "nope"}}})

    def test_explicit_params_tracked(self):
        node = parse({
            "type": "object",
            "properties": {"f": {
                "type": "string",
                "evaluation_config": {"metric_id": "string_fuzzy", "params": {"similarity_threshold": 0.5}},
            }},
        })
        spec = node.properties["f"].metric_spec
        assert spec.params["similarity_threshold"] == 0.5
        assert "similarity_threshold" in spec.explicit

    def test_param_precedence(self):
        explicit = parse({
            "type": "object",
            "properties": {"f": {
                "type": "string",
                "evaluation_config": {"metric_id": "string_fuzzy", "params": {"similarity_threshold": 0.5}},
            }},
        }).properties["f"].metric_spec
        implicit = parse({
            "type": "object",
            "properties": {"f": {"type": "string", "evaluation_config": "string_fuzzy"}},
        }).properties["f"].metric_spec
        # explicit beats the run value; preset default loses to the run value
        assert explicit.param("similarity_threshold", run_value=0.9) == 0.5
        assert implicit.param("similarity_threshold", run_value=0.9) == 0.9
        assert implicit.param("similarity_threshold", run_value=None) == 0.8

    def test_out_of_range_threshold_rejected(self):
        with pytest.raises(BadConfig):
            parse({"type": "object", "properties": {"f": {
                "type": "string",
                "evaluation_config": {"metric_id": "string_fuzzy", "params": {"similarity_threshold": 1.5}},
            }}})

    def test_unknown_param_key_rejected(self):
        with pytest.raises(BadConfig):
            parse({"type": "object", "properties": {"f": {
                "type": "string",
                "evaluation_config": {"metric_id": "string_fuzzy", "params": {"threshold": 0.5}},
            }}})

    def test_negative_tolerance_rejected(self):
        with pytest.raises(BadConfig):
            parse({"type": "object", "properties": {"f": {
                "type": "number",
                "evaluation_config": {"metric_id": "number_tolerance", "params": {"tolerance": -0.1}},
            }}})


class TestRefs:
    def test_defs_inlined(self):
        node = parse({
            "type": "object",
            "$defs": {"person": {"type": "object", "properties": {"name": {"type": "string"}}}},
            "properties": {"author": {"$ref": "#/$defs/person"}},
        })
        assert node.properties["author"].kind == "object"
        assert "name" in node.properties["author"].properties

    def test_alternate_containers(self):
        for container in ("definitions", "defs"):
            node = parse({
                "type": "object",
                container: {"tag": {"type": "string"}},
                "properties": {"t": {"$ref": f"#/{container}/tag"}},
            })
            assert node.properties["t"].primitive_kind == "string"

    def test_site_keys_overlay_target(self):
        node = parse({
            "type": "object",
            "$defs": {"s": {"type": "string"}},
            "properties": {"t": {"$ref": "#/$defs/s", "evaluation_config": "string_fuzzy"}},
        })
        assert node.properties["t"].metric_spec.metric_id == "string_fuzzy"

    def test_cycle_detected(self):
        with pytest.raises(CyclicReference):
            parse({
                "type": "object",
                "$defs": {"a": {"$ref": "#/$defs/b"}, "b": {"$ref": "#/$defs/a"}},
                "properties": {"x": {"$ref": "#/$defs/a"}},
            })

    def test_self_cycle_detected(self):
        with pytest.raises(CyclicReference):
            parse({
                "type": "object",
                "$defs": {"node": {
                    "type": "object",
                    "properties": {"child": {"$ref": "#/$defs/node"}},
                }},
                "properties": {"root": {"$ref": "#/$defs/node"}},
            })

    def test_dangling_ref_rejected(self):
        with pytest.raises(UnsupportedConstruct):
            parse({"type": "object", "properties": {"x": {"$ref": "#/$defs/ghost"}}})

    def test_ref_order_independence(self):
        base = {
            "$defs": {"leaf": {"type": "string"}},
            "type": "object",
            "properties": {
                "a": {"$ref": "#/$defs/leaf"},
                "b": {"$ref": "#/$defs/leaf"},
            },
        }
        reordered = {
            "type": "object",
            "properties": {
                "b": {"$ref": "#/$defs/leaf"},
                "a": {"$ref": "#/$defs/leaf"},
            },
            "$defs": {"leaf": {"type": "string"}},
        }
        left = [p.dotted for p in enumerate_field_positions(parse(base))]
        right = [p.dotted for p in enumerate_field_positions(parse(reordered))]
        assert sorted(left) == sorted(right)


class TestNullable:
    def test_type_list_with_null(self):
        node = parse({"type": "object", "properties": {"f": {"type": ["string", "null"]}}})
        assert node.properties["f"].primitive_kind == "string"

    def test_type_list_without_null_rejected(self):
        with pytest.raises(UnsupportedConstruct):
            parse({"type": "object", "properties": {"f": {"type": ["string", "integer"]}}})


class TestChoice:
    def test_anyof_builds_choice(self):
        node = parse({
            "type": "object",
            "properties": {"v": {"anyOf": [{"type": "string"}, {"type": "number"}]}},
        })
        choice = node.properties["v"]
        assert choice.kind == "choice"
        assert len(choice.branches) == 2

    def test_choice_counts_one_position(self):
        node = parse({
            "type": "object",
            "properties": {
                "v": {"anyOf": [
                    {"type": "object", "properties": {"a": {"type": "string"}, "b": {"type": "string"}}},
                    {"type": "string"},
                ]},
            },
        })
        assert len(enumerate_field_positions(node)) == 1


class TestLint:
    def test_array_requires_items(self):
        with pytest.raises(UnsupportedConstruct):
            parse({"type": "object", "properties": {"a": {"type": "array"}}})

    def test_object_rejects_evaluation_config(self):
        with pytest.raises(BadConfig):
            parse({"type": "object", "properties": {"o": {
                "type": "object", "properties": {}, "evaluation_config": "string_exact",
            }}})

    def test_unknown_keyword_rejected(self):
        with pytest.raises(UnsupportedConstruct):
            parse({"type": "object", "properties": {"f": {"type": "string", "pattern": "x"}}})

    def test_unsupported_construct_carries_pointer(self):
        with pytest.raises(UnsupportedConstruct) as err:
            parse({"type": "object", "properties": {"f": {"type": "string", "pattern": "x"}}})
        assert "properties/f" in str(err.value)

    def test_integer_enum_supported(self):
        node = parse({"type": "object", "properties": {"f": {"type": "integer", "enum": [1, 2]}}})
        assert validate_instance(node, {"f": 2}).conforming
        assert not validate_instance(node, {"f": 3}).conforming


class TestPositions:
    def test_arrays_count_one(self):
        node = parse({
            "type": "object",
            "properties": {
                "items": {"type": "array", "items": {
                    "type": "object",
                    "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
                }},
                "top": {"type": "string"},
            },
        })
        dotted = [p.dotted for p in enumerate_field_positions(node)]
        assert sorted(dotted) == ["items", "top"]

    def test_additivity_over_disjoint_properties(self, domains):
        for node in domains.values():
            total = len(enumerate_field_positions(node))
            parts = sum(
                len(enumerate_field_positions(child)) if child.kind == "object" else 1
                for child in node.properties.values()
            )
            assert total == parts

    def test_domain_breadths(self, domains):
        expected = {name: spec[1] for name, spec in synth.DOMAINS.items()}
        got = {name: len(enumerate_field_positions(node)) for name, node in domains.items()}
        assert got == expected


class TestRoundTrip:
    def test_serialize_parse_idempotent(self, domains):
        for node in domains.values():
            text = serialize_schema(node)
            again = parse_schema(text)
            assert serialize_schema(again) == text

    def test_round_trip_preserves_positions(self, domains):
        for node in domains.values():
            again = parse_schema(serialize_schema(node))
            assert [p.dotted for p in enumerate_field_positions(again)] == [
                p.dotted for p in enumerate_field_positions(node)
            ]


class TestConformance:
    def test_gold_conforms(self, domains):
        for name, node in domains.items():
            gold = synth.synth_gold(node, seed=11)
            assert validate_instance(node, gold).conforming

    def test_null_conforms_anywhere(self):
        node = parse(FLAT)
        assert validate_instance(node, {"name": None, "count": None}).conforming

    def test_required_key_missing_violates(self):
        node = parse(FLAT)
        report = validate_instance(node, {"count": 2})
        assert not report.conforming
        assert any(v.kind == "required" for v in report.violations)

    def test_required_key_null_still_counts_as_present(self):
        node = parse(FLAT)
        assert validate_instance(node, {"name": None}).conforming

    def test_integer_accepts_integral_float(self):
        node = parse(FLAT)
        assert validate_instance(node, {"name": "x", "count": 3.0}).conforming
        assert not validate_instance(node, {"name": "x", "count": 3.5}).conforming

    def test_boolean_is_not_integer(self):
        node = parse(FLAT)
        assert not validate_instance(node, {"name": "x", "count": True}).conforming

    def test_enum_enforced(self):
        node = parse({"type": "object", "properties": {"c": {"type": "string", "enum": ["a", "b"]}}})
        assert validate_instance(node, {"c": "a"}).conforming
        assert not validate_instance(node, {"c": "z"}).conforming

    def test_bounds_enforced(self):
        node = parse({"type": "object", "properties": {"n": {"type": "integer", "minimum": 1, "maximum": 5}}})
        assert validate_instance(node, {"n": 5}).conforming
        assert not validate_instance(node, {"n": 0}).conforming
        assert not validate_instance(node, {"n": 6}).conforming

    def test_extra_keys_allowed(self):
        node = parse(FLAT)
        assert validate_instance(node, {"name": "x", "extra": 1}).conforming

    def test_choice_any_branch(self):
        node = parse({
            "type": "object",
            "properties": {"v": {"anyOf": [{"type": "string"}, {"type": "number"}]}},
        })
        assert validate_instance(node, {"v": "s"}).conforming
        assert validate_instance(node, {"v": 1.5}).conforming
        assert not validate_instance(node, {"v": [1]}).conforming

    def test_array_item_violations_carry_index(self):
        node = parse({"type": "object", "properties": {"a": {"type": "array", "items": {"type": "string"}}}})
        report = validate_instance(node, {"a": ["ok", 3]})
        assert not report.conforming
        assert any("[1]" in v.path for v in report.violations)
