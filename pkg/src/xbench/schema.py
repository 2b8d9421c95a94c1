"""JSON Schema parsing into a typed, metric-annotated AST.

Supported subset: type, properties, required, items, enum, minimum,
maximum, anyOf, internal $ref, plus the extension keywords
evaluation_config and additional_instructions.  References are inlined
at parse time, so the resulting tree is self-contained; anything
outside the subset fails loudly with a JSON-pointer location rather
than being silently ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import (
    BadConfig,
    CyclicReference,
    MalformedJson,
    UnsupportedConstruct,
)

PRIMITIVE_TYPES = ("string", "number", "integer", "boolean")

# Presets: name -> (metric_id, default params).  Preset names double as
# metric ids so a bare string annotation and the expanded object form
# resolve identically.
PRESETS: dict[str, tuple[str, dict[str, Any]]] = {
    "string_exact": ("string_exact", {}),
    "string_case_insensitive": ("string_case_insensitive", {}),
    "string_fuzzy": ("string_fuzzy", {"similarity_threshold": 0.8}),
    "string_semantic": ("string_semantic", {"pass_threshold": 0.7}),
    "number_exact": ("number_exact", {}),
    "number_tolerance": ("number_tolerance", {"tolerance": 0.001}),
    "integer_exact": ("integer_exact", {}),
    "boolean_exact": ("boolean_exact", {}),
    "array_llm": ("array_llm", {"pass_threshold": 0.7}),
}

# Metric applied when a node carries no evaluation_config.
TYPE_DEFAULT_METRICS = {
    "string": "string_exact",
    "number": "number_exact",
    "integer": "integer_exact",
    "boolean": "boolean_exact",
    "array": "array_llm",
}

_SUPPORTED_KEYS = {
    "type",
    "properties",
    "required",
    "items",
    "enum",
    "minimum",
    "maximum",
    "anyOf",
    "$ref",
    "evaluation_config",
    "additional_instructions",
}
# Tolerated as reference containers at any level; never nodes themselves.
_DEF_CONTAINERS = {"$defs", "definitions", "defs"}

_THRESHOLD_PARAMS = ("pass_threshold", "similarity_threshold")


@dataclass(frozen=True)
class MetricSpec:
    """A resolved metric annotation: id plus fully-defaulted params.

    explicit records which param keys the schema author wrote out, so
    downstream code can let schema-level values win over run-level
    overrides without guessing.  It is resolution bookkeeping and takes
    no part in MetricSpec equality.
    """

    metric_id: str
    params: dict[str, Any] = field(default_factory=dict)
    explicit: frozenset = field(default_factory=frozenset, compare=False)
    additional_instructions: str | None = None

    def param(self, key: str, run_value: Any = None) -> Any:
        """Effective value: explicit schema param > run value > preset default."""
        if key in self.explicit:
            return self.params[key]
        if run_value is not None:
            return run_value
        return self.params.get(key)


@dataclass(frozen=True)
class SchemaNode:
    """One node of the parsed schema tree."""

    kind: str  # "object" | "array" | "primitive" | "choice"
    primitive_kind: str | None = None
    properties: dict[str, "SchemaNode"] = field(default_factory=dict)
    required: frozenset = field(default_factory=frozenset)
    items: "SchemaNode | None" = None
    branches: tuple = ()
    enum: tuple | None = None
    minimum: float | None = None
    maximum: float | None = None
    metric_spec: MetricSpec | None = None
    additional_instructions: str | None = None

    def to_raw(self) -> dict[str, Any]:
        """Rebuild the JSON-object form of this node."""
        raw: dict[str, Any] = {}
        if self.kind == "object":
            raw["type"] = "object"
            raw["properties"] = {name: child.to_raw() for name, child in self.properties.items()}
            if self.required:
                raw["required"] = sorted(self.required)
        elif self.kind == "array":
            raw["type"] = "array"
            raw["items"] = self.items.to_raw() if self.items is not None else {}
        elif self.kind == "choice":
            raw["anyOf"] = [branch.to_raw() for branch in self.branches]
        else:
            raw["type"] = self.primitive_kind
            if self.enum is not None:
                raw["enum"] = list(self.enum)
            if self.minimum is not None:
                raw["minimum"] = self.minimum
            if self.maximum is not None:
                raw["maximum"] = self.maximum
        if self.metric_spec is not None:
            raw["evaluation_config"] = {
                "metric_id": self.metric_spec.metric_id,
                "params": dict(self.metric_spec.params),
            }
        if self.additional_instructions is not None:
            raw["additional_instructions"] = self.additional_instructions
        return raw


@dataclass(frozen=True)
class FieldPosition:
    """A scoreable location: a primitive leaf, an array node, or a choice."""

    path: tuple
    node: SchemaNode

    @property
    def dotted(self) -> str:
        return ".".join(self.path) if self.path else "$"

    @property
    def is_array(self) -> bool:
        return self.node.kind == "array"


@dataclass(frozen=True)
class Violation:
    path: str
    kind: str  # "type" | "enum" | "bounds" | "required" | "branch"
    message: str


@dataclass(frozen=True)
class ValidityReport:
    conforming: bool
    violations: tuple = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "conforming": self.conforming,
            "violations": [
                {"path": v.path, "kind": v.kind, "message": v.message}
                for v in self.violations
            ],
        }


def parse_schema(schema_text: str, known_metrics: Iterable[str] | None = None) -> SchemaNode:
    """Parse schema text into an immutable AST with metrics resolved.

    known_metrics widens the set of accepted metric ids beyond the
    built-in presets (for plugin metrics registered by the caller).
    """
    try:
        raw = json.loads(schema_text)
    except ValueError as exc:
        raise MalformedJson(f"schema is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UnsupportedConstruct("schema root must be a JSON object", "#")
    known = set(known_metrics) if known_metrics is not None else set(PRESETS)
    return _build(raw, raw, "#", (), known)


def _normalize_type(raw: dict[str, Any], pointer: str) -> str | None:
    declared = raw.get("type")
    if declared is None:
        return None
    if isinstance(declared, list):
        # ["string", "null"] style nullability; tri-state semantics already
        # treat null as a first-class state, so the null member is dropped.
        concrete = [t for t in declared if t != "null"]
        if len(concrete) != 1:
            raise UnsupportedConstruct(
                f"type list must name exactly one non-null type, got {declared!r}", pointer
            )
        declared = concrete[0]
    if not isinstance(declared, str):
        raise UnsupportedConstruct(f"type must be a string, got {declared!r}", pointer)
    if declared not in PRIMITIVE_TYPES and declared not in ("object", "array"):
        raise UnsupportedConstruct(f"unsupported type {declared!r}", pointer)
    return declared


def _resolve_pointer(root: dict[str, Any], ref: str, pointer: str) -> dict[str, Any]:
    if not isinstance(ref, str) or not ref.startswith("#"):
        raise UnsupportedConstruct(f"only internal $ref is supported, got {ref!r}", pointer)
    target: Any = root
    for token in [t for t in ref[1:].split("/") if t]:
        token = token.replace("~1", "/").replace("~0", "~")
        if not isinstance(target, dict) or token not in target:
            raise UnsupportedConstruct(f"$ref {ref!r} does not resolve", pointer)
        target = target[token]
    if not isinstance(target, dict):
        raise UnsupportedConstruct(f"$ref {ref!r} must point at a schema object", pointer)
    return target


def _build(
    raw: Any,
    root: dict[str, Any],
    pointer: str,
    ref_stack: tuple,
    known: set,
) -> SchemaNode:
    if not isinstance(raw, dict):
        raise UnsupportedConstruct("expected a schema object", pointer)
    for key in raw:
        if key not in _SUPPORTED_KEYS and key not in _DEF_CONTAINERS:
            raise UnsupportedConstruct(f"unsupported keyword {key!r}", pointer)

    if "$ref" in raw:
        ref = raw["$ref"]
        if ref in ref_stack:
            chain = " -> ".join(ref_stack + (ref,))
            raise CyclicReference(f"cyclic $ref chain: {chain}")
        target = _resolve_pointer(root, ref, pointer)
        # Keys beside $ref at the use site (annotations, usually) overlay
        # the definition.
        site = {k: v for k, v in raw.items() if k != "$ref"}
        merged = {**target, **site}
        return _build(merged, root, pointer, ref_stack + (ref,), known)

    instructions = raw.get("additional_instructions")
    if instructions is not None and not isinstance(instructions, str):
        raise BadConfig(f"{pointer}: additional_instructions must be a string")

    if "anyOf" in raw:
        if "type" in raw:
            raise UnsupportedConstruct("anyOf may not be combined with type", pointer)
        branches_raw = raw["anyOf"]
        if not isinstance(branches_raw, list) or not branches_raw:
            raise UnsupportedConstruct("anyOf must be a non-empty array", pointer)
        branches = tuple(
            _build(branch, root, f"{pointer}/anyOf/{i}", ref_stack, known)
            for i, branch in enumerate(branches_raw)
        )
        spec = resolve_eval_config(raw, known) if "evaluation_config" in raw else None
        return SchemaNode(
            kind="choice",
            branches=branches,
            metric_spec=spec,
            additional_instructions=instructions,
        )

    declared = _normalize_type(raw, pointer)
    if declared is None:
        raise UnsupportedConstruct("node declares neither type nor anyOf", pointer)

    if declared == "object":
        for key in ("enum", "minimum", "maximum", "items"):
            if key in raw:
                raise UnsupportedConstruct(f"{key} is not supported on object nodes", pointer)
        if "evaluation_config" in raw:
            raise BadConfig(f"{pointer}: object nodes do not take evaluation_config")
        props_raw = raw.get("properties", {})
        if not isinstance(props_raw, dict):
            raise UnsupportedConstruct("properties must be an object", pointer)
        properties = {
            name: _build(child, root, f"{pointer}/properties/{name}", ref_stack, known)
            for name, child in props_raw.items()
        }
        required_raw = raw.get("required", [])
        if not isinstance(required_raw, list) or not all(isinstance(r, str) for r in required_raw):
            raise UnsupportedConstruct("required must be an array of strings", pointer)
        return SchemaNode(
            kind="object",
            properties=properties,
            required=frozenset(required_raw),
            additional_instructions=instructions,
        )

    if declared == "array":
        for key in ("enum", "minimum", "maximum", "properties", "required"):
            if key in raw:
                raise UnsupportedConstruct(f"{key} is not supported on array nodes", pointer)
        if "items" not in raw:
            raise UnsupportedConstruct("array nodes require items", pointer)
        items = _build(raw["items"], root, f"{pointer}/items", ref_stack, known)
        return SchemaNode(
            kind="array",
            items=items,
            metric_spec=resolve_eval_config(raw, known),
            additional_instructions=instructions,
        )

    # primitive
    for key in ("properties", "required", "items"):
        if key in raw:
            raise UnsupportedConstruct(f"{key} is not supported on {declared} nodes", pointer)
    enum_raw = raw.get("enum")
    if enum_raw is not None:
        if not isinstance(enum_raw, list) or not enum_raw:
            raise UnsupportedConstruct("enum must be a non-empty array", pointer)
        enum = tuple(enum_raw)
    else:
        enum = None
    minimum = raw.get("minimum")
    maximum = raw.get("maximum")
    for name, bound in (("minimum", minimum), ("maximum", maximum)):
        if bound is not None:
            if declared not in ("number", "integer"):
                raise UnsupportedConstruct(f"{name} requires a numeric type", pointer)
            if not isinstance(bound, (int, float)) or isinstance(bound, bool):
                raise UnsupportedConstruct(f"{name} must be a number", pointer)
    return SchemaNode(
        kind="primitive",
        primitive_kind=declared,
        enum=enum,
        minimum=minimum,
        maximum=maximum,
        metric_spec=resolve_eval_config(raw, known),
        additional_instructions=instructions,
    )


def _validate_params(metric_id: str, params: dict[str, Any]) -> None:
    if metric_id in PRESETS:
        allowed = set(PRESETS[metric_id][1])
        unknown = set(params) - allowed
        if unknown:
            raise BadConfig(
                f"metric {metric_id!r} does not take params {sorted(unknown)}"
                + (f"; it takes {sorted(allowed)}" if allowed else "")
            )
    for key in _THRESHOLD_PARAMS:
        if key in params:
            value = params[key]
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0.0 <= value <= 1.0:
                raise BadConfig(f"{key} must be a number in [0, 1], got {value!r}")
    if "tolerance" in params:
        value = params["tolerance"]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise BadConfig(f"tolerance must be a non-negative number, got {value!r}")


def resolve_eval_config(
    raw_node: dict[str, Any],
    known_metrics: Iterable[str] | None = None,
) -> MetricSpec | None:
    """Resolve a node's evaluation_config into a MetricSpec.

    Accepts a bare preset name or {"metric_id": ..., "params": {...}}.
    Absent config falls back to the node type's default metric; choice
    nodes have no type default and return None.
    """
    known = set(known_metrics) if known_metrics is not None else set(PRESETS)
    cfg = raw_node.get("evaluation_config")
    instructions = raw_node.get("additional_instructions")
    if instructions is not None and not isinstance(instructions, str):
        raise BadConfig("additional_instructions must be a string")

    if cfg is None:
        declared = raw_node.get("type")
        if isinstance(declared, list):
            concrete = [t for t in declared if t != "null"]
            declared = concrete[0] if len(concrete) == 1 else None
        if "anyOf" in raw_node or declared is None:
            return None
        metric_id = TYPE_DEFAULT_METRICS.get(declared)
        if metric_id is None:
            return None
        _, defaults = PRESETS[metric_id]
        return MetricSpec(metric_id, dict(defaults), frozenset(), instructions)

    if isinstance(cfg, str):
        if cfg not in PRESETS:
            raise BadConfig(f"unknown evaluation_config preset {cfg!r}")
        metric_id, defaults = PRESETS[cfg]
        return MetricSpec(metric_id, dict(defaults), frozenset(), instructions)

    if isinstance(cfg, dict):
        unknown = set(cfg) - {"metric_id", "params"}
        if unknown:
            raise BadConfig(f"unknown evaluation_config keys: {sorted(unknown)}")
        metric_id = cfg.get("metric_id")
        if not isinstance(metric_id, str):
            raise BadConfig("evaluation_config objects require a string metric_id")
        if metric_id not in known:
            raise BadConfig(f"unknown metric_id {metric_id!r}")
        params_raw = cfg.get("params", {})
        if not isinstance(params_raw, dict):
            raise BadConfig("params must be an object")
        defaults = dict(PRESETS[metric_id][1]) if metric_id in PRESETS else {}
        params = {**defaults, **params_raw}
        _validate_params(metric_id, params)
        return MetricSpec(metric_id, params, frozenset(params_raw), instructions)

    raise BadConfig(f"evaluation_config must be a preset name or object, got {cfg!r}")


def enumerate_field_positions(ast: SchemaNode) -> list[FieldPosition]:
    """All scoreable positions in deterministic document order.

    Primitive leaves and choice nodes reachable without crossing an
    array each count once; an array node counts once as a whole (its
    items are scored inside the array metric, not as positions).
    """
    out: list[FieldPosition] = []

    def walk(node: SchemaNode, path: tuple) -> None:
        if node.kind == "object":
            for name, child in node.properties.items():
                walk(child, path + (name,))
        else:
            out.append(FieldPosition(path, node))

    walk(ast, ())
    return out


def validate_instance(ast: SchemaNode, instance: Any) -> ValidityReport:
    """Structural conformance of a decoded instance against the AST.

    null conforms at any node: presence semantics are owned by the
    tri-state layer, not the type check.  Extra object keys are allowed.
    """
    violations: list[Violation] = []
    _check(ast, instance, "$", violations)
    return ValidityReport(not violations, tuple(violations))


def _check(node: SchemaNode, value: Any, path: str, out: list[Violation]) -> None:
    if value is None:
        return
    if node.kind == "choice":
        for branch in node.branches:
            if validate_instance(branch, value).conforming:
                return
        out.append(Violation(path, "branch", "value conforms to no anyOf branch"))
        return
    if node.kind == "object":
        if not isinstance(value, dict):
            out.append(Violation(path, "type", f"expected object, got {_type_name(value)}"))
            return
        for name in sorted(node.required):
            if name not in value:
                out.append(Violation(f"{path}.{name}", "required", "required property is absent"))
        for name, child in node.properties.items():
            if name in value:
                _check(child, value[name], f"{path}.{name}", out)
        return
    if node.kind == "array":
        if not isinstance(value, list):
            out.append(Violation(path, "type", f"expected array, got {_type_name(value)}"))
            return
        assert node.items is not None
        for i, item in enumerate(value):
            _check(node.items, item, f"{path}[{i}]", out)
        return

    kind = node.primitive_kind
    if kind == "string":
        ok = isinstance(value, str)
    elif kind == "boolean":
        ok = isinstance(value, bool)
    elif kind == "integer":
        ok = (isinstance(value, int) and not isinstance(value, bool)) or (
            isinstance(value, float) and value.is_integer()
        )
    else:  # number
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok:
        out.append(Violation(path, "type", f"expected {kind}, got {_type_name(value)}"))
        return
    if node.enum is not None and value not in node.enum:
        out.append(Violation(path, "enum", f"{value!r} is not one of the enum values"))
    if kind in ("number", "integer"):
        if node.minimum is not None and value < node.minimum:
            out.append(Violation(path, "bounds", f"{value!r} is below minimum {node.minimum}"))
        if node.maximum is not None and value > node.maximum:
            out.append(Violation(path, "bounds", f"{value!r} is above maximum {node.maximum}"))


def _type_name(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, dict):
        return "object"
    if isinstance(value, list):
        return "array"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (int, float)):
        return "number"
    return type(value).__name__


def serialize_schema(ast: SchemaNode) -> str:
    """Render the AST back to schema text.  parse(serialize(parse(s)))
    preserves field positions and metric specs."""
    return json.dumps(ast.to_raw(), indent=2, ensure_ascii=False)
