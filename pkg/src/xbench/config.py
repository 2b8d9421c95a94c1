"""Run-level configuration shared by the metric, alignment, and engine layers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import BadConfig
from .values import GOLD_MISSING_POLICIES

MATCHERS = ("deterministic", "judge")
JUDGE_KINDS = ("mock", "http")


@dataclass(frozen=True)
class JudgeConfig:
    """How to reach the LLM judge.  kind "mock" is the hermetic default."""

    kind: str = "mock"
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 60.0
    in_flight: int = 4
    max_retries: int = 2
    backoff_base: float = 0.5
    api_key_env: str = "XB_JUDGE_API_KEY"

    def __post_init__(self) -> None:
        if self.kind not in JUDGE_KINDS:
            raise BadConfig(f"unknown judge kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise BadConfig("http judge requires an endpoint")
        if self.in_flight < 1:
            raise BadConfig("in_flight must be at least 1")
        if self.max_retries < 0:
            raise BadConfig("max_retries must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    """Knobs that apply to a whole evaluation run.

    Schema-level metric params take precedence over these; these take
    precedence over preset defaults.
    """

    pass_threshold: float = 0.7
    similarity_threshold: float = 0.8
    gold_missing_policy: str = "hallucination"
    matcher: str = "deterministic"
    match_floor: float = 0.3
    alignment_batch_size: int = 25
    parallelism: int = 1
    repair: bool = False
    judge: JudgeConfig = field(default_factory=JudgeConfig)

    def __post_init__(self) -> None:
        for name in ("pass_threshold", "similarity_threshold", "match_floor"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise BadConfig(f"{name} must be a number in [0, 1], got {value!r}")
        if self.gold_missing_policy not in GOLD_MISSING_POLICIES:
            raise BadConfig(f"unknown gold_missing_policy {self.gold_missing_policy!r}")
        if self.matcher not in MATCHERS:
            raise BadConfig(f"unknown matcher {self.matcher!r}")
        if self.alignment_batch_size < 1:
            raise BadConfig("alignment_batch_size must be at least 1")
        if self.parallelism < 1:
            raise BadConfig("parallelism must be at least 1")


def config_from_dict(raw: dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a decoded JSON object; unknown keys error."""
    if not isinstance(raw, dict):
        raise BadConfig("run config must be a JSON object")
    data = dict(raw)
    judge_raw = data.pop("judge", None)
    known = {f.name for f in fields(RunConfig)} - {"judge"}
    unknown = set(data) - known
    if unknown:
        raise BadConfig(f"unknown run config keys: {sorted(unknown)}")
    try:
        config = RunConfig(**data)
    except TypeError as exc:
        raise BadConfig(str(exc)) from exc
    if judge_raw is not None:
        if not isinstance(judge_raw, dict):
            raise BadConfig("judge config must be a JSON object")
        judge_known = {f.name for f in fields(JudgeConfig)}
        judge_unknown = set(judge_raw) - judge_known
        if judge_unknown:
            raise BadConfig(f"unknown judge config keys: {sorted(judge_unknown)}")
        config = replace(config, judge=JudgeConfig(**judge_raw))
    return config


def load_config(path: str | Path) -> RunConfig:
    """Load a RunConfig from a JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise BadConfig(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
